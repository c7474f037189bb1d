# %% [markdown]
# # A blocked face-centered design and its response surface
#
# Three factors at three levels in 17 runs: two half-fraction corner
# blocks and one block of face points, each with a center run.

# %%
from qualitymine import (build_ccf_design, fit_response_surface, predict_mlr, predict_surface,
                         render_anova, render_design, render_effects)
from qualitymine import bundled

factors = bundled.factor_levels()
design = build_ccf_design(factors)
_, y = bundled.design_table()
print(render_design(design, y))

# %% [markdown]
# Effects are twice the coded coefficients. With 17 runs and 12 terms,
# five degrees of freedom remain for error.

# %%
fit = fit_response_surface(design, y)
print(render_effects(fit.effects, fit.residual_df))
print(render_anova(fit.anova))

# %% [markdown]
# The surface predicts on the natural scale with block effects averaged
# out. The linear equation fitted to production data gives a second
# opinion.

# %%
point = {"Pigment fastness": 1.0, "Machine productivity": 0.45, "Pile weight": 2729.0}
print(f"surface {predict_surface(fit, point):.6f}")
print(f"equation {predict_mlr(1.0, 0.45, 2729.0):.6f}")
