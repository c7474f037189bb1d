# %% [markdown]
# # Choosing factor settings by desirability
#
# A maximize-type desirability maps predicted quality onto [0, 1]. The
# optimizer searches the coded cube on a grid, then refines locally.

# %%
import numpy as np

from qualitymine import DesirabilitySpec, desirability, desirability_optimize, fit_response_surface
from qualitymine import bundled

design, y = bundled.design_table()
fit = fit_response_surface(design, y)

spec = DesirabilitySpec(lo=float(y.min()), hi=float(y.max()))
print([round(desirability(v, spec), 3) for v in np.linspace(y.min(), y.max(), 5)])

# %%
best = desirability_optimize(fit, spec)
print("coded", best.coded)
print("natural", best.natural)
print(f"predicted {best.predicted:.6f}, desirability {best.desirability:.3f}")

# %% [markdown]
# A stricter target shows how far the surface falls short of it.

# %%
strict = desirability_optimize(fit, DesirabilitySpec(0.85, 0.95, shape=2.0))
print(f"predicted {strict.predicted:.6f}, desirability {strict.desirability:.3f}")
