# %% [markdown]
# # Loading a production table and composing a quality score
#
# A quality score is a weighted mean of component scores, each on a [0, 1]
# scale. This walk-through reads a small table with gaps, fills them, and
# composes the score that later stages use as the response.

# %%
import numpy as np

from qualitymine import QualityScoreSpec, compose_quality_score, impute_missing, load_table
from qualitymine import bundled

# %% [markdown]
# The bundled component table splits each validated score into seven
# characteristics. Blank out a few cells to see imputation at work.

# %%
text = bundled.read_text("score_components_example.csv")
lines = text.splitlines()
lines[3] = ",".join("" if i == 2 else v for i, v in enumerate(lines[3].split(",")))
lines[5] = ",".join("" if i == 4 else v for i, v in enumerate(lines[5].split(",")))
header = [h for h in lines if not h.startswith("#")][0].split(",")
schema = {h: "input" for h in header}
schema["standard_order"] = "ignored"
raw = load_table("\n".join(lines), schema, name="components", comment="#")
print(raw.n_rows, "rows;", sum(raw[n].n_missing for n in raw.input_names), "missing cells")

# %%
filled = impute_missing(raw, "column-median")
print(sum(filled[n].n_missing for n in filled.input_names), "missing after imputation")

# %% [markdown]
# Equal weights reproduce the validated scores. Any nonnegative weights
# can be given instead; they are normalized before use.

# %%
scored = compose_quality_score(filled, QualityScoreSpec.equal_weights(filled.input_names))
print(np.round(scored.response()[:5], 4))

weighted = compose_quality_score(
    filled, QualityScoreSpec((("Pigment fastness score", 3.0), ("Strength", 1.0)), "weighted"))
print(np.round(weighted.response()[:5], 4))
