# %% [markdown]
# # Screening, voting and expert overrides
#
# Screening keeps the inputs a forest ranks highest. Separate models then
# vote with Borda points, and an expert may swap variables before the
# designed experiment.

# %%
from qualitymine import OverrideRule, apply_overrides, screen_predictors, vote_rankings
from qualitymine import bundled
from qualitymine.pipeline import generate_synthetic

data = generate_synthetic(2000, 68, 0.01, seed=3)
screened = screen_predictors(data, 16, seed=3)
print(screened.ranking.variables[:5])

# %% [markdown]
# The published top-4 lists of the forest and boosted models.

# %%
lists = bundled.published_rankings()
for k in ("random_forest", "boosted_tree"):
    print(f"{k:14s}", lists[k])

voted = vote_rankings([lists["random_forest"], lists["boosted_tree"]], 4,
                      ["random_forest", "boosted_tree"])
print("voted", voted.variables)
for name, info in voted.provenance.items():
    print(f"  {name:22s} {info}")

# %% [markdown]
# Tufts is set by the machine from the operation plan, so it cannot be
# varied in a trial. Pigment fastness takes its place.

# %%
rule = OverrideRule("Tufts", "Pigment fastness",
                    "Tufts follows the operation plan and cannot be varied")
print(apply_overrides(voted, [rule], 3))
