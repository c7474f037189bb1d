# %% [markdown]
# # Ensembles on a synthetic production table
#
# Three process variables drive the quality score and 68 columns are pure
# noise. A random forest and a boosted ensemble are compared on a holdout,
# then asked which variables matter.

# %%
import numpy as np

from qualitymine import (TrainConfig, fit_boosted_trees, fit_random_forest, fit_regression_tree,
                         risk_report, split_train_test, variable_importance)
from qualitymine.pipeline import generate_synthetic

data = generate_synthetic(2000, 68, 0.01, seed=7)
train, test = split_train_test(data, 0.3, seed=7)
print(train.n_rows, "train rows,", test.n_rows, "test rows,", len(train.input_names), "inputs")

# %%
forest = fit_random_forest(train, TrainConfig.forest(n_trees=100, seed=1), n_jobs=2)
boosted = fit_boosted_trees(train, TrainConfig.boosting(n_trees=100, seed=1))
tree = fit_regression_tree(train, TrainConfig(min_rows_per_leaf=5))

X, y = test.matrix(forest.feature_names), test.response()
for name, model in (("tree", tree), ("forest", forest), ("boosted", boosted)):
    r = risk_report(model.predict_matrix(X), y, "test")
    print(f"{name:8s} test MSE {r.risk_estimate:.3e} (SE {r.standard_error:.1e})")

# %% [markdown]
# Importance is the variance reduction credited to each variable, scaled
# so the top one scores 100.

# %%
for name, model in (("forest", forest), ("boosted", boosted)):
    top = variable_importance(model).top(5)
    print(name, [(v, round(s, 1)) for v, s in top.entries])

# %% [markdown]
# Forest output depends only on the seed, not on the number of threads.

# %%
again = fit_random_forest(train, TrainConfig.forest(n_trees=100, seed=1), n_jobs=1)
print(np.array_equal(again.predict_matrix(X), forest.predict_matrix(X)))
