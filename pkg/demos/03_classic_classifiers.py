"""Four classifiers on FFT-100 features: polynomial SVM, CART, pruned CART, MLP.

Each is trained on the same stratified 70/15/15 split. The 15% hold-out only
matters for reduced-error pruning.
"""
# %%
import os
import tempfile

from dasdetect.classic import ClassicModel, evaluate, fit, predict
from dasdetect.datasets import make_feature_dataset

ds = make_feature_dataset(400, 1100, seed=0)
train, hold, test = ds.split(seed=0)
print("train/hold/test sizes:", len(train), len(hold), len(test))

# %%
models = {}
for kind in ("svm", "tree", "pruned_tree", "mlp"):
    models[kind] = fit(kind, train, holdout=hold, seed=0)
    r = evaluate(models[kind], test)
    print(f"{kind:12s} accuracy {100 * r['accuracy']:.2f}%  confusion {r['confusion']}")

# %% Pruning trades nodes for robustness.
full, pruned = models["tree"].estimator, models["pruned_tree"].estimator
print(f"tree nodes {full.node_count()} (depth {full.depth()}) -> {pruned.node_count()} (depth {pruned.depth()})")

# %% Models are plain JSON (standardizer included) and reload bit-exactly.
path = os.path.join(tempfile.mkdtemp(), "svm.json")
models["svm"].save(path)
again = ClassicModel.load(path)
print("reloaded:", predict(again, test.X[0]), "truth:", int(test.y[0]))
