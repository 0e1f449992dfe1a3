"""FFT-feature classifiers: polynomial SVM, CART tree, pruned tree and MLP."""
from .data import CLASSES, EXCAVATOR, OTHER, Dataset, Standardizer, standardize_apply, standardize_fit
from .mlp import MlpModel, train_mlp
from .models import KINDS, ClassicModel, evaluate, fit, predict
from .svm import SvmModel, poly_kernel, train_svm
from .tree import Node, TreeModel, prune_tree, train_tree

__all__ = [
    "CLASSES", "EXCAVATOR", "OTHER", "Dataset", "Standardizer", "standardize_apply", "standardize_fit",
    "MlpModel", "train_mlp", "KINDS", "ClassicModel", "evaluate", "fit", "predict",
    "SvmModel", "poly_kernel", "train_svm", "Node", "TreeModel", "prune_tree", "train_tree",
]
