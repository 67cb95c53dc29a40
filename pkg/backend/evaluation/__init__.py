"""Classification metrics and decoupling diagnostics."""
from .diagnostics import FEATURE_KINDS, PccMatrix, feature_dump, pcc_matrix
from .metrics import MetricReport, MetricSummary, accuracy, auc, evaluate, f1

__all__ = [
    "FEATURE_KINDS",
    "MetricReport",
    "MetricSummary",
    "PccMatrix",
    "accuracy",
    "auc",
    "evaluate",
    "f1",
    "feature_dump",
    "pcc_matrix",
]
