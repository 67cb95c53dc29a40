"""Minimal dense tensor engine with reverse-mode autodiff."""
from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, check_gradients, grad_check, grad_check_per_param
from .module import Module, Parameter
from .ops import OP_CATALOG
from .optim import Adam, AdamState, adam_step
from .rng import Rng
from .tensor import Tensor, backward, constant, is_grad_enabled, no_grad, record_branches

__all__ = [
    "Adam",
    "AdamState",
    "GradCheckResult",
    "Module",
    "OP_CATALOG",
    "Parameter",
    "Rng",
    "Tensor",
    "adam_step",
    "backward",
    "check_gradients",
    "constant",
    "grad_check",
    "grad_check_per_param",
    "is_grad_enabled",
    "load_checkpoint",
    "no_grad",
    "ops",
    "record_branches",
    "save_checkpoint",
]
