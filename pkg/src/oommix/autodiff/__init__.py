from . import ops
from .gradcheck import NondeterministicError, grad_check, numeric_gradient, relative_error
from .losses import bce_loss, kl_one_hot_loss
from .ops import PRIMITIVES, ShapeError, forward_primitive
from .tensor import (
    ParamGroup,
    Tensor,
    as_tensor,
    backward,
    check_partition,
    default_dtype,
    gradients,
    no_grad,
    parameter,
    precision,
    set_default_dtype,
)

__all__ = [
    "ops",
    "PRIMITIVES",
    "ParamGroup",
    "ShapeError",
    "NondeterministicError",
    "Tensor",
    "as_tensor",
    "backward",
    "bce_loss",
    "check_partition",
    "default_dtype",
    "forward_primitive",
    "grad_check",
    "gradients",
    "kl_one_hot_loss",
    "no_grad",
    "numeric_gradient",
    "parameter",
    "precision",
    "relative_error",
    "set_default_dtype",
]
