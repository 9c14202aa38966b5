"""Minimal reverse-mode autodiff stack used by every model in the package."""

from .gradcheck import GradCheckReport, check_gradients
from .io import WeightFormatError, load_weights, save_weights, sidecar_path
from .module import (
    Module,
    fc_params,
    lstm_params,
    normal_embedding,
    uniform_fan_in,
    zeros_param,
)
from .ops import (
    EmptySequenceError,
    IndexError_,
    LstmStates,
    add,
    add_n,
    concat,
    embedding_lookup,
    fc_forward,
    leaky_relu,
    lstm_forward,
    mse_loss,
    relu,
    scale,
    softmax_cross_entropy,
    softmax_probs,
    vsum,
    zero_scalar,
)
from .optim import Adam, clip_grad_norm, global_grad_norm
from .rng import Rng
from .tensor import (
    GraphError,
    NNError,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    backward,
    constant,
    set_finite_checks,
)

__all__ = [
    "Adam",
    "EmptySequenceError",
    "GradCheckReport",
    "GraphError",
    "IndexError_",
    "LstmStates",
    "Module",
    "NNError",
    "NonFiniteError",
    "Parameter",
    "Rng",
    "ShapeError",
    "Tensor",
    "WeightFormatError",
    "add",
    "add_n",
    "backward",
    "check_gradients",
    "clip_grad_norm",
    "concat",
    "constant",
    "embedding_lookup",
    "fc_forward",
    "fc_params",
    "global_grad_norm",
    "leaky_relu",
    "load_weights",
    "lstm_forward",
    "lstm_params",
    "mse_loss",
    "normal_embedding",
    "relu",
    "save_weights",
    "scale",
    "set_finite_checks",
    "sidecar_path",
    "softmax_cross_entropy",
    "softmax_probs",
    "uniform_fan_in",
    "vsum",
    "zero_scalar",
    "zeros_param",
]
