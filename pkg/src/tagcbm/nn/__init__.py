"""Dense layer stack with reverse-mode gradients."""
from .autograd import GradientTape, SparseMatrix, Tensor
from .checkpoint import load_params, save_params
from .gradcheck import finite_difference_check
from .layers import (
    EgoBatch,
    GcnEncoderParams,
    MlpClassifierParams,
    ego_batch,
    encode_egos,
    gcn_forward,
    mlp_forward,
    normalized_adjacency,
    readout,
    softmax,
    softmax_cross_entropy,
)
from .optim import Adam, AdamState, optimizer_step


def backward(tape: GradientTape, loss: Tensor):
    """Gradients of ``loss`` for every tensor the tape watched, in watch order."""
    return tape.gradient(loss)


__all__ = [
    "Adam",
    "AdamState",
    "EgoBatch",
    "GcnEncoderParams",
    "GradientTape",
    "MlpClassifierParams",
    "SparseMatrix",
    "Tensor",
    "backward",
    "ego_batch",
    "encode_egos",
    "finite_difference_check",
    "gcn_forward",
    "load_params",
    "mlp_forward",
    "normalized_adjacency",
    "optimizer_step",
    "readout",
    "save_params",
    "softmax",
    "softmax_cross_entropy",
]
