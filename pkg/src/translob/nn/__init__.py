"""Small dense-tensor core with reverse-mode gradients for the TransLOB layers."""

from .checkpoint import CheckpointError, load_checkpoint, restore_params, save_checkpoint
from .gradcheck import max_relative_error, numerical_grad
from .init import glorot_uniform
from .ops import (
    MASK_VALUE,
    add,
    affine,
    causal_mask,
    concat,
    conv1d_causal_dilated,
    cross_entropy_loss,
    dropout,
    layer_norm,
    masked_scaled_attention,
    matmul,
    multi_head_attention,
    nll,
    relu,
    reshape,
    scale,
    softmax,
    sum_squares,
    total,
)
from .optim import AdamState, adam_step, zero_grads
from .tensor import GradTape, Param, Tensor, backward, checked
