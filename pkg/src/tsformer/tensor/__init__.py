from .core import DEFAULT_DTYPE, Parameter, Tape, Tensor, active_tape, as_tensor
from .ops import (
    add,
    bilinear_resize,
    concat,
    conv2d,
    crop,
    freq_correlate,
    gelu,
    l1_loss,
    layer_norm,
    mean_all,
    mul,
    narrow,
    pad_reflect,
    pad_zero,
    prelu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_all,
    transpose,
    upsample_nearest2x,
)
from .optim import OptimizerState, adamw_step, zero_grads


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)
