from .adam import Adam, clip_grad_norm
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Mlp, init_mlp
from .tensor import (Tensor, add, attn_apply, attn_scores, backward, clamp,
                     concat, elu, exp, linear, matmul, minimum, mul, neg,
                     reshape, softmax, sub, take_rows, tmax, tmean, tsum)

__all__ = [
    "Adam", "clip_grad_norm", "load_checkpoint", "save_checkpoint", "Mlp",
    "init_mlp", "Tensor", "add", "attn_apply", "attn_scores", "backward",
    "clamp", "concat", "elu", "exp", "linear", "matmul", "minimum", "mul",
    "neg", "reshape", "softmax", "sub", "take_rows", "tmax", "tmean", "tsum",
]
