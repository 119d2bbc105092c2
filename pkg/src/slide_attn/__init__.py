"""Local self-attention via Im2Col, feature shifts and depthwise convolution."""

from .errors import ConfigError, NumericError, ShapeError, SlideAttnError, StateError
from .tensor import (
    as_tensor,
    center_crop,
    count_ops,
    depthwise_conv2d,
    grouped_conv2d,
    matmul,
    pad_zero,
    softmax_lastdim,
)
from .im2col import Im2ColMatrix, im2col, local_attention_reference, window_offsets
from .shift import (
    ShiftKernelBank,
    build_shift_kernel_bank,
    im2col_via_dwconv,
    im2col_via_shifts,
    shift_feature,
)
from .deformed import (
    DeformedShiftParams,
    forward_merged,
    forward_two_path,
    init_deformed,
    reparameterize,
)
from .attention import (
    AttentionConfig,
    AttentionParams,
    init_attention_params,
    project_qkv,
    slide_attention_backward,
    slide_attention_forward,
)
from .gradcheck import GradReport, check_gradients, numeric_gradient

__version__ = "0.1.0"
