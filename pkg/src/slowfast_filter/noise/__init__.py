from .paths import (
    STREAM_PARTICLES,
    STREAM_REFERENCE,
    STREAM_TRUTH,
    CovarianceSpec,
    NoisePath,
    NoiseWindow,
    ShiftedView,
    TimeGrid,
    cells_covering,
    cells_in,
    sample_path,
    shift,
    stream_key,
    substream,
)
from .convolutions import (
    backward_slow_convolution,
    fast_noise_increments,
    ou_convolution,
    propagate,
    slow_convolution,
    slow_noise_increments,
)

__all__ = [
    "STREAM_PARTICLES",
    "STREAM_REFERENCE",
    "STREAM_TRUTH",
    "CovarianceSpec",
    "NoisePath",
    "NoiseWindow",
    "ShiftedView",
    "TimeGrid",
    "cells_covering",
    "cells_in",
    "sample_path",
    "shift",
    "stream_key",
    "substream",
    "backward_slow_convolution",
    "fast_noise_increments",
    "ou_convolution",
    "propagate",
    "slow_convolution",
    "slow_noise_increments",
]
