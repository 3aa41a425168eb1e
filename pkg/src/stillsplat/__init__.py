"""stillsplat: static-scene reconstruction that ignores things that move.

CPU Gaussian splatting with a self-supervised transient mask predictor,
segment-and-propagate mask refinement, and masked final training. The
rasterization hot loop runs on a compiled extension when available and falls
back to numpy kernels otherwise (see ``stillsplat.splat.backend``).
"""

__version__ = "0.1.0"

from .splat.backend import ACTIVE_BACKEND  # noqa: F401
