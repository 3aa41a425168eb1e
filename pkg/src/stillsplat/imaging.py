"""Image buffers, binary-mask morphology, resampling and quality metrics.

Conventions used throughout the package:

* images are float64 arrays of shape ``(H, W, C)`` with values in ``[0, 1]``
  (depth buffers opt out of the unit range, see :meth:`ImageBuffer.raw`),
* masks are boolean arrays of shape ``(H, W)``,
* morphology is 8-connected,
* bilinear resampling uses half-pixel-center alignment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

_STRUCT8 = np.ones((3, 3), dtype=bool)

_SSIM_WIN_SIZE = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2

PSNR_CAP_DB = 99.0
_PSNR_MSE_FLOOR = 1e-10


class DimensionMismatch(ValueError):
    """Two buffers that must share dimensions do not."""


def _check_same_shape(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(
            f"shape mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


@dataclass(frozen=True)
class ImageBuffer:
    """A ``(H, W, C)`` float image, C in {1, 3}.

    Values are clamped to ``[0, 1]`` on construction unless built through
    :meth:`raw` (used for depth buffers, which carry camera-z units).
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) image data, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite values")
        object.__setattr__(self, "data", np.clip(data, 0.0, 1.0))

    @classmethod
    def raw(cls, data: np.ndarray) -> "ImageBuffer":
        """Build a buffer without the unit-range clamp (finite-checked only)."""
        buf = object.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) image data, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image data contains non-finite values")
        object.__setattr__(buf, "data", data)
        return buf

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BinaryMask:
    """A per-pixel boolean mask of shape ``(H, W)``."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"expected (H, W) mask, got {bits.shape}")
        object.__setattr__(self, "bits", bits.astype(bool))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def union(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self.bits | other.bits)

    def intersection(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self.bits & other.bits)

    def negate(self) -> "BinaryMask":
        return BinaryMask(~self.bits)


@dataclass(frozen=True)
class ProbabilityMask:
    """Per-pixel probabilities in ``[0, 1]`` of shape ``(H, W)``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"expected (H, W) probabilities, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("probabilities contain non-finite values")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ComponentRegion:
    """One 8-connected region: raster-ordered pixels plus bounding box."""

    pixels: np.ndarray  # (K, 2) rows of (row, col), raster order
    bbox: tuple = field(default=None)  # (min_row, min_col, max_row, max_col)

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pixels", pixels)
        if self.bbox is None:
            rows, cols = pixels[:, 0], pixels[:, 1]
            object.__setattr__(
                self,
                "bbox",
                (int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
            )

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    def to_mask(self, width: int, height: int) -> BinaryMask:
        bits = np.zeros((height, width), dtype=bool)
        bits[self.pixels[:, 0], self.pixels[:, 1]] = True
        return BinaryMask(bits)


def dilate(mask: BinaryMask, iterations: int) -> BinaryMask:
    """Grow the mask by the 8-connected structuring element, ``iterations`` times."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0 or not mask.bits.any():
        return BinaryMask(mask.bits.copy())
    grown = ndimage.binary_dilation(mask.bits, structure=_STRUCT8, iterations=iterations)
    return BinaryMask(grown)


def connected_components(mask: BinaryMask) -> list:
    """Maximal 8-connected regions of set pixels, ordered by top-left-most pixel."""
    labels, n = ndimage.label(mask.bits, structure=_STRUCT8)
    regions = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        regions.append(ComponentRegion(np.column_stack([rows, cols])))
    regions.sort(key=lambda r: (int(r.pixels[0, 0]), int(r.pixels[0, 1])))
    return regions


def upsample_bilinear(src: ProbabilityMask, width: int, height: int) -> ProbabilityMask:
    """Bilinear resample to ``(width, height)`` with half-pixel-center alignment."""
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be >= 1")
    out = resample_bilinear_array(src.values, width, height)
    return ProbabilityMask(np.clip(out, 0.0, 1.0))


def resample_bilinear_array(values: np.ndarray, width: int, height: int) -> np.ndarray:
    """Half-pixel-center bilinear resample of a 2-D float array."""
    in_h, in_w = values.shape
    sx = (np.arange(width, dtype=np.float64) + 0.5) * (in_w / width) - 0.5
    sy = (np.arange(height, dtype=np.float64) + 0.5) * (in_h / height) - 0.5
    sx = np.clip(sx, 0.0, in_w - 1.0)
    sy = np.clip(sy, 0.0, in_h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = sx - x0
    fy = sy - y0
    v00 = values[np.ix_(y0, x0)]
    v01 = values[np.ix_(y0, x1)]
    v10 = values[np.ix_(y1, x0)]
    v11 = values[np.ix_(y1, x1)]
    top = v00 * (1.0 - fx)[None, :] + v01 * fx[None, :]
    bot = v10 * (1.0 - fx)[None, :] + v11 * fx[None, :]
    return top * (1.0 - fy)[:, None] + bot * fy[:, None]


def bilinear_adjoint(grad: np.ndarray, in_w: int, in_h: int) -> np.ndarray:
    """Adjoint of :func:`resample_bilinear_array`: scatter output grads to the source grid."""
    height, width = grad.shape
    sx = (np.arange(width, dtype=np.float64) + 0.5) * (in_w / width) - 0.5
    sy = (np.arange(height, dtype=np.float64) + 0.5) * (in_h / height) - 0.5
    sx = np.clip(sx, 0.0, in_w - 1.0)
    sy = np.clip(sy, 0.0, in_h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros((in_h, in_w), dtype=np.float64)
    wy0 = (1.0 - fy)[:, None]
    wy1 = fy[:, None]
    wx0 = (1.0 - fx)[None, :]
    wx1 = fx[None, :]
    yy0 = np.broadcast_to(y0[:, None], grad.shape)
    yy1 = np.broadcast_to(y1[:, None], grad.shape)
    xx0 = np.broadcast_to(x0[None, :], grad.shape)
    xx1 = np.broadcast_to(x1[None, :], grad.shape)
    np.add.at(out, (yy0, xx0), grad * wy0 * wx0)
    np.add.at(out, (yy0, xx1), grad * wy0 * wx1)
    np.add.at(out, (yy1, xx0), grad * wy1 * wx0)
    np.add.at(out, (yy1, xx1), grad * wy1 * wx1)
    return out


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    _check_same_shape(a, b)
    diff = a.data - b.data
    return float(np.mean(diff * diff))


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99."""
    err = mse(a, b)
    if err < _PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / err)))


def masked_psnr(a: ImageBuffer, b: ImageBuffer, include: BinaryMask) -> float:
    """PSNR restricted to pixels where ``include`` is set."""
    _check_same_shape(a, include)
    _check_same_shape(a, b)
    sel = include.bits
    if not sel.any():
        return PSNR_CAP_DB
    diff = (a.data - b.data)[sel]
    err = float(np.mean(diff * diff))
    if err < _PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / err)))


def _ssim_window_1d() -> np.ndarray:
    half = (_SSIM_WIN_SIZE - 1) / 2.0
    coords = np.arange(_SSIM_WIN_SIZE, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


_SSIM_WIN_1D = _ssim_window_1d()


def _corr1d_valid(img: np.ndarray, axis: int) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(img, _SSIM_WIN_SIZE, axis=axis)
    return windows @ _SSIM_WIN_1D


def _valid_filter(img: np.ndarray) -> np.ndarray:
    """Valid-mode correlation with the separable 11x11 Gaussian window."""
    return _corr1d_valid(_corr1d_valid(img, 1), 0)


def _valid_filter_adjoint(grad: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_valid_filter`: full-mode convolution (symmetric window)."""
    pad = _SSIM_WIN_SIZE - 1
    padded = np.pad(grad, ((pad, pad), (pad, pad)))
    return _corr1d_valid(_corr1d_valid(padded, 1), 0)


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean structural similarity: 11x11 Gaussian window (sigma 1.5), valid-mode."""
    value, _ = _ssim_impl(a, b, want_grad=False)
    return value


def ssim_with_grad(a: ImageBuffer, b: ImageBuffer):
    """SSIM value plus its gradient with respect to ``b`` (shape of ``b.data``)."""
    return _ssim_impl(a, b, want_grad=True)


def _ssim_impl(a: ImageBuffer, b: ImageBuffer, want_grad: bool):
    _check_same_shape(a, b)
    if a.channels != b.channels:
        raise DimensionMismatch("channel count mismatch")
    if a.height < _SSIM_WIN_SIZE or a.width < _SSIM_WIN_SIZE:
        raise ValueError("image smaller than the 11x11 SSIM window")
    nchan = a.channels
    total = 0.0
    grad = np.zeros_like(b.data) if want_grad else None
    n_positions = None
    for c in range(nchan):
        x = a.data[:, :, c]
        y = b.data[:, :, c]
        mu_x = _valid_filter(x)
        mu_y = _valid_filter(y)
        sxx = _valid_filter(x * x) - mu_x * mu_x
        syy = _valid_filter(y * y) - mu_y * mu_y
        sxy = _valid_filter(x * y) - mu_x * mu_y
        n1 = 2.0 * mu_x * mu_y + _SSIM_C1
        n2 = 2.0 * sxy + _SSIM_C2
        d1 = mu_x * mu_x + mu_y * mu_y + _SSIM_C1
        d2 = sxx + syy + _SSIM_C2
        s = (n1 * n2) / (d1 * d2)
        if n_positions is None:
            n_positions = s.size * nchan
        total += float(s.sum())
        if want_grad:
            gs = 1.0 / n_positions
            inv_dd = 1.0 / (d1 * d2)
            ds_dn1 = n2 * inv_dd
            ds_dn2 = n1 * inv_dd
            ds_dd1 = -s / d1
            ds_dd2 = -s / d2
            g_sxy = gs * ds_dn2 * 2.0
            g_syy = gs * ds_dd2
            g_mu_y = gs * (ds_dn1 * 2.0 * mu_x + ds_dd1 * 2.0 * mu_y)
            g_mu_y = g_mu_y + g_syy * (-2.0 * mu_y) + g_sxy * (-mu_x)
            grad[:, :, c] = (
                _valid_filter_adjoint(g_mu_y)
                + 2.0 * y * _valid_filter_adjoint(g_syy)
                + x * _valid_filter_adjoint(g_sxy)
            )
    value = total / n_positions
    return value, grad


def masked_ssim(a: ImageBuffer, b: ImageBuffer, include: BinaryMask) -> float:
    """SSIM of the two images with excluded pixels zero-filled."""
    _check_same_shape(a, include)
    sel = include.bits[:, :, None].astype(np.float64)
    return ssim(ImageBuffer.raw(a.data * sel), ImageBuffer.raw(b.data * sel))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    _check_same_shape(a, b)
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def read_image(path) -> ImageBuffer:
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def write_image(buf: ImageBuffer, path) -> None:
    arr = np.clip(np.round(buf.data * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    img.save(path, format="PNG")


def read_mask(path) -> BinaryMask:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr > 127)


def write_mask(mask: BinaryMask, path) -> None:
    arr = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")
