"""Images, derivatives, bicubic resampling and coarse-to-fine pyramids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter

from lcmflow import kernels
from lcmflow.errors import DimensionError, FormatError

LUMA = np.array([0.299, 0.587, 0.114])

# fourth-order central difference, applied as correlation: f' ~ (f[-2] - 8f[-1] + 8f[+1] - f[+2]) / 12
DERIV_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


@dataclass(frozen=True)
class Image:
    """Single-channel float raster, ``data[y, x]``, intensities nominally in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite intensities")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ImagePyramid:
    """Resolution pyramid. ``levels[0]`` is the input image, the last entry the coarsest."""

    levels: list[Image]
    scale_factor: float = 0.75

    @property
    def level_count(self) -> int:
        return len(self.levels)

    def coarse_to_fine(self):
        """Yield ``(level_index, image)`` starting from the coarsest level."""
        for k in range(len(self.levels) - 1, -1, -1):
            yield k, self.levels[k]


@dataclass
class DerivativeSet:
    """Warped derivatives of the second frame and temporal residuals against the first."""

    Ix: np.ndarray
    Iy: np.ndarray
    Ixx: np.ndarray
    Iyy: np.ndarray
    Ixy: np.ndarray
    Iz: np.ndarray
    Ixz: np.ndarray
    Iyz: np.ndarray

    @property
    def shape(self):
        return self.Ix.shape


@dataclass
class DerivativeFields:
    """Unwarped first- and second-order derivative fields of one image."""

    I: np.ndarray
    Ix: np.ndarray
    Iy: np.ndarray
    Ixx: np.ndarray
    Iyy: np.ndarray
    Ixy: np.ndarray
    stack: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.stack = np.ascontiguousarray(
            np.stack([self.I, self.Ix, self.Iy, self.Ixx, self.Iyy, self.Ixy])
        )


def to_grayscale(raster, max_value=None) -> Image:
    """Convert an ``(H, W)``, ``(H, W, 1)`` or ``(H, W, 3)`` raster to an :class:`Image`.

    Integer rasters are divided by their dtype maximum; float rasters are
    divided by ``max_value`` when given and otherwise taken as already in [0, 1].
    """
    arr = np.asarray(raster)
    if arr.size == 0:
        raise FormatError("empty raster")
    if max_value is None:
        max_value = np.iinfo(arr.dtype).max if np.issubdtype(arr.dtype, np.integer) else 1.0
    arr = arr.astype(np.float64) / float(max_value)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
        elif arr.shape[2] == 3:
            arr = arr @ LUMA
        else:
            raise FormatError(f"unsupported channel count {arr.shape[2]}")
    elif arr.ndim != 2:
        raise FormatError(f"unsupported raster shape {arr.shape}")
    return Image(arr)


def load_image(path) -> Image:
    """Read a PNG or PGM/PPM file (8- or 16-bit) as a grayscale :class:`Image`."""
    from PIL import Image as PILImage

    path = Path(path)
    with PILImage.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.uint16 if im.mode.startswith("I;16") else np.int32)
            max_value = 65535.0
            if im.mode == "I" and arr.max(initial=0) <= 255:
                max_value = 255.0
            return to_grayscale(arr, max_value=max_value)
        if im.mode in ("RGBA", "LA", "P", "CMYK", "YCbCr"):
            im = im.convert("RGB")
        elif im.mode == "1":
            im = im.convert("L")
        arr = np.asarray(im)
    if arr.dtype == np.uint16 or arr.max(initial=0) > 255:
        return to_grayscale(arr.astype(np.uint16))
    return to_grayscale(arr.astype(np.uint8))


def save_image(img, path, bits: int = 8):
    """Write an image (or ``(H, W, 3)`` float RGB array in [0, 1]) as PNG/PGM/PPM."""
    from PIL import Image as PILImage

    arr = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    arr = np.clip(arr, 0.0, 1.0)
    if bits == 16 and arr.ndim == 2:
        out = PILImage.fromarray(np.round(arr * 65535).astype(np.uint16))
    else:
        out = PILImage.fromarray(np.round(arr * 255).astype(np.uint8))
    out.save(Path(path))


def smooth(img: Image, sigma: float) -> Image:
    """Gaussian pre-smoothing with replicated borders; ``sigma <= 0`` is a no-op."""
    if sigma <= 0:
        return img
    return Image(gaussian_filter(img.data, sigma, mode="nearest"))


def sample_bicubic(img: Image, x, y):
    """Catmull-Rom bicubic value(s) of ``img`` at ``(x, y)``, clamped to the border.

    Scalars in give a float back; arrays give an array of the same shape.
    """
    data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    xs = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(y, dtype=np.float64))
    xs, ys = np.broadcast_arrays(xs, ys)
    out = kernels.bicubic_sample(data, xs, ys)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(out[0, 0])
    return out.reshape(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def _diff_axis(a: np.ndarray, axis: int) -> np.ndarray:
    return correlate1d(a, DERIV_STENCIL, axis=axis, mode="nearest")


def _check_size(a):
    if a.shape[0] < 5 or a.shape[1] < 5:
        raise DimensionError(f"derivatives need at least 5x5 pixels, got {a.shape[1]}x{a.shape[0]}")


def dx(a: np.ndarray) -> np.ndarray:
    """Fourth-order central x-derivative with replicated borders."""
    _check_size(a)
    return _diff_axis(a, 1)


def dy(a: np.ndarray) -> np.ndarray:
    """Fourth-order central y-derivative with replicated borders."""
    _check_size(a)
    return _diff_axis(a, 0)


def derivatives(img: Image, second_order: bool = False):
    """Spatial derivatives of ``img``.

    Returns ``(Ix, Iy)``, or ``(Ix, Iy, Ixx, Iyy, Ixy)`` when ``second_order``
    is set. Second derivatives reapply the first-derivative stencil.
    """
    a = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    _check_size(a)
    ix = _diff_axis(a, 1)
    iy = _diff_axis(a, 0)
    if not second_order:
        return ix, iy
    ixx = _diff_axis(ix, 1)
    iyy = _diff_axis(iy, 0)
    ixy = _diff_axis(ix, 0)
    return ix, iy, ixx, iyy, ixy


def derivative_fields(img: Image) -> DerivativeFields:
    ix, iy, ixx, iyy, ixy = derivatives(img, second_order=True)
    return DerivativeFields(img.data, ix, iy, ixx, iyy, ixy)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def resize_bicubic(a: np.ndarray, shape) -> np.ndarray:
    """Bicubic resample of a 2-D array (or stack of arrays) to ``shape=(H, W)``.

    Pixel centres are aligned: ``x_src = (x_dst + 0.5) * W_src / W_dst - 0.5``.
    """
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape[-2:]
    oh, ow = shape
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return kernels.bicubic_sample(a, gx, gy)


def pyramid_shapes(shape, factor: float, min_dim: int):
    shapes = [tuple(shape)]
    while True:
        h, w = shapes[-1]
        nh, nw = round_half_up(h * factor), round_half_up(w * factor)
        if nh < min_dim or nw < min_dim:
            return shapes
        shapes.append((nh, nw))


def build_pyramid(img: Image, factor: float = 0.75, min_dim: int = 16) -> ImagePyramid:
    """Downsampling pyramid, each level Gaussian-smoothed then bicubic-resampled.

    Stops before a level would drop below ``min_dim`` in either dimension.
    """
    if not 0.0 < factor < 1.0:
        raise ValueError(f"pyramid factor must be in (0, 1), got {factor}")
    if min_dim < 8:
        raise ValueError(f"min_dim must be >= 8, got {min_dim}")
    sigma = 0.5 * math.sqrt(1.0 / factor**2 - 1.0)
    shapes = pyramid_shapes(img.shape, factor, min_dim)
    levels = [img]
    cur = img.data
    for shp in shapes[1:]:
        cur = resize_bicubic(gaussian_filter(cur, sigma, mode="nearest"), shp)
        levels.append(Image(cur))
    return ImagePyramid(levels, factor)


def pixel_grid(shape):
    """``(X, Y)`` coordinate arrays for an ``(H, W)`` lattice."""
    h, w = shape
    return np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))


def warped_derivatives(I1, I2, w, first=None, second=None) -> DerivativeSet:
    """Sample the second frame and its derivatives at ``X + w`` and form residuals.

    ``first`` / ``second`` may carry precomputed :class:`DerivativeFields`
    for ``I1`` / ``I2`` so repeated warps at one level skip the stencils.
    """
    if I1.shape != I2.shape or w.shape != I1.shape:
        raise DimensionError(
            f"shape mismatch: I1 {I1.shape}, I2 {I2.shape}, flow {w.shape}"
        )
    f1 = first if first is not None else derivative_fields(I1)
    f2 = second if second is not None else derivative_fields(I2)
    gx, gy = pixel_grid(I1.shape)
    s = kernels.bicubic_sample(f2.stack, gx + w.u, gy + w.v)
    i2, ix, iy, ixx, iyy, ixy = s
    return DerivativeSet(
        Ix=ix,
        Iy=iy,
        Ixx=ixx,
        Iyy=iyy,
        Ixy=ixy,
        Iz=i2 - f1.I,
        Ixz=ix - f1.Ix,
        Iyz=iy - f1.Iy,
    )
