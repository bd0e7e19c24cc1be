"""Inverse warping, middle-frame synthesis and flow colour coding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from lcmflow import kernels
from lcmflow.errors import DimensionError
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import Image, pixel_grid


@dataclass
class WarpResult:
    image: Image
    oob_mask: np.ndarray


def inverse_warp(src: Image, w: FlowField) -> WarpResult:
    """``out(X) = src(X + w(X))``; ``oob_mask`` flags samples that left the image."""
    if src.shape != w.shape:
        raise DimensionError(f"image {src.shape} and flow {w.shape} differ")
    gx, gy = pixel_grid(src.shape)
    x = gx + w.u
    y = gy + w.v
    h, wd = src.shape
    oob = (x < 0) | (x > wd - 1) | (y < 0) | (y > h - 1)
    return WarpResult(Image(kernels.bicubic_sample(src.data, x, y)), oob)


def splat_flow(w: FlowField, t: float):
    """Forward-splat ``w`` to time ``t``.

    Each source pixel lands on the nearest lattice point to ``X + t w(X)``;
    among colliding sources the one closest to the pixel centre wins, ties
    going to the smaller source index. Returns ``(w_t, hole_mask)`` with
    holes filled from the nearest splatted pixel.
    """
    h, wd = w.shape
    gx, gy = pixel_grid(w.shape)
    fx = gx + t * w.u
    fy = gy + t * w.v
    tx = np.floor(fx + 0.5).astype(np.int64)
    ty = np.floor(fy + 0.5).astype(np.int64)
    inside = (tx >= 0) & (tx < wd) & (ty >= 0) & (ty < h)
    src = np.flatnonzero(inside.ravel())
    target = (ty * wd + tx).ravel()[src]
    dist = np.hypot(fx - tx, fy - ty).ravel()[src]
    order = np.lexsort((src, dist, target))
    target, src = target[order], src[order]
    first = np.ones(target.size, dtype=bool)
    first[1:] = target[1:] != target[:-1]
    u_t = np.zeros(h * wd)
    v_t = np.zeros(h * wd)
    filled = np.zeros(h * wd, dtype=bool)
    u_t[target[first]] = w.u.ravel()[src[first]]
    v_t[target[first]] = w.v.ravel()[src[first]]
    filled[target[first]] = True
    holes = ~filled.reshape(h, wd)
    u_t = u_t.reshape(h, wd)
    v_t = v_t.reshape(h, wd)
    if holes.any() and filled.any():
        _, (iy, ix) = distance_transform_edt(holes, return_indices=True)
        u_t = u_t[iy, ix]
        v_t = v_t[iy, ix]
    return FlowField(u_t, v_t), holes


def interpolate_middle_frame(I1: Image, I2: Image, w: FlowField, t: float = 0.5) -> Image:
    """Synthesise the frame at time ``t`` between ``I1`` (t=0) and ``I2`` (t=1)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if I1.shape != I2.shape or w.shape != I1.shape:
        raise DimensionError("frames and flow must share dimensions")
    w_t, _ = splat_flow(w, t)
    gx, gy = pixel_grid(I1.shape)
    a = kernels.bicubic_sample(I1.data, gx - t * w_t.u, gy - t * w_t.v)
    b = kernels.bicubic_sample(I2.data, gx + (1.0 - t) * w_t.u, gy + (1.0 - t) * w_t.v)
    return Image((1.0 - t) * a + t * b)


def make_colorwheel() -> np.ndarray:
    """Middlebury colour wheel, ``(55, 3)`` RGB in [0, 1]."""
    segments = [(15, (1, 0, 0), (1, 1, 0)),   # red -> yellow
                (6, (1, 1, 0), (0, 1, 0)),    # yellow -> green
                (4, (0, 1, 0), (0, 1, 1)),    # green -> cyan
                (11, (0, 1, 1), (0, 0, 1)),   # cyan -> blue
                (13, (0, 0, 1), (1, 0, 1)),   # blue -> magenta
                (6, (1, 0, 1), (1, 0, 0))]    # magenta -> red
    rows = []
    for n, start, end in segments:
        s = np.array(start, dtype=np.float64)
        e = np.array(end, dtype=np.float64)
        for i in range(n):
            rows.append(s + (e - s) * i / n)
    return np.array(rows)


COLORWHEEL = make_colorwheel()


def flow_to_color(w: FlowField, max_rad: float | None = None) -> np.ndarray:
    """Colour-code a flow field as ``(H, W, 3)`` RGB in [0, 1].

    Hue encodes direction, saturation ``|w| / max_rad`` (beyond 1 the colour
    is darkened). ``max_rad=None`` uses the largest magnitude in the field.
    """
    u, v = w.u, w.v
    if max_rad is None:
        max_rad = float(np.max(np.hypot(u, v), initial=0.0))
    if max_rad <= 0:
        max_rad = 1.0
    ncols = COLORWHEEL.shape[0]
    rad = np.hypot(u, v) / max_rad
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = k0 + 1
    k1[k1 == ncols] = 0
    f = (fk - k0)[..., None]
    col = (1.0 - f) * COLORWHEEL[k0] + f * COLORWHEEL[k1]
    r = rad[..., None]
    inside = r <= 1.0
    return np.where(inside, 1.0 - r * (1.0 - col), col * 0.75)
