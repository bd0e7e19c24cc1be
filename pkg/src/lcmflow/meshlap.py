"""Laplacian cotangent mesh over the flow field.

Every pixel carries a virtual 1-ring: the six neighbours of a regular grid
triangulation (north-east diagonals) spaced ``density`` pixels apart. Ring
geometry is measured at flow endpoints ``p = X + w``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from lcmflow import kernels
from lcmflow.errors import ConfigurationError, DimensionError
from lcmflow.flowfield import FlowField

# (dx, dy) in image coordinates (y down), listed in cyclic order so that
# consecutive entries span one triangle of the ring
RING_OFFSETS = np.array([(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)], dtype=np.int64)

COT_MAX = 1e4
AREA_FLOOR_REL = 1e-4
MIN_DIST = 1e-6


@dataclass(frozen=True)
class TriGridStencil:
    width: int
    height: int
    density: int

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def neighbor_offsets(self) -> np.ndarray:
        return RING_OFFSETS * self.density

    @property
    def area_floor(self) -> float:
        return AREA_FLOOR_REL * self.density**2

    def present(self) -> np.ndarray:
        """``(H, W, 6)`` mask of ring neighbours inside the image."""
        h, w = self.shape
        ys, xs = np.mgrid[0:h, 0:w]
        out = np.empty((h, w, 6), dtype=bool)
        for k, (ox, oy) in enumerate(self.neighbor_offsets):
            nx, ny = xs + ox, ys + oy
            out[..., k] = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        return out


def build_stencil(width: int, height: int, density: int) -> TriGridStencil:
    if density < 1:
        raise ConfigurationError(f"mesh density must be >= 1, got {density}")
    if not density < min(width, height) / 2:
        raise ConfigurationError(
            f"mesh density {density} too large for a {width}x{height} image"
        )
    return TriGridStencil(int(width), int(height), int(density))


def level_density(density: int, factor: float, level: int, shape) -> int:
    """Mesh spacing at pyramid ``level`` (0 = finest), kept valid for that level's size."""
    d = max(1, int(np.floor(density * factor**level + 0.5)))
    limit = int(np.ceil(min(shape) / 2)) - 1
    return max(1, min(d, limit))


def gather(a: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """``out[i, j] = a[i + dy, j + dx]`` with out-of-range entries taken from the border."""
    h, w = a.shape[:2]
    rows = np.clip(np.arange(h) + dy, 0, h - 1)
    cols = np.clip(np.arange(w) + dx, 0, w - 1)
    return a[rows[:, None], cols[None, :]]


def endpoint_positions(w: FlowField):
    """Flow endpoints ``(X + u, Y + v)``."""
    h, wd = w.shape
    xs, ys = np.meshgrid(np.arange(wd, dtype=np.float64), np.arange(h, dtype=np.float64))
    return xs + w.u, ys + w.v


def _cot(ax, ay, bx, by):
    # cot of the angle between vectors a and b; degenerate pairs saturate at +-COT_MAX
    dot = ax * bx + ay * by
    cross = np.abs(ax * by - ay * bx)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = dot / cross
    c = np.where(cross > 0, c, np.sign(dot) * COT_MAX)
    return np.clip(c, -COT_MAX, COT_MAX)


@dataclass
class RingGeometry:
    """Per-pixel ring measurements, neighbour axis last (length 6).

    ``edge`` holds endpoint differences ``p_j - p_i``; entries for absent
    neighbours are zero and must be read together with ``present``.
    """

    cot_sum: np.ndarray
    edge: np.ndarray
    edge_length: np.ndarray
    voronoi_area: np.ndarray
    present: np.ndarray
    density: int


def ring_geometry(stencil: TriGridStencil, positions, flow: FlowField | None = None,
                  literal: bool = False) -> RingGeometry:
    """Cotangent sums and Voronoi areas of every pixel's deformed ring.

    ``positions`` is ``(px, py)``, the endpoint coordinates of each pixel. With
    ``literal`` set the Voronoi area uses ``|w_i - w_j|^2`` from ``flow``
    instead of endpoint distances.
    """
    px, py = (np.asarray(a, dtype=np.float64) for a in positions)
    if px.shape != stencil.shape or py.shape != stencil.shape:
        raise DimensionError(f"positions {px.shape} do not match stencil {stencil.shape}")
    present = stencil.present()
    offs = stencil.neighbor_offsets
    ex = np.empty(present.shape)
    ey = np.empty(present.shape)
    for k, (ox, oy) in enumerate(offs):
        ex[..., k] = gather(px, ox, oy) - px
        ey[..., k] = gather(py, ox, oy) - py
    ex[~present] = 0.0
    ey[~present] = 0.0

    cot_sum = np.zeros(present.shape)
    for k in range(6):
        k1 = (k + 1) % 6
        tri = present[..., k] & present[..., k1]
        # angle at j_(k+1), opposite edge (i, j_k)
        c_at_k1 = _cot(-ex[..., k1], -ey[..., k1], ex[..., k] - ex[..., k1], ey[..., k] - ey[..., k1])
        # angle at j_k, opposite edge (i, j_(k+1))
        c_at_k = _cot(-ex[..., k], -ey[..., k], ex[..., k1] - ex[..., k], ey[..., k1] - ey[..., k])
        cot_sum[..., k] += np.where(tri, c_at_k1, 0.0)
        cot_sum[..., k1] += np.where(tri, c_at_k, 0.0)
    cot_sum = np.clip(cot_sum, -COT_MAX, COT_MAX)

    length2 = ex**2 + ey**2
    if literal:
        if flow is None:
            raise ValueError("literal Voronoi areas need the flow field")
        du = np.empty(present.shape)
        dv = np.empty(present.shape)
        for k, (ox, oy) in enumerate(offs):
            du[..., k] = gather(flow.u, ox, oy) - flow.u
            dv[..., k] = gather(flow.v, ox, oy) - flow.v
        area_len2 = np.where(present, du**2 + dv**2, 0.0)
    else:
        area_len2 = length2
    area = 0.125 * np.sum(cot_sum * area_len2, axis=-1)
    area = np.maximum(area, stencil.area_floor)
    return RingGeometry(
        cot_sum=cot_sum,
        edge=np.stack([ex, ey], axis=-1),
        edge_length=np.sqrt(length2),
        voronoi_area=area,
        present=present,
        density=stencil.density,
    )


@dataclass
class DeltaField:
    delta_u: np.ndarray
    delta_v: np.ndarray


class RingOperator:
    """Linear operators of one frozen ring geometry.

    ``delta(x)`` applies the area-normalised cotangent Laplacian; ``grad(x)``
    forms ``xbar - x`` with the inverse-distance neighbour average. Both have
    adjoints, and :meth:`lcm_apply` composes the smoothness operator
    ``L^T G^T diag(psi) G L``.
    """

    def __init__(self, stencil: TriGridStencil, geometry: RingGeometry):
        self.stencil = stencil
        self.geometry = geometry
        self.offsets = stencil.neighbor_offsets
        g = geometry
        self.lap_coef = np.where(g.present, g.cot_sum / (2.0 * g.voronoi_area[..., None]), 0.0)
        self.lap_center = self.lap_coef.sum(axis=-1)
        self.t = t_weights(geometry)
        self._neg_lap = np.ascontiguousarray(-self.lap_coef)
        self._minus_one = -np.ones(stencil.shape)
        # flat neighbour indices; absent neighbours point at a trailing ghost cell
        h, w = stencil.shape
        n = h * w
        idx = np.arange(n).reshape(h, w)
        self._nbr = np.full((h, w, 6), n, dtype=np.int32)
        for k, (ox, oy) in enumerate(self.offsets):
            m = g.present[..., k]
            self._nbr[..., k][m] = gather(idx, ox, oy)[m]
        self._nbr = self._nbr.reshape(n, 6)
        lap = np.ascontiguousarray(self.lap_coef.reshape(n, 6))
        t = np.ascontiguousarray(self.t.reshape(n, 6))
        self._flat = (np.ascontiguousarray(self.lap_center.ravel()), lap, t)
        # adjoint tables: entry (q, k) is neighbour p = nbr[q, k]'s coefficient on q,
        # stored in p's opposite slot (k + 3) % 6
        opposite = (np.arange(6) + 3) % 6
        lap_g = np.vstack([lap, np.zeros((1, 6))])
        t_g = np.vstack([t, np.zeros((1, 6))])
        self._adjoint = (
            np.ascontiguousarray(lap_g[self._nbr, opposite[None, :]]),
            np.ascontiguousarray(t_g[self._nbr, opposite[None, :]]),
        )

    @classmethod
    def from_flow(cls, stencil: TriGridStencil, w: FlowField, literal: bool = False):
        return cls(stencil, ring_geometry(stencil, endpoint_positions(w), w, literal))

    def delta(self, x):
        # difference form, so constants map to exactly zero
        return self.delta_grad_pair(x, x)[0]

    def delta_t(self, y):
        return kernels.stencil_apply(self.lap_center, self._neg_lap, self.offsets, y, True)

    def grad(self, x):
        return kernels.stencil_apply(self._minus_one, self.t, self.offsets, x)

    def grad_t(self, y):
        return kernels.stencil_apply(self._minus_one, self.t, self.offsets, y, True)

    def lcm_apply(self, psi, x):
        return self.delta_t(self.grad_t(psi * self.grad(self.delta(x))))

    def lcm_apply_pair(self, psi, xu, xv):
        """:meth:`lcm_apply` on both flow components in one fused kernel pass."""
        center, lap, t = self._flat
        lap_t, t_t = self._adjoint
        zu, zv = kernels.ring_smooth_apply(center, lap, t, lap_t, t_t, psi, self._nbr, xu, xv)
        shape = self.stencil.shape
        return zu.reshape(shape), zv.reshape(shape)

    def delta_grad_pair(self, xu, xv):
        """``(delta_u, delta_v, grad delta_u, grad delta_v)`` in one fused pass."""
        center, lap, t = self._flat
        shape = self.stencil.shape
        return tuple(a.reshape(shape) for a in
                     kernels.ring_delta_grad(center, lap, t, self._nbr, xu, xv))

    def _sparse(self, center, coef):
        h, w = self.stencil.shape
        n = h * w
        idx = np.arange(n).reshape(h, w)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [center.ravel()]
        present = self.geometry.present
        for k, (ox, oy) in enumerate(self.offsets):
            m = present[..., k]
            ii, jj = np.nonzero(m)
            rows.append(idx[ii, jj])
            cols.append(idx[ii + oy, jj + ox])
            vals.append(coef[ii, jj, k])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )

    def delta_matrix(self):
        return self._sparse(self.lap_center, self._neg_lap)

    def grad_matrix(self):
        return self._sparse(self._minus_one, self.t)


def t_weights(geometry: RingGeometry) -> np.ndarray:
    """Neighbour weights proportional to inverse endpoint distance, summing to 1."""
    inv = np.where(geometry.present, 1.0 / np.maximum(geometry.edge_length, MIN_DIST), 0.0)
    total = inv.sum(axis=-1, keepdims=True)
    return np.divide(inv, total, out=np.zeros_like(inv), where=total > 0)


def delta_field(stencil: TriGridStencil, w: FlowField, literal: bool = False) -> DeltaField:
    """Laplacian coordinates ``delta(w)`` with geometry taken at ``X + w``."""
    if w.shape != stencil.shape:
        raise DimensionError(f"flow {w.shape} does not match stencil {stencil.shape}")
    op = RingOperator.from_flow(stencil, w, literal)
    du, dv, _, _ = op.delta_grad_pair(w.u, w.v)
    return DeltaField(du, dv)


def delta_gradient(op: RingOperator, delta: DeltaField):
    """``(grad delta_u, grad delta_v)`` with ``grad d = dbar - d``."""
    return op.grad(delta.delta_u), op.grad(delta.delta_v)


def delta_divergence(stencil: TriGridStencil, delta: DeltaField, diffusivity,
                     t=None, xi: float = 1.0):
    """``-xi * Div(psi * grad delta)`` for both components.

    The divergence is the negative adjoint of the ring gradient. ``t`` holds
    the ``(H, W, 6)`` neighbour weights; by default every present neighbour
    weighs equally.
    """
    shape = stencil.shape
    if delta.delta_u.shape != shape or np.shape(diffusivity) != shape:
        raise DimensionError("delta, diffusivity and stencil shapes differ")
    present = stencil.present()
    if t is None:
        t = present / present.sum(axis=-1, keepdims=True)
    offs = stencil.neighbor_offsets
    minus_one = -np.ones(shape)
    out = []
    for d in (delta.delta_u, delta.delta_v):
        g = kernels.stencil_apply(minus_one, t, offs, d)
        out.append(xi * kernels.stencil_apply(minus_one, t, offs, diffusivity * g, True))
    return tuple(out)


def dump_ring_geometry_csv(geometry: RingGeometry, path):
    """Write one row per (pixel, present neighbour): x, y, k, nx, ny, cot_sum, voronoi_area."""
    h, w = geometry.voronoi_area.shape
    offs = RING_OFFSETS * geometry.density
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "neighbor", "nx", "ny", "cot_sum", "voronoi_area"])
        for y in range(h):
            for x in range(w):
                for k in range(6):
                    if not geometry.present[y, x, k]:
                        continue
                    writer.writerow([
                        x, y, k, x + offs[k, 0], y + offs[k, 1],
                        repr(float(geometry.cot_sum[y, x, k])),
                        repr(float(geometry.voronoi_area[y, x])),
                    ])
