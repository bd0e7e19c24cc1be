"""Coarse-to-fine nested fixed-point minimisation of the LCM-flow energy.

The energy is a robust gray-value + gradient constancy data term, a robust
global smoothness term weighted by ``lam`` and the Laplacian cotangent mesh
term weighted by ``xi``. Outer iterations re-warp the second frame and freeze
the ring geometry at the current flow; inner iterations lag the diffusivities
and solve one linear system for the increment ``(du, dv)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy.sparse as sp

from lcmflow import imagecore, kernels
from lcmflow.errors import ConfigurationError, DimensionError, NumericalError
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import DerivativeSet, Image
from lcmflow.meshlap import RingOperator, TriGridStencil, build_stencil, level_density

logger = logging.getLogger(__name__)

RESIDUAL_STOP = 1e-12


@dataclass(frozen=True)
class SolverParams:
    epsilon: float = 0.001
    theta: float = 0.5
    lam: float = 0.85
    xi: float = 0.6
    mesh_density: int = 25
    pyramid_factor: float = 0.75
    outer_iters: int = 30
    inner_iters: int = 5
    linear_solver: str = "cg"
    cg_iters: int = 45
    sor_omega: float = 1.9
    min_dim: int = 16
    presmooth_sigma: float = 0.0
    literal_area: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if self.lam < 0 or self.xi < 0:
            raise ConfigurationError("lam and xi must be >= 0")
        if self.mesh_density < 1:
            raise ConfigurationError("mesh_density must be >= 1")
        if not 0.0 < self.pyramid_factor < 1.0:
            raise ConfigurationError("pyramid_factor must lie in (0, 1)")
        for name in ("outer_iters", "inner_iters", "cg_iters"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.linear_solver not in ("cg", "sor"):
            raise ConfigurationError(f"unknown linear solver {self.linear_solver!r}")
        if not 0.0 < self.sor_omega < 2.0:
            raise ConfigurationError("sor_omega must lie in (0, 2)")
        if self.min_dim < 8:
            raise ConfigurationError("min_dim must be >= 8")

    def as_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class FlowIncrement:
    du: np.ndarray
    dv: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class DiffusivityFields:
    psi_data: np.ndarray
    psi_global: np.ndarray
    psi_lap: np.ndarray


def psi(s2, epsilon):
    """Robust penalty ``sqrt(s^2 + eps^2)``, argument already squared."""
    return np.sqrt(s2 + epsilon * epsilon)


def psi_prime(s2, epsilon):
    """Derivative of :func:`psi` with respect to its squared argument."""
    return 0.5 / np.sqrt(s2 + epsilon * epsilon)


def data_residuals(deriv: DerivativeSet, du, dv):
    """Linearised gray-value and gradient residuals at increment ``(du, dv)``."""
    r0 = deriv.Iz + deriv.Ix * du + deriv.Iy * dv
    rx = deriv.Ixz + deriv.Ixx * du + deriv.Ixy * dv
    ry = deriv.Iyz + deriv.Ixy * du + deriv.Iyy * dv
    return r0, rx, ry


def flow_gradient_sq(u, v):
    """``|grad u|^2 + |grad v|^2`` with the fourth-order derivative stencil."""
    return imagecore.dx(u) ** 2 + imagecore.dy(u) ** 2 + imagecore.dx(v) ** 2 + imagecore.dy(v) ** 2


def diffusivities(deriv: DerivativeSet, w: FlowField, dw: FlowIncrement,
                  ring: RingOperator | None, params: SolverParams) -> DiffusivityFields:
    eps = params.epsilon
    r0, rx, ry = data_residuals(deriv, dw.du, dw.dv)
    psi_data = psi_prime(r0**2 + params.theta * (rx**2 + ry**2), eps)
    u = w.u + dw.du
    v = w.v + dw.dv
    if params.lam > 0:
        psi_global = psi_prime(flow_gradient_sq(u, v), eps)
    else:
        # unused; also lets single-pixel systems through
        psi_global = np.full(w.shape, psi_prime(0.0, eps))
    if ring is None:
        psi_lap = np.full(w.shape, psi_prime(0.0, eps))
    else:
        _, _, gu, gv = ring.delta_grad_pair(u, v)
        psi_lap = psi_prime(gu**2 + gv**2, eps)
    return DiffusivityFields(psi_data, psi_global, psi_lap)


class LinearSystem:
    """Symmetric system in the increments, unknowns interleaved per pixel as ``(du, dv)``.

    Rows are the linearised Euler-Lagrange equations: a 2x2 data block per
    pixel, ``lam`` times a weighted 4-neighbour diffusion, and ``xi`` times the
    composed ring operator ``L^T G^T diag(psi_lap) G L``.
    """

    def __init__(self, a11, a12, a22, rhs_u, rhs_v, wx, wy, lam, xi,
                 ring: RingOperator | None = None, psi_lap=None):
        self.a11, self.a12, self.a22 = a11, a12, a22
        self.rhs_u, self.rhs_v = rhs_u, rhs_v
        self.wx, self.wy = wx, wy
        self.lam, self.xi = lam, xi
        self.ring = ring if xi > 0 else None
        self.psi_lap = psi_lap
        self.shape = a11.shape

    @property
    def size(self):
        return 2 * self.a11.size

    @property
    def rhs(self) -> np.ndarray:
        return np.stack([self.rhs_u, self.rhs_v], axis=-1).ravel()

    def apply_smoothness(self, xu, xv):
        """Global plus ring smoothness rows applied to both flow components."""
        yu = np.zeros(self.shape)
        yv = np.zeros(self.shape)
        if self.lam > 0:
            yu += self.lam * kernels.diffusion_apply(self.wx, self.wy, xu)
            yv += self.lam * kernels.diffusion_apply(self.wx, self.wy, xv)
        if self.ring is not None:
            mu, mv = self.ring.lcm_apply_pair(self.psi_lap, xu, xv)
            yu += self.xi * mu
            yv += self.xi * mv
        return yu, yv

    def apply(self, du, dv):
        su, sv = self.apply_smoothness(du, dv)
        return self.a11 * du + self.a12 * dv + su, self.a12 * du + self.a22 * dv + sv

    def matvec_planar(self, x: np.ndarray) -> np.ndarray:
        """Matrix product on ``[du-plane, dv-plane]`` ordering."""
        n = self.a11.size
        yu, yv = self.apply(x[:n].reshape(self.shape), x[n:].reshape(self.shape))
        return np.concatenate([yu.ravel(), yv.ravel()])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.shape + (2,))
        yu, yv = self.apply(x[..., 0], x[..., 1])
        return np.stack([yu, yv], axis=-1).ravel()

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit matrix, symmetrised if rounding left it asymmetric beyond 1e-10."""
        h, w = self.shape
        n = h * w
        blocks = sp.bmat([
            [sp.diags(self.a11.ravel()), sp.diags(self.a12.ravel())],
            [sp.diags(self.a12.ravel()), sp.diags(self.a22.ravel())],
        ])
        scalar = sp.csr_matrix((n, n))
        if self.lam > 0:
            scalar = scalar + self.lam * diffusion_matrix(self.wx, self.wy)
        if self.ring is not None:
            lap = self.ring.delta_matrix()
            grad = self.ring.grad_matrix()
            gl = grad @ lap
            scalar = scalar + self.xi * (gl.T @ sp.diags(self.psi_lap.ravel()) @ gl)
        planar = blocks + sp.block_diag([scalar, scalar])
        # reorder from [u-plane, v-plane] to per-pixel interleaving
        perm = np.empty(2 * n, dtype=np.int64)
        perm[0::2] = np.arange(n)
        perm[1::2] = np.arange(n) + n
        m = planar.tocsr()[perm][:, perm].tocsr()
        asym = abs(m - m.T)
        if asym.nnz and asym.max() > 1e-10:
            logger.warning("assembled matrix asymmetric by %.3g, symmetrising", asym.max())
            m = ((m + m.T) * 0.5).tocsr()
        return m

    def diagonal(self) -> np.ndarray:
        return self.to_sparse().diagonal()


def diffusion_matrix(wx, wy) -> sp.csr_matrix:
    """Sparse form of :func:`lcmflow.kernels.diffusion_apply`."""
    h, w = wx.shape[0], wy.shape[1]
    idx = np.arange(h * w).reshape(h, w)
    i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    wt = np.concatenate([wx.ravel(), wy.ravel()])
    n = h * w
    off = sp.csr_matrix((wt, (i, j)), shape=(n, n))
    off = off + off.T
    return (sp.diags(np.asarray(off.sum(axis=1)).ravel()) - off).tocsr()


def edge_weights(psi_global):
    wx = 0.5 * (psi_global[:, :-1] + psi_global[:, 1:])
    wy = 0.5 * (psi_global[:-1, :] + psi_global[1:, :])
    return wx, wy


def assemble_system(deriv: DerivativeSet, w: FlowField, diff: DiffusivityFields,
                    ring: RingOperator | None, params: SolverParams) -> LinearSystem:
    """Linear system for the increment at lagged diffusivities ``diff``.

    ``ring`` carries the geometry frozen at ``w``; it is ignored when ``xi == 0``.
    """
    if deriv.shape != w.shape or diff.psi_data.shape != w.shape:
        raise DimensionError("derivative, flow and diffusivity shapes differ")
    th = params.theta
    pd = diff.psi_data
    a11 = pd * (deriv.Ix**2 + th * (deriv.Ixx**2 + deriv.Ixy**2))
    a12 = pd * (deriv.Ix * deriv.Iy + th * (deriv.Ixx * deriv.Ixy + deriv.Ixy * deriv.Iyy))
    a22 = pd * (deriv.Iy**2 + th * (deriv.Ixy**2 + deriv.Iyy**2))
    rhs_u = -pd * (deriv.Ix * deriv.Iz + th * (deriv.Ixx * deriv.Ixz + deriv.Ixy * deriv.Iyz))
    rhs_v = -pd * (deriv.Iy * deriv.Iz + th * (deriv.Ixy * deriv.Ixz + deriv.Iyy * deriv.Iyz))
    wx, wy = edge_weights(diff.psi_global)
    system = LinearSystem(a11, a12, a22, rhs_u, rhs_v, wx, wy, params.lam, params.xi,
                          ring, diff.psi_lap)
    # smoothness of the current flow moves to the right-hand side
    su, sv = system.apply_smoothness(w.u, w.v)
    system.rhs_u = rhs_u - su
    system.rhs_v = rhs_v - sv
    for name, arr in (("a11", a11), ("a12", a12), ("a22", a22),
                      ("rhs_u", system.rhs_u), ("rhs_v", system.rhs_v)):
        bad = ~np.isfinite(arr)
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise NumericalError(f"non-finite {name} entry at pixel (x={x}, y={y})")
    return system


def conjugate_gradient(matvec, b, iters):
    """Fixed-count CG from a zero start; stops early only on a residual below 1e-12."""
    x = np.zeros_like(b)
    r = b.copy()
    rs = float(r @ r)
    if np.sqrt(rs) < RESIDUAL_STOP:
        return x
    p = r.copy()
    for _ in range(iters):
        ap = matvec(p)
        pap = float(p @ ap)
        if not pap > 0:
            if not np.isfinite(pap):
                raise NumericalError("conjugate gradient diverged")
            break
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise NumericalError("conjugate gradient produced a non-finite residual")
        if np.sqrt(rs_new) < RESIDUAL_STOP:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def solve_linear(system: LinearSystem, method: str = "cg", iters: int = 45,
                 omega: float = 1.9) -> FlowIncrement:
    if iters < 1:
        raise ConfigurationError("iteration count must be >= 1")
    if method == "cg":
        b = np.concatenate([system.rhs_u.ravel(), system.rhs_v.ravel()])
        xp = conjugate_gradient(system.matvec_planar, b, iters)
        n = system.a11.size
        x = np.stack([xp[:n], xp[n:]], axis=-1).ravel()
    elif method == "sor":
        b = system.rhs
        x = np.zeros_like(b)
        if np.linalg.norm(b) >= RESIDUAL_STOP:
            kernels.sor_sweeps(system.to_sparse(), b, x, omega, iters)
    else:
        raise ConfigurationError(f"unknown linear solver {method!r}")
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{method} iterate became non-finite")
    x = x.reshape(system.shape + (2,))
    return FlowIncrement(x[..., 0].copy(), x[..., 1].copy())


def energy(I1: Image, I2: Image, w: FlowField, params: SolverParams,
           stencil: TriGridStencil | None = None) -> dict:
    """Discrete energy at ``w``, with ring geometry measured at ``w`` itself."""
    deriv = imagecore.warped_derivatives(I1, I2, w)
    e_data = float(np.sum(psi(deriv.Iz**2 + params.theta * (deriv.Ixz**2 + deriv.Iyz**2),
                              params.epsilon)))
    e_global = float(np.sum(psi(flow_gradient_sq(w.u, w.v), params.epsilon)))
    e_lap = 0.0
    if params.xi > 0:
        if stencil is None:
            stencil = build_stencil(w.width, w.height, params.mesh_density)
        ring = RingOperator.from_flow(stencil, w, params.literal_area)
        _, _, gu, gv = ring.delta_grad_pair(w.u, w.v)
        e_lap = float(np.sum(psi(gu**2 + gv**2, params.epsilon)))
    total = e_data + params.lam * e_global + params.xi * e_lap
    return {"data": e_data, "global": e_global, "lap": e_lap, "total": total}


def upsample_flow(w: FlowField, shape) -> FlowField:
    """Bicubic resize of ``(u, v)`` with displacements rescaled by the size ratio."""
    h, wd = w.shape
    uv = imagecore.resize_bicubic(np.stack([w.u, w.v]), shape)
    return FlowField(uv[0] * (shape[1] / wd), uv[1] * (shape[0] / h))


def solve_level(I1: Image, I2: Image, w: FlowField, params: SolverParams,
                stencil: TriGridStencil | None, callback=None, level: int = 0) -> FlowField:
    """Run the outer/inner fixed-point loops at one pyramid level."""
    f1 = imagecore.derivative_fields(I1)
    f2 = imagecore.derivative_fields(I2)
    use_lcm = params.xi > 0 and stencil is not None
    for k in range(params.outer_iters):
        deriv = imagecore.warped_derivatives(I1, I2, w, f1, f2)
        ring = RingOperator.from_flow(stencil, w, params.literal_area) if use_lcm else None
        dw = FlowIncrement.zeros(w.shape)
        for _ in range(params.inner_iters):
            diff = diffusivities(deriv, w, dw, ring, params)
            system = assemble_system(deriv, w, diff, ring, params)
            dw = solve_linear(system, params.linear_solver, params.cg_iters, params.sor_omega)
        w = FlowField(w.u + dw.du, w.v + dw.dv)
        if callback is not None:
            callback(level, k, w)
    return w


def compute_flow(I1: Image, I2: Image, params: SolverParams | None = None,
                 callback=None) -> FlowField:
    """Dense flow from ``I1`` to ``I2``: ``I2(X + w(X)) ~ I1(X)``.

    ``callback(level, outer_iteration, flow)`` is invoked after every outer
    iteration when given.
    """
    params = params or SolverParams()
    if I1.shape != I2.shape:
        raise DimensionError(f"image shapes differ: {I1.shape} vs {I2.shape}")
    if min(I1.shape) < 8:
        raise DimensionError(f"images must be at least 8x8, got {I1.width}x{I1.height}")
    if params.presmooth_sigma > 0:
        I1 = imagecore.smooth(I1, params.presmooth_sigma)
        I2 = imagecore.smooth(I2, params.presmooth_sigma)
    p1 = imagecore.build_pyramid(I1, params.pyramid_factor, params.min_dim)
    p2 = imagecore.build_pyramid(I2, params.pyramid_factor, params.min_dim)
    w = None
    for k, img1 in p1.coarse_to_fine():
        img2 = p2.levels[k]
        w = FlowField.zeros(img1.shape) if w is None else upsample_flow(w, img1.shape)
        stencil = None
        if params.xi > 0:
            d = level_density(params.mesh_density, params.pyramid_factor, k, img1.shape)
            stencil = build_stencil(img1.width, img1.height, d)
        logger.debug("level %d %s density %s", k, img1.shape, stencil and stencil.density)
        w = solve_level(img1, img2, w, params, stencil, callback, k)
    return w
