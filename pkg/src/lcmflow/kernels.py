"""Kernel backend selection.

The compiled Cython extension is used when it imports cleanly; otherwise the
numpy fallback in :mod:`lcmflow._pure` is used. Set ``LCMFLOW_PURE=1`` in the
environment to force the fallback.
"""

import logging
import os

import numpy as np

from lcmflow import _pure

logger = logging.getLogger(__name__)

_compiled = None
if not os.environ.get("LCMFLOW_PURE"):
    try:
        from lcmflow import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        logger.info("compiled kernels unavailable, using numpy fallback")

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _pure


def backend_module(name=None):
    """Return the kernel module for ``name`` ("cython" or "numpy"), default active."""
    if name is None:
        return _impl
    if name == "numpy":
        return _pure
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def bicubic_sample(fields, xs, ys):
    fields = np.ascontiguousarray(fields, dtype=np.float64)
    squeeze = fields.ndim == 2
    if squeeze:
        fields = fields[None]
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    out = _impl.bicubic_sample(fields, xs, ys)
    return out[0] if squeeze else out


def stencil_apply(center, coef, offsets, x, transpose=False):
    return _impl.stencil_apply(
        np.ascontiguousarray(center, dtype=np.float64),
        np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(x, dtype=np.float64),
        bool(transpose),
    )


def diffusion_apply(wx, wy, x):
    return _impl.diffusion_apply(
        np.ascontiguousarray(wx, dtype=np.float64),
        np.ascontiguousarray(wy, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
    )


def sor_sweeps(matrix, b, x, omega, iters):
    """Run ``iters`` SOR sweeps on CSR ``matrix`` in place on ``x``."""
    m = matrix.tocsr()
    m.sort_indices()
    return _impl.sor_sweeps(
        m.indptr.astype(np.int32),
        m.indices.astype(np.int32),
        np.ascontiguousarray(m.data, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        x,
        float(omega),
        int(iters),
    )


def _with_ghost(x, n):
    g = np.zeros(n + 1)
    g[:n] = np.ravel(x)
    return g


def ring_smooth_apply(center, lap, t, lap_t, t_t, psi, nbr, xu, xv):
    """Composed ring smoothness on two flattened components; see :class:`RingOperator`."""
    n = center.shape[0]
    psi = np.ascontiguousarray(psi, dtype=np.float64).ravel()
    return _impl.ring_smooth_apply(
        center, lap, t, lap_t, t_t, psi, nbr, _with_ghost(xu, n), _with_ghost(xv, n)
    )


def ring_delta_grad(center, lap, t, nbr, xu, xv):
    """Laplacian coordinates and their ring gradient for two flattened components."""
    n = center.shape[0]
    return _impl.ring_delta_grad(center, lap, t, nbr, _with_ghost(xu, n), _with_ghost(xv, n))
