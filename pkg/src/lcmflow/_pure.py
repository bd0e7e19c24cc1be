"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``LCMFLOW_PURE=1`` is set. Every function matches its compiled twin to
floating-point rounding.
"""

import numpy as np


def _cr_weights(t):
    t2 = t * t
    t3 = t2 * t
    return (
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    )


def bicubic_sample(fields, xs, ys):
    """Catmull-Rom sample each of ``fields[f]`` at ``(xs, ys)`` with border clamp."""
    fields = np.asarray(fields, dtype=np.float64)
    nf, h, w = fields.shape
    x = np.clip(xs, 0.0, w - 1)
    y = np.clip(ys, 0.0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    wx = _cr_weights(x - x0)
    wy = _cr_weights(y - y0)
    cols = [np.clip(x0 - 1 + a, 0, w - 1) for a in range(4)]
    rows = [np.clip(y0 - 1 + b, 0, h - 1) for b in range(4)]
    out = np.empty((nf,) + np.shape(xs))
    for f in range(nf):
        img = fields[f]
        acc = 0.0
        for b in range(4):
            row = 0.0
            for a in range(4):
                row = row + wx[a] * img[rows[b], cols[a]]
            acc = acc + wy[b] * row
        out[f] = acc
    return out


def _shift_slices(dx, dy, h, w):
    # (destination-of-center, neighbor) slices where both pixels are in bounds
    ci = slice(max(0, -dy), min(h, h - dy))
    cj = slice(max(0, -dx), min(w, w - dx))
    ni = slice(max(0, dy), min(h, h + dy))
    nj = slice(max(0, dx), min(w, w + dx))
    return (ci, cj), (ni, nj)


def stencil_apply(center, coef, offsets, x, transpose=False):
    """``y_i = center_i x_i + sum_k coef_ik x_(i+o_k)``, or its adjoint."""
    h, w = x.shape
    out = center * x
    for k, (dx, dy) in enumerate(np.asarray(offsets)):
        c, n = _shift_slices(int(dx), int(dy), h, w)
        if c[0].start >= c[0].stop or c[1].start >= c[1].stop:
            continue
        if transpose:
            out[n] += coef[c + (k,)] * x[c]
        else:
            out[c] += coef[c + (k,)] * x[n]
    return out


def diffusion_apply(wx, wy, x):
    """Weighted 4-neighbour graph Laplacian with edge weights ``wx``/``wy``."""
    out = np.zeros_like(x)
    fx = wx * (x[:, :-1] - x[:, 1:])
    out[:, :-1] += fx
    out[:, 1:] -= fx
    fy = wy * (x[:-1, :] - x[1:, :])
    out[:-1, :] += fy
    out[1:, :] -= fy
    return out


def sor_sweeps(indptr, indices, data, b, x, omega, iters):
    """In-place SOR sweeps on a CSR matrix via triangular solves."""
    import scipy.sparse as sp
    from scipy.sparse.linalg import spsolve_triangular

    n = b.shape[0]
    a = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    d = a.diagonal()
    lower = sp.tril(a, k=-1, format="csr")
    upper = sp.triu(a, k=1, format="csr")
    m = (sp.diags(d) + omega * lower).tocsr()
    for _ in range(iters):
        rhs = omega * b - (omega * (upper @ x)) + (1.0 - omega) * d * x
        x[:] = spsolve_triangular(m, rhs, lower=True)
    return x


def _gather_pass(center, sign, coef, nbr, x):
    return center * x[:-1] + sign * np.sum(coef * x[nbr], axis=1)


def _diff_pass(coef, nbr, x):
    return np.sum(coef * (x[:-1, None] - x[nbr]), axis=1)


def ring_smooth_apply(center, lap, t, lap_t, t_t, psi, nbr, xu, xv):
    """Composed ``L^T G^T diag(psi) G L`` on flattened inputs with a trailing ghost zero.

    ``lap_t``/``t_t`` are the coefficient tables of the adjoint operators,
    re-indexed so every pass is a gather.
    """
    minus = -np.ones_like(center)
    out = []
    for x in (xu, xv):
        d = np.append(_diff_pass(lap, nbr, x), 0.0)
        s = np.append(psi * _gather_pass(minus, 1.0, t, nbr, d), 0.0)
        y = np.append(_gather_pass(minus, 1.0, t_t, nbr, s), 0.0)
        out.append(_gather_pass(center, -1.0, lap_t, nbr, y))
    return tuple(out)


def ring_delta_grad(center, lap, t, nbr, xu, xv):
    """``(L xu, L xv, G L xu, G L xv)`` on flattened inputs with a ghost zero."""
    minus = -np.ones_like(center)
    deltas = [_diff_pass(lap, nbr, x) for x in (xu, xv)]
    grads = [_gather_pass(minus, 1.0, t, nbr, np.append(d, 0.0)) for d in deltas]
    return deltas[0], deltas[1], grads[0], grads[1]
