import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from lcmflow.errors import ConfigurationError
from lcmflow.flowfield import FlowField
from lcmflow.meshlap import (
    RingOperator,
    build_stencil,
    delta_divergence,
    delta_field,
    dump_ring_geometry_csv,
    endpoint_positions,
    level_density,
    ring_geometry,
)


def random_small_case(rng, scale=0.2):
    h, w = (int(a) for a in rng.integers(5, 9, 2))
    d = int(rng.integers(1, math.ceil(min(h, w) / 2)))
    flow = FlowField(rng.normal(0, scale, (h, w)), rng.normal(0, scale, (h, w)))
    return build_stencil(w, h, d), flow


def equilateral_flow(h, w, side, density):
    # affine map taking the grid triangulation onto equilateral triangles of the given side
    s = side / density
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    px = s * xs + 0.5 * s * ys
    py = (math.sqrt(3) / 2) * s * ys
    return FlowField(px - xs, py - ys)


def test_build_stencil_bounds():
    assert build_stencil(10, 10, 4).density == 4
    with pytest.raises(ConfigurationError):
        build_stencil(10, 10, 5)
    with pytest.raises(ConfigurationError):
        build_stencil(10, 10, 0)


def test_level_density_clamped():
    assert level_density(25, 0.75, 0, (256, 256)) == 25
    assert level_density(25, 0.75, 2, (144, 144)) == 14
    assert level_density(25, 0.75, 0, (20, 20)) == 9
    assert level_density(5, 0.75, 9, (20, 20)) == 1


@pytest.mark.parametrize("density", [1, 2, 3])
def test_undeformed_grid(density):
    st_ = build_stencil(12, 11, density)
    g = ring_geometry(st_, endpoint_positions(FlowField.zeros(st_.shape)))
    y, x = 5, 5
    assert np.allclose(g.cot_sum[y, x, [0, 2, 3, 5]], 2.0, atol=1e-12)
    assert np.allclose(g.cot_sum[y, x, [1, 4]], 0.0, atol=1e-12)
    assert g.voronoi_area[y, x] == pytest.approx(density**2, abs=1e-12)


@pytest.mark.parametrize("side,density", [(1.0, 1), (3.7, 2), (10.0, 3)])
def test_equilateral_closed_form(side, density):
    st_ = build_stencil(9, 9, density)
    flow = equilateral_flow(9, 9, side, density)
    g = ring_geometry(st_, endpoint_positions(flow))
    c = 4
    assert np.allclose(g.cot_sum[c, c], 2 / math.sqrt(3), atol=1e-12)
    assert g.voronoi_area[c, c] == pytest.approx(math.sqrt(3) / 2 * side**2, abs=1e-12)
    # one third of the 1-ring hexagon
    pts = [(g.edge[c, c, k, 0], g.edge[c, c, k, 1]) for k in range(6)]
    assert abs(oracles.shoelace(pts)) / 3 == pytest.approx(g.voronoi_area[c, c], abs=1e-12)


def test_ring_geometry_matches_brute_force(rng):
    for _ in range(25):
        st_, flow = random_small_case(rng)
        px, py = endpoint_positions(flow)
        g = ring_geometry(st_, (px, py))
        cot, area = oracles.ring_geometry(px, py, st_.density)
        assert np.max(np.abs(np.where(g.present, g.cot_sum, 0) - cot)) <= 1e-12
        assert np.max(np.abs(g.voronoi_area - area)) <= 1e-12


def test_literal_area_uses_flow_differences(rng):
    st_, flow = random_small_case(rng)
    g = ring_geometry(st_, endpoint_positions(flow), flow, literal=True)
    assert np.all(g.voronoi_area >= st_.area_floor)
    # a constant flow has zero flow differences, so every area hits the floor
    const = FlowField.constant(st_.shape, 1.5, -0.5)
    g0 = ring_geometry(st_, endpoint_positions(const), const, literal=True)
    assert np.all(g0.voronoi_area == st_.area_floor)
    with pytest.raises(ValueError):
        ring_geometry(st_, endpoint_positions(flow), None, literal=True)


def test_delta_matches_loop_oracle(rng):
    for _ in range(10):
        st_, flow = random_small_case(rng, 0.3)
        d = delta_field(st_, flow)
        du, dv = oracles.delta(flow.u, flow.v, st_.density)
        assert np.allclose(d.delta_u, du, atol=1e-11)
        assert np.allclose(d.delta_v, dv, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 12), st.integers(5, 12), st.floats(-50, 50), st.floats(-50, 50))
def test_delta_exactly_zero_on_constant_flow(h, w, cu, cv):
    st_ = build_stencil(w, h, 1 + (min(h, w) > 6))
    d = delta_field(st_, FlowField.constant((h, w), cu, cv))
    assert np.all(d.delta_u == 0) and np.all(d.delta_v == 0)


def test_delta_annihilates_affine_interior(rng):
    for _ in range(10):
        b = rng.uniform(-0.3, 0.3, (2, 2))
        c = rng.normal(0, 2, 2)
        h, w, dens = 11, 12, 2
        ys, xs = np.mgrid[0:h, 0:w].astype(float)
        flow = FlowField(b[0, 0] * xs + b[0, 1] * ys + c[0], b[1, 0] * xs + b[1, 1] * ys + c[1])
        d = delta_field(build_stencil(w, h, dens), flow)
        inner = (slice(dens, h - dens), slice(dens, w - dens))
        assert np.abs(d.delta_u[inner]).max() <= 1e-10
        assert np.abs(d.delta_v[inner]).max() <= 1e-10


def test_operators_match_dense_matrices(rng):
    st_, flow = random_small_case(rng, 0.3)
    op = RingOperator.from_flow(st_, flow)
    L, G = oracles.ring_matrices(flow.u, flow.v, st_.density)
    assert np.allclose(op.delta_matrix().toarray(), L, atol=1e-11)
    assert np.allclose(op.grad_matrix().toarray(), G, atol=1e-12)
    x = rng.normal(size=st_.shape)
    y = rng.normal(size=st_.shape)
    assert np.allclose(op.delta_t(y).ravel(), L.T @ y.ravel(), atol=1e-11)
    assert np.allclose(op.grad_t(y).ravel(), G.T @ y.ravel(), atol=1e-12)
    psi = rng.random(st_.shape)
    dense = L.T @ G.T @ np.diag(psi.ravel()) @ G @ L
    zu, zv = op.lcm_apply_pair(psi, x, y)
    assert np.allclose(zu.ravel(), dense @ x.ravel(), atol=1e-9)
    assert np.allclose(zv.ravel(), dense @ y.ravel(), atol=1e-9)
    assert np.allclose(op.lcm_apply(psi, x), zu, atol=1e-10)


def test_lcm_operator_symmetric_psd(rng):
    st_, flow = random_small_case(rng, 0.3)
    op = RingOperator.from_flow(st_, flow)
    psi = rng.random(st_.shape) + 0.1
    n = st_.shape[0] * st_.shape[1]
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(op.lcm_apply(psi, e.reshape(st_.shape)).ravel())
    m = np.array(cols).T
    assert np.allclose(m, m.T, atol=1e-10)
    assert np.linalg.eigvalsh(0.5 * (m + m.T)).min() > -1e-9


def test_delta_divergence_dense_oracle(rng):
    st_, flow = random_small_case(rng, 0.3)
    d = delta_field(st_, flow)
    psi = rng.random(st_.shape)
    h, w = st_.shape
    n = h * w
    T = np.zeros((n, n))
    for y in range(h):
        for x in range(w):
            nbs = oracles.ring_neighbours(h, w, st_.density, y, x)
            for _, ny, nx in nbs:
                T[y * w + x, ny * w + nx] = 1.0 / len(nbs)
    G = T - np.eye(n)
    dense = G.T @ np.diag(psi.ravel()) @ G
    ou, ov = delta_divergence(st_, d, psi, xi=0.7)
    assert np.allclose(ou.ravel(), 0.7 * dense @ d.delta_u.ravel(), atol=1e-12)
    assert np.allclose(ov.ravel(), 0.7 * dense @ d.delta_v.ravel(), atol=1e-12)


def test_dump_csv(tmp_path):
    st_ = build_stencil(6, 5, 1)
    g = ring_geometry(st_, endpoint_positions(FlowField.zeros(st_.shape)))
    path = tmp_path / "ring.csv"
    dump_ring_geometry_csv(g, path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == int(g.present.sum())
    r = next(r for r in rows if r["x"] == "2" and r["y"] == "2" and r["neighbor"] == "0")
    assert float(r["cot_sum"]) == pytest.approx(2.0)
    assert float(r["voronoi_area"]) == pytest.approx(1.0)
