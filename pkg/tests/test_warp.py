import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured
from lcmflow.errors import DimensionError
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import Image
from lcmflow.warp import (
    COLORWHEEL,
    flow_to_color,
    interpolate_middle_frame,
    inverse_warp,
    splat_flow,
)


def test_inverse_warp_zero_flow_is_identity(tex32):
    r = inverse_warp(tex32, FlowField.zeros(tex32.shape))
    assert np.array_equal(r.image.data, tex32.data)
    assert not r.oob_mask.any()


def test_inverse_warp_integer_shift_and_oob(tex32):
    r = inverse_warp(tex32, FlowField.constant(tex32.shape, 3, -2))
    assert np.array_equal(r.image.data[2:, :29], tex32.data[:30, 3:])
    assert r.oob_mask[:2].all() and r.oob_mask[:, 29:].all()
    assert not r.oob_mask[2:, :29].any()
    with pytest.raises(DimensionError):
        inverse_warp(tex32, FlowField.zeros((5, 5)))


def test_splat_tie_goes_to_smaller_index():
    w = FlowField(np.array([[1.0, 5.0, -1.0]]), np.zeros((1, 3)))
    wt, holes = splat_flow(w, 1.0)
    assert holes.tolist() == [[True, False, True]]
    assert wt.u.tolist() == [[1.0, 1.0, 1.0]]


def test_splat_nearest_to_centre_wins():
    w = FlowField(np.array([[0.8, 5.0, -0.9]]), np.zeros((1, 3)))
    wt, _ = splat_flow(w, 1.0)
    assert wt.u[0, 1] == -0.9


def test_splat_at_zero_fills_everything(rng):
    w = FlowField(rng.normal(0, 3, (10, 12)), rng.normal(0, 3, (10, 12)))
    wt, holes = splat_flow(w, 0.0)
    assert not holes.any()
    assert np.array_equal(wt.u, w.u) and np.array_equal(wt.v, w.v)


@pytest.mark.parametrize("t", [0.0, 1.0])
def test_interpolation_exact_at_endpoints(rng, t):
    I1, I2 = textured(24, 24, 1), textured(24, 24, 2)
    w = FlowField(rng.normal(0, 2, (24, 24)), rng.normal(0, 2, (24, 24)))
    out = interpolate_middle_frame(I1, I2, w, t)
    ref = I1 if t == 0 else I2
    assert np.abs(out.data - ref.data).max() <= 1e-12


@pytest.mark.parametrize("t", [0.25, 0.5, 0.9])
def test_identical_inputs_any_t(tex32, t):
    out = interpolate_middle_frame(tex32, tex32, FlowField.zeros(tex32.shape), t)
    assert np.allclose(out.data, tex32.data, atol=1e-15)


def test_shifted_pair_half_shift(tex32):
    I2 = Image(np.roll(tex32.data, 2, axis=1))
    mid = interpolate_middle_frame(tex32, I2, FlowField.constant(tex32.shape, 2, 0), 0.5)
    expected = np.roll(tex32.data, 1, axis=1)
    assert np.allclose(mid.data[:, 2:-2], expected[:, 2:-2], atol=1e-12)


def test_interpolate_rejects_bad_t(tex32):
    with pytest.raises(ValueError):
        interpolate_middle_frame(tex32, tex32, FlowField.zeros(tex32.shape), 1.5)


def test_colorwheel_shape():
    assert COLORWHEEL.shape == (55, 3)
    assert np.array_equal(COLORWHEEL[0], [1, 0, 0])


def test_zero_flow_is_white():
    c = flow_to_color(FlowField.zeros((4, 5)))
    assert c.shape == (4, 5, 3)
    assert np.all(c == 1.0)


def test_uniform_max_flow_is_saturated_hue():
    # pure +u is red, the first wheel node
    c = flow_to_color(FlowField.constant((3, 3), 2.0, 0.0), max_rad=2.0)
    assert np.allclose(c, COLORWHEEL[0])


def test_wheel_nodes_reproduced():
    # the vector whose angle lands exactly on node k takes that node's colour
    n = COLORWHEEL.shape[0]
    for k in range(0, n, 7):
        a = 2.0 * k / (n - 1) - 1.0
        u, v = -np.cos(np.pi * a), -np.sin(np.pi * a)
        c = flow_to_color(FlowField(np.array([[u]]), np.array([[v]])), max_rad=1.0)
        assert np.allclose(c[0, 0], COLORWHEEL[k], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.5, 30))
def test_color_scale_covariant(u, v, r):
    w = FlowField(np.array([[u, -v]]), np.array([[v, u]]))
    half = FlowField(w.u / 2, w.v / 2)
    assert np.allclose(flow_to_color(w, r), flow_to_color(half, r / 2), atol=1e-12)
    c = flow_to_color(w, r)
    assert c.min() >= 0.0 and c.max() <= 1.0
