import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowplate import BoxDomain, build_grid, div_sup, make_channel_flow, make_flow, make_swirl_flow, make_zero_flow
from flowplate.ambient import normal_trace


def _boundary_points(rng, n, dom=BoxDomain()):
    pts = rng.uniform(0, 1, size=(n, 3)) * np.array(dom.lengths) - np.array([0, 0, dom.lz])
    axis = rng.integers(0, 3, size=n)
    side = rng.integers(0, 2, size=n)
    lo = np.array([0.0, 0.0, -dom.lz])
    hi = np.array([dom.lx, dom.ly, 0.0])
    pts[np.arange(n), axis] = np.where(side == 1, hi[axis], lo[axis])
    return pts, axis


def test_channel_zero_amplitude_is_zero():
    U = make_channel_flow(0.0)
    g = build_grid(BoxDomain(), 9)
    assert div_sup(U, g) == 0.0
    assert np.all(U.velocity(*g.coords) == 0)


def test_channel_div_sup_on_fine_grid():
    g = build_grid(BoxDomain(), 65)
    assert abs(div_sup(make_channel_flow(1.0), g) - np.pi) < 0.002


def test_channel_normal_trace_random_boundary_points():
    rng = np.random.default_rng(1)
    pts, axis = _boundary_points(rng, 200)
    vel = make_channel_flow(1.0).velocity(pts[:, 0], pts[:, 1], pts[:, 2])
    assert np.max(np.abs(vel[axis, np.arange(200)])) < 1e-15


def test_swirl_divergence_free_and_tangent():
    U = make_swirl_flow(1.3)
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, size=(100, 3)) - np.array([0, 0, 1.0])
    assert np.max(np.abs(U.divergence(pts[:, 0], pts[:, 1], pts[:, 2]))) < 1e-13
    g = build_grid(BoxDomain(), 17)
    assert np.max(np.abs(normal_trace(U, g))) < 1e-13
    assert div_sup(U, g) < 1e-13


def test_zero_amplitude_swirl_and_zero_flow():
    g = build_grid(BoxDomain(), 9)
    assert make_swirl_flow(0.0).is_zero
    assert make_zero_flow().is_zero
    assert div_sup(make_zero_flow(), g) == 0.0


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown ambient family"):
        make_flow("vortex", 1.0, BoxDomain())


def test_omega_restriction_matches_volume_evaluator():
    g = build_grid(BoxDomain(), 9)
    for U in (make_channel_flow(0.7), make_swirl_flow(0.4)):
        X, Y = g.coords2d
        top = U.velocity(*g.coords)[:2, :, :, -1]
        assert np.allclose(U.omega(X, Y), top, atol=1e-14)
        assert np.max(np.abs(U.omega_normal_component(X, Y))) < 1e-14


@pytest.mark.parametrize("U", [make_channel_flow(0.8), make_swirl_flow(1.1)], ids=["channel", "swirl"])
def test_gradient_matches_centered_differences(U):
    errs = []
    for n in (9, 17):
        g = build_grid(BoxDomain(), n)
        X, Y, Z = g.coords
        G = U.gradient(X, Y, Z)
        h = 1e-2 / n
        shifts = np.eye(3) * h
        err = 0.0
        for j in range(3):
            up = U.velocity(X + shifts[j, 0], Y + shifts[j, 1], Z + shifts[j, 2])
            dn = U.velocity(X - shifts[j, 0], Y - shifts[j, 1], Z - shifts[j, 2])
            err = max(err, np.max(np.abs((up - dn) / (2 * h) - G[:, j])))
        errs.append(err)
    assert errs[1] < errs[0] / 3


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), family=st.sampled_from(["channel", "swirl"]))
def test_normal_trace_vanishes_for_all_amplitudes(a, family):
    g = build_grid(BoxDomain(), 7)
    assert np.max(np.abs(normal_trace(make_flow(family, a, BoxDomain()), g)), initial=0.0) < 1e-12
