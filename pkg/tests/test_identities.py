import numpy as np
import pytest
import sympy as sp

from flowplate import BoxDomain, FluidParams, make_channel_flow, make_swirl_flow, make_zero_flow
from flowplate.ambient import SYMBOLS
from flowplate.errors import PreconditionError
from flowplate.grid import build_grid
from flowplate.identities import (IdentityReport, ManufacturedState, dissipativity_identity_residual,
                                  dissipativity_terms, estimate_constants, green_pressure_identity,
                                  green_test_scalar, green_test_vector, green_velocity_identity,
                                  manufactured_state)

RES = [9, 17, 33]
x, y, z = SYMBOLS


def in_window(rep, lo=3.5, hi=4.5):
    return all(lo <= q <= hi for q in rep.ratios)


def test_report_ratios_and_rows():
    rep = IdentityReport("r", [9, 17], [4.0, 1.0])
    assert rep.ratios == [4.0]
    assert rep.rows()[1] == ("r", 17, 1.0, 4.0)
    assert np.isnan(rep.rows()[0][3])


@pytest.mark.parametrize("seed", [0, 3])
def test_green_channel_second_order(seed):
    dom, U = BoxDomain(), make_channel_flow(0.5)
    assert in_window(green_pressure_identity(U, green_test_scalar(U, dom, seed), RES, dom))
    assert in_window(green_velocity_identity(U, green_test_vector(U, dom, seed), RES, dom))


def test_green_swirl_second_order():
    dom, U = BoxDomain(), make_swirl_flow(0.5)
    assert in_window(green_pressure_identity(U, green_test_scalar(U, dom, 0), RES, dom))
    assert in_window(green_velocity_identity(U, green_test_vector(U, dom, 0), RES, dom))


def test_green_swirl_separable_field_is_discretely_exact():
    dom, U = BoxDomain(), make_swirl_flow(0.5)
    p = sp.sin(sp.pi * x) * sp.sin(sp.pi * y) * sp.sin(sp.pi * z)
    rep = green_pressure_identity(U, p, RES, dom)
    assert max(rep.residuals) < 1e-13


def test_green_zero_field():
    dom, U = BoxDomain(), make_channel_flow(0.5)
    rep = green_pressure_identity(U, sp.Integer(0), [9], dom)
    assert rep.residuals == [0.0]


def test_manufactured_state_satisfies_coupling():
    for U in (make_zero_flow(), make_channel_flow(0.5), make_swirl_flow(0.5)):
        assert manufactured_state(U, BoxDomain()).coupling_defect(U) == 0


def test_coupling_violation_is_rejected():
    U, dom = make_channel_flow(0.5), BoxDomain()
    st = manufactured_state(U, dom)
    bad = ManufacturedState(st.p, st.u, st.w0, st.w1 + sp.sin(sp.pi * x) * sp.sin(sp.pi * y))
    with pytest.raises(PreconditionError):
        dissipativity_terms(U, FluidParams(), 0.0, bad, build_grid(dom, 9))


def test_zero_state_gives_zero_terms():
    U, dom = make_channel_flow(0.5), BoxDomain()
    t = dissipativity_terms(U, FluidParams(), 0.0, manufactured_state(U, dom, zero=True), build_grid(dom, 9))
    assert t.lhs == 0 and t.rhs == 0


@pytest.mark.parametrize("U", [make_zero_flow(), make_channel_flow(0.5)], ids=["zero", "channel"])
def test_dissipativity_identity_converges(U):
    rep = dissipativity_identity_residual(U, FluidParams(), 0.0, RES, BoxDomain())
    assert all(q >= 1.8 for q in rep.ratios)


def test_dissipativity_with_shift_and_two_routes():
    U = make_channel_flow(0.5)
    rep = dissipativity_identity_residual(U, FluidParams(), 0.5, RES, BoxDomain())
    assert all(q >= 1.8 for q in rep.ratios)
    two = rep.extra["I2_two_route"].residuals
    assert two[-1] < two[-2]
    assert all(b <= 1e-10 for b in rep.extra["I1_boundary"])
    assert rep.extra["I1_boundary"][-1] < 0


def test_i1_boundary_vanishes_without_shift():
    U = make_channel_flow(0.5)
    rep = dissipativity_identity_residual(U, FluidParams(), 0.0, [9], BoxDomain())
    assert abs(rep.extra["I1_boundary"][0]) < 1e-12
    assert "I2_two_route" not in rep.extra


def test_estimate_constants_reproduce_terms():
    U, dom = make_channel_flow(0.5), BoxDomain()
    t = dissipativity_terms(U, FluidParams(), 0.5, manufactured_state(U, dom), build_grid(dom, 9))
    c = estimate_constants(t, delta=0.25)
    e = t.extra
    assert c["C1"] * e["lap_w0_sq"] == pytest.approx(t.I1)
    rebuilt = 0.25 * (e["stress_form"] - t.drag) + c["C2"] * (e["p_sq"] + e["lap_w0_sq"])
    assert rebuilt == pytest.approx(t.I2)
    assert np.isfinite(c["C3"])
