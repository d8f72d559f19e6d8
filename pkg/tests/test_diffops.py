import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from flowplate import BoxDomain, FluidParams, build_grid, diffops
from flowplate.errors import ConfigurationError


@pytest.fixture(scope="module")
def g9():
    return build_grid(BoxDomain(), 9)


def test_exact_on_linears(g9):
    X, Y, Z = g9.coords
    gr = diffops.grad(g9, X)
    assert np.max(np.abs(gr[0] - 1)) < 1e-13
    assert np.max(np.abs(gr[1:])) < 1e-13
    assert np.max(np.abs(diffops.div(g9, np.stack([X, Y, Z])) - 3)) < 1e-13


def test_exact_second_derivative_on_quadratics(g9):
    X, Y, Z = g9.coords
    lap = diffops.laplacian(g9, X**2 + 2 * Y**2 - Z**2)
    assert np.max(np.abs(lap - 4.0)) < 1e-10


@pytest.mark.parametrize("closure", ["second_order", "sbp"])
def test_sbp_closure_still_exact_on_linears(g9, closure):
    X, _, _ = g9.coords
    assert np.max(np.abs(diffops.partial(g9, 3 * X + 1, 0, closure) - 3)) < 1e-12


def test_advect_second_order():
    errs = []
    for n in (9, 17, 33):
        g = build_grid(BoxDomain(), n)
        X, _, _ = g.coords
        U = np.stack([np.ones(g.shape), np.zeros(g.shape), np.zeros(g.shape)])
        errs.append(np.max(np.abs(diffops.advect(g, U, np.sin(X)) - np.cos(X))))
    ratios = np.array(errs[:-1]) / errs[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_advect_vector_componentwise(g9):
    X, Y, Z = g9.coords
    U = np.stack([Y, X, np.ones_like(Z)])
    u = np.stack([X, Y, Z])
    out = diffops.advect(g9, U, u)
    assert np.allclose(out, U, atol=1e-12)


def test_strain_and_stress_shear(g9):
    X, Y, _ = g9.coords
    prm = FluidParams(nu=0.7, lam=0.3)
    u = np.stack([Y, X, np.zeros_like(X)])
    eps = diffops.strain(g9, u)
    target = np.zeros(3)
    for i in range(3):
        for j in range(3):
            target = 1.0 if {i, j} == {0, 1} else 0.0
            assert np.max(np.abs(eps[i, j] - target)) < 1e-12
    sig = diffops.stress(g9, u, prm)
    assert np.allclose(sig, 2 * prm.nu * eps, atol=1e-12)


def test_stress_identity_strain(g9):
    prm = FluidParams(nu=0.7, lam=0.3)
    u = np.stack(g9.coords)
    sig = diffops.stress(g9, u, prm)
    for i in range(3):
        for j in range(3):
            expected = 2 * prm.nu + 3 * prm.lam if i == j else 0.0
            assert np.max(np.abs(sig[i, j] - expected)) < 1e-12


def test_div_stress_two_routes_converge():
    prm = FluidParams(nu=0.6, lam=0.4)
    diffs = []
    for n in (9, 17, 33):
        g = build_grid(BoxDomain(), n)
        X, Y, Z = g.coords
        u = np.stack([np.sin(X + 2 * Y) * np.cos(Z), np.cos(X * Y) + Z**2, np.exp(0.5 * X) * np.sin(Y - Z)])
        d = diffops.div_stress(g, u, prm) - diffops.lame_operator(g, u, prm)
        # compare at interior nodes away from one-sided closures
        diffs.append(np.max(np.abs(d[:, 2:-2, 2:-2, 2:-2])))
    assert diffs[1] < diffs[0] / 3 and diffs[2] < diffs[1] / 3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_stress_and_strain_symmetric(seed):
    g = build_grid(BoxDomain(), 6)
    u = np.random.default_rng(seed).standard_normal((3,) + g.shape)
    eps = diffops.strain(g, u)
    sig = diffops.stress(g, u, FluidParams())
    assert np.array_equal(eps, np.swapaxes(eps, 0, 1))
    assert np.array_equal(sig, np.swapaxes(sig, 0, 1))


def test_summation_by_parts_defect_decays():
    defects = []
    for n in (9, 17, 33):
        g = build_grid(BoxDomain(), n)
        X, Y, Z = g.coords
        bump = (np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z)) ** 2
        f = bump * np.cos(X + Y)
        v = np.stack([bump * np.sin(Y), bump * X, bump * np.cos(Z)])
        defects.append(abs(g.integrate(np.sum(diffops.grad(g, f) * v, axis=0)) + g.integrate(f * diffops.div(g, v))))
    # centered interior stencils are exactly skew in the trapezoid inner product,
    # so for fields vanishing near the boundary the defect is at rounding level
    assert max(defects) < 1e-13


def test_field_shape_mismatch(g9):
    with pytest.raises(ConfigurationError):
        diffops.grad(g9, np.zeros((8, 8, 8)))


def test_biharmonic_zero_and_convergence():
    g = build_grid(BoxDomain(), (9, 9, 5))
    assert np.all(diffops.biharmonic(g, np.zeros(g.shape2d)) == 0)
    errs = []
    for n in (17, 33, 65):
        g = build_grid(BoxDomain(), (n, n, 5))
        X, Y = g.coords2d
        p = np.pi
        w = np.sin(p * X) ** 2 * np.sin(p * Y) ** 2
        # w = (1 - cos 2px)(1 - cos 2py) / 4
        cx, cy = np.cos(2 * p * X), np.cos(2 * p * Y)
        exact = (-(2 * p) ** 4 * cx * (1 - cy) - (2 * p) ** 4 * (1 - cx) * cy + 2 * (2 * p) ** 4 * cx * cy) / 4
        errs.append(np.max(np.abs(diffops.biharmonic(g, w) - exact)[2:-2, 2:-2]))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_biharmonic_symmetric_positive_definite():
    g = build_grid(BoxDomain(), (9, 9, 5))
    B = diffops.biharmonic_matrix(g).toarray()
    assert np.array_equal(B, B.T)
    assert sla.eigvalsh(B)[0] > 0


def test_biharmonic_equals_weighted_laplacian_square():
    g = build_grid(BoxDomain(), (9, 11, 5))
    P = diffops.plate_matrices(g)
    L = (P["lap"] @ P["embed"]).toarray()
    # the ghost-reflected Laplacian is self-adjoint in the trapezoid inner product
    W = np.diag(g.omega_weights.ravel())
    Wi = np.diag(1.0 / g.omega_weights.ravel()[g.omega_interior_mask.ravel()])
    B = Wi @ L.T @ W @ L
    assert np.max(np.abs(B - diffops.biharmonic_matrix(g).toarray())) < 1e-10 * np.max(np.abs(B))


def test_traces():
    g = build_grid(BoxDomain(), 9)
    X, Y, Z = g.coords
    assert np.array_equal(diffops.restrict_omega(g, X + Y + Z), (X + Y)[:, :, -1])
    tg = diffops.tangential_gradient(g, np.sin(np.pi * g.coords2d[0]) ** 2 * np.sin(np.pi * g.coords2d[1]) ** 2)
    assert tg.shape == (2,) + g.shape2d
    u = np.stack([X, Y, Z])
    traces = dict(diffops.boundary_normal_trace(g, u))
    assert np.allclose(traces[(0, 1)], 1.0) and np.allclose(traces[(2, 0)], 1.0)
    assert np.allclose(traces[(2, 1)], 0.0)
