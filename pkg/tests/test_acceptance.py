"""End-to-end acceptance criteria, one test per criterion."""
import time

import numpy as np

from flowplate import BoxDomain, FluidParams, build_grid, div_sup, make_channel_flow, make_swirl_flow, make_zero_flow
from flowplate import diffops, identities, plate
from flowplate.cli import run
from flowplate.evolve import growth_bound_check, simulate
from flowplate.generator import assemble_A, assemble_gram, calibrate_epsilon
from flowplate.harmonic import estimate_D_operator_norm
from flowplate.resolvent import (PlateBForm, check_B_ellipticity, factorize_resolvent, solve_resolvent_monolithic,
                                 solve_resolvent_staged, verify_lemma_estimates)

DOM = BoxDomain()
PARAMS = FluidParams()
RES = [9, 17, 33]
ELLIPTICITY_XI = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]


def system(U, n):
    asm = assemble_A(build_grid(DOM, n), U, PARAMS)
    return asm, assemble_gram(asm)


def decays(residuals, lo, hi=np.inf, floor=0.0):
    pairs = zip(residuals, residuals[1:])
    return all(b <= floor or lo <= a / b <= hi for a, b in pairs)


def fmt(vals):
    return "[" + ", ".join(f"{v:.3g}" for v in vals) + "]"


def test_identity_suite(verdict):
    t0 = time.perf_counter()
    ok, notes = True, []
    for name, U in (("channel", make_channel_flow(0.5)), ("swirl", make_swirl_flow(0.5))):
        for rep in (identities.green_pressure_identity(U, identities.green_test_scalar(U, DOM), RES, DOM),
                    identities.green_velocity_identity(U, identities.green_test_vector(U, DOM), RES, DOM)):
            good = decays(rep.residuals, 3.5, 4.5)
            ok &= good
            notes.append(f"{rep.name}/{name} {fmt(rep.ratios)}")
    for alpha in (0.0, 0.7):
        terms = []
        for n in RES:
            g2 = build_grid(DOM, (n, n, 5))
            h = plate.FluxField(make_channel_flow(0.5), plate.normal_extension_for(g2), alpha)
            terms.append(plate.multiplier_terms(h, plate.random_clamped_field(g2, np.random.default_rng(0)), g2))
        r = [t.residual for t in terms]
        ok &= decays(r, 1.8)
        notes.append(f"multiplier/a={alpha} {fmt([a / b for a, b in zip(r, r[1:])])}")
    for name, U, alpha in (("zero", make_zero_flow(), 0.0), ("channel", make_channel_flow(0.5), 0.0),
                           ("channel", make_channel_flow(0.5), 0.5)):
        rep = identities.dissipativity_identity_residual(U, PARAMS, alpha, RES, DOM)
        ok &= decays(rep.residuals, 1.8)
        notes.append(f"dissipativity/{name}/a={alpha} {fmt(rep.ratios)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 120
    assert verdict("1 identity suite", ok, f"{elapsed:.0f}s; " + "; ".join(notes))


def test_commutator(verdict):
    def band_error(h, w, g):
        band = plate.oracle_band(g)
        a = plate.commutator_apply(h, w, g)[band]
        b = plate.commutator_oracle(h, w, g)[band]
        return np.linalg.norm(a - b) / np.linalg.norm(b)

    errs = []
    for n in (17, 33, 65):
        g = build_grid(DOM, (n, n, 5))
        X, Y = g.coords2d
        bump = plate.clamped_bump(g)
        h = plate.FluxField(make_channel_flow(1.0), plate.normal_extension_for(g), 0.7)
        errs.append(max(band_error(h, w, g) for w in (bump, bump * (1 + 0.5 * np.cos(np.pi * X) * np.sin(np.pi * Y + 0.3)))))
    g = build_grid(DOM, (33, 33, 5))
    w = plate.random_clamped_field(g, np.random.default_rng(1))
    euler = plate.commutator_apply(plate.linear_flux(), w, g)
    euler_err = np.max(np.abs(euler - 2 * diffops.plate_laplacian(g, w))) / np.max(np.abs(euler))
    ok = errs[1] <= 5e-3 and decays(errs, 3.0) and euler_err <= 1e-12
    assert verdict("2 commutator", ok, f"rel err 17/33/65 {fmt(errs)}, euler {euler_err:.1e}")


def test_dissipativity_certificate(verdict):
    ok, notes = True, []
    for name, U, n in (("channel", make_channel_flow(0.5), 7), ("channel", make_channel_flow(0.5), 9),
                       ("channel", make_channel_flow(0.5), 11), ("swirl", make_swirl_flow(0.5), 9)):
        asm, gram = system(U, n)
        cal = calibrate_epsilon(asm, gram)
        good = cal.abscissa_at_eps <= 1e-10 * cal.scale
        ok &= good
        notes.append(f"{name} {n}^3 ({asm.size} dofs) eps*={cal.eps_star:.4f} abscissa/scale={cal.abscissa_at_eps / cal.scale:.1e}")
    asm, gram = system(make_zero_flow(), 9)
    cal = calibrate_epsilon(asm, gram)
    ok &= cal.eps_star <= 1e-6
    notes.append(f"zero eps*={cal.eps_star:.1e}")
    assert verdict("3 dissipativity certificate", ok, "; ".join(notes))


def test_staged_resolvent_matches_monolithic(verdict):
    t0 = time.perf_counter()
    U = make_channel_flow(0.5)
    asm, gram = system(U, 9)
    eps = calibrate_epsilon(asm, gram).eps_star
    ell = check_B_ellipticity(asm, ELLIPTICITY_XI, eps)
    tail = [r.xi for r in ell.rows if r.xi >= ell.xi_min]
    xis = sorted({tail[0], tail[len(tail) // 2], tail[-1]})
    rng = np.random.default_rng(0)
    worst = 0.0
    for xi in xis:
        bf, lu = PlateBForm(asm, xi, eps), factorize_resolvent(asm, xi, eps)
        for _ in range(20):
            data = rng.standard_normal(asm.size)
            ys = solve_resolvent_staged(asm, xi, eps, data, bform=bf).y
            ym = solve_resolvent_monolithic(asm, xi, eps, data, lu=lu)
            worst = max(worst, gram.norm(ys - ym) / gram.norm(ym))
    elapsed = time.perf_counter() - t0
    ok = len(xis) == 3 and worst <= 1e-8 and elapsed <= 300
    assert verdict("4 staged vs monolithic resolvent", ok, f"xi={xis}, max rel diff {worst:.1e}, {elapsed:.0f}s")


def test_fluid_resolvent_estimates(verdict):
    sweep = [100.0, 316.0, 1000.0, 3160.0, 10000.0]
    ok, notes = True, []
    for name, U in (("zero", make_zero_flow()), ("channel", make_channel_flow(0.5))):
        asm, gram = system(U, 9)
        eps = calibrate_epsilon(asm, gram).eps_star
        rep = verify_lemma_estimates(asm, sweep, eps)
        ok &= rep.passes()
        notes.append(f"{name} slope {rep.slope:.3f} h1 spread {rep.h1_spread:.3f}")
    assert verdict("5 fluid resolvent estimates", ok, "; ".join(notes))


def test_plate_form_ellipticity(verdict):
    ok, notes = True, []
    for name, U in (("zero", make_zero_flow()), ("channel", make_channel_flow(0.5))):
        asm, gram = system(U, 9)
        eps = calibrate_epsilon(asm, gram).eps_star
        rep = check_B_ellipticity(asm, ELLIPTICITY_XI, eps)
        ok &= rep.passes()
        notes.append(f"{name} xi_min {rep.xi_min} min tail {min(r.coercivity for r in rep.rows if r.xi >= (rep.xi_min or np.inf)):.3f}"
                     if rep.xi_min is not None else f"{name} no xi_min")
    assert verdict("6 plate form ellipticity", ok, "; ".join(notes))


def test_growth_bound(verdict):
    t0 = time.perf_counter()
    U = make_channel_flow(0.5)
    asm, gram = system(U, 7)
    eps = calibrate_epsilon(asm, gram).eps_star
    rep = growth_bound_check(asm, gram, eps, [0.25, 0.5, 1.0, 2.0, 5.0], div_sup(U, asm.grid), dof_cap=2000)
    elapsed = time.perf_counter() - t0
    ok = rep.passes(rel=1e-6, contraction_tol=1e-8) and asm.size <= 2000 and elapsed <= 180
    worst = max(r.norm / r.bound for r in rep.rows)
    cmax = max(r.contraction_norm for r in rep.rows)
    assert verdict("7 growth bound", ok,
                   f"{asm.size} dofs, K={rep.K:.3f}, max norm/bound {worst:.3f}, max contraction norm {cmax:.6f}, {elapsed:.0f}s")


def test_dirichlet_map_bound(verdict):
    rows = estimate_D_operator_norm(DOM, [9, 17, 25])
    sups = [r.sup_ratio for r in rows]
    drift = max(sups) / min(sups)
    assert verdict("8 dirichlet map bound", drift < 2.0, f"sup ratios {fmt(sups)}, drift {drift:.3f}")


def test_coupling_fidelity(verdict):
    worst = 0.0
    for U in (make_zero_flow(), make_channel_flow(0.5), make_swirl_flow(0.5)):
        asm, gram = system(U, 7)
        eps = calibrate_epsilon(asm, gram).eps_star
        y0 = np.random.default_rng(0).standard_normal(asm.size)
        for op, scheme in ((asm.A, "implicit_euler"), (asm.Ahat(eps), "trapezoidal")):
            tr = simulate(asm, gram, y0, 1.0, 0.01, operator=op, scheme=scheme)
            worst = max(worst, float(np.max(tr.coupling)))
    assert verdict("9 coupling fidelity", worst <= 1e-10, f"max relative coupling residual {worst:.1e}")


def test_determinism(tmp_path, verdict):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("generator.n = 5\nsimulate.t_final = 0.2\nsimulate.dt = 0.01\n")
    same = True
    for cmd in ("simulate", "check-identities", "dissipativity"):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{cmd}-{tag}"
            assert run([cmd, "--config", str(cfg), "--out", str(out), "--deterministic", "--seed", "7"]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        same &= bool(outs[0]) and outs[0] == outs[1]
    assert verdict("10 determinism", same, "simulate, check-identities, dissipativity CSVs byte-identical")
