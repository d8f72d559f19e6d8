"""Batch harness: ``flowplate <subcommand> [--config PATH] [--out DIR] [--seed N] [--deterministic]``.

Configs are flat ``key = value`` files with dotted section prefixes.  Every
run writes its CSV tables and a ``manifest.json`` into the output directory.
Exit codes: 0 when every check passes, 2 when a check fails, 1 on a
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, FlowPlateError

SUBCOMMANDS = ("check-identities", "dirichlet-norm", "calibrate", "dissipativity",
               "resolvent-verify", "ellipticity", "growth-bound", "simulate")
FAMILIES = ("zero", "channel", "swirl")
SCHEMES = ("implicit_euler", "trapezoidal")


# ---- configuration ---------------------------------------------------------------
@dataclass
class ExperimentConfig:
    domain_lx: float = 1.0
    domain_ly: float = 1.0
    domain_lz: float = 1.0
    ambient_family: str = "channel"
    ambient_amplitude: float = 0.5
    fluid_nu: float = 0.5
    fluid_lam: float = 0.25
    fluid_eta: float = 1.0
    plate_alpha: str = "auto"
    generator_n: int = 7
    generator_eps: str = "auto"
    generator_include_lower_order: bool = False
    identities_resolutions: list = field(default_factory=lambda: [9, 17, 33])
    dirichlet_resolutions: list = field(default_factory=lambda: [9, 17, 25])
    resolvent_n: int = 9
    resolvent_xi: str = "auto"
    resolvent_samples: int = 20
    resolvent_lemma_xi: list = field(default_factory=lambda: [10.0, 100.0, 1000.0, 10000.0])
    ellipticity_xi: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0])
    growth_times: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 5.0])
    simulate_t_final: float = 1.0
    simulate_dt: float = 0.01
    simulate_scheme: str = "implicit_euler"
    simulate_operator: str = "A"
    run_seed: int = 0
    run_out: str = "flowplate-out"
    run_deterministic: bool = False

    def to_dotted(self):
        out = {}
        for f in fields(self):
            section, _, name = f.name.partition("_")
            v = getattr(self, f.name)
            out[f"{section}.{name}"] = v
        return out


def _key_to_attr(key):
    section, dot, name = key.partition(".")
    return f"{section}_{name}" if dot else None


def _parse_bool(s):
    t = s.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_value(attr, raw):
    default = getattr(ExperimentConfig(), attr)
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, list):
        kind = type(default[0])
        return [kind(float(v)) if kind is int else kind(v) for v in raw.replace(",", " ").split()]
    return raw.strip()


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = ExperimentConfig()
    names = {f.name for f in fields(cfg)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        attr = _key_to_attr(key)
        if attr not in names:
            raise ConfigurationError(f"{source}:{lineno}: unknown key '{key}'")
        try:
            setattr(cfg, attr, _parse_value(attr, raw))
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for '{key}': {exc}") from exc
    validate_config(cfg)
    return cfg


def load_config(path):
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def _auto_or_nonneg(value, key):
    if str(value).strip().lower() == "auto":
        return "auto"
    try:
        v = float(value)
    except ValueError:
        raise ConfigurationError(f"{key} must be 'auto' or a number, got {value!r}") from None
    if not np.isfinite(v) or v < 0:
        raise ConfigurationError(f"{key} must be nonnegative, got {v}")
    return v


def validate_config(cfg):
    from .diffops import FluidParams
    from .grid import BoxDomain

    BoxDomain(cfg.domain_lx, cfg.domain_ly, cfg.domain_lz)
    FluidParams(cfg.fluid_nu, cfg.fluid_lam, cfg.fluid_eta)
    if cfg.ambient_family not in FAMILIES:
        raise ConfigurationError(f"ambient.family must be one of {FAMILIES}, got {cfg.ambient_family!r}")
    if not np.isfinite(cfg.ambient_amplitude):
        raise ConfigurationError("ambient.amplitude must be finite")
    cfg.plate_alpha = _auto_or_nonneg(cfg.plate_alpha, "plate.alpha")
    cfg.generator_eps = _auto_or_nonneg(cfg.generator_eps, "generator.eps")
    if str(cfg.resolvent_xi).strip().lower() != "auto":
        xs = [float(v) for v in str(cfg.resolvent_xi).replace(",", " ").split()]
        if not xs or any(x <= 0 for x in xs):
            raise ConfigurationError("resolvent.xi must be 'auto' or a list of positive numbers")
    for key in ("generator_n", "resolvent_n"):
        if getattr(cfg, key) < 5:
            raise ConfigurationError(f"{key.replace('_', '.', 1)} must be at least 5")
    for key in ("identities_resolutions", "dirichlet_resolutions"):
        vals = getattr(cfg, key)
        if len(vals) < 2 or min(vals) < 5:
            raise ConfigurationError(f"{key.replace('_', '.', 1)} needs at least two resolutions >= 5")
    if cfg.resolvent_samples < 1:
        raise ConfigurationError("resolvent.samples must be positive")
    if cfg.simulate_dt <= 0 or cfg.simulate_t_final <= 0:
        raise ConfigurationError("simulate.dt and simulate.t_final must be positive")
    if cfg.simulate_scheme not in SCHEMES:
        raise ConfigurationError(f"simulate.scheme must be one of {SCHEMES}")
    if cfg.simulate_operator not in ("A", "Ahat"):
        raise ConfigurationError("simulate.operator must be 'A' or 'Ahat'")
    if any(t <= 0 for t in cfg.growth_times):
        raise ConfigurationError("growth.times must be positive")
    return cfg


# ---- shared setup ----------------------------------------------------------------
class _Context:
    """Lazily built objects shared by the subcommands."""

    def __init__(self, cfg):
        from .ambient import make_flow
        from .diffops import FluidParams
        from .grid import BoxDomain

        self.cfg = cfg
        self.domain = BoxDomain(cfg.domain_lx, cfg.domain_ly, cfg.domain_lz)
        self.params = FluidParams(cfg.fluid_nu, cfg.fluid_lam, cfg.fluid_eta)
        self.U = make_flow(cfg.ambient_family, cfg.ambient_amplitude, self.domain)
        self._cache = {}

    def alpha(self, grid):
        from .plate import alpha_min, normal_extension_for

        if self.cfg.plate_alpha == "auto":
            return alpha_min(self.U, normal_extension_for(grid), grid)
        return float(self.cfg.plate_alpha)

    def system(self, n):
        """``(asm, gram, alpha)`` on an ``n``-per-axis grid."""
        if n in self._cache:
            return self._cache[n]
        from .generator import AssemblyOptions, assemble_A, assemble_gram
        from .grid import build_grid
        from .harmonic import DirichletSolver
        from .plate import normal_extension_for

        grid = build_grid(self.domain, n)
        asm = assemble_A(grid, self.U, self.params, AssemblyOptions(self.cfg.generator_include_lower_order))
        alpha = self.alpha(grid)
        if alpha > 0:
            gram = assemble_gram(asm, normal_extension_for(grid), alpha, DirichletSolver(grid))
        else:
            gram = assemble_gram(asm)
        self._cache[n] = (asm, gram, alpha)
        return self._cache[n]

    def eps(self, n):
        """``(eps, calibration or None)``."""
        key = ("eps", n)
        if key not in self._cache:
            from .generator import calibrate_epsilon

            asm, gram, _ = self.system(n)
            if self.cfg.generator_eps == "auto":
                cal = calibrate_epsilon(asm, gram)
                self._cache[key] = (cal.eps_star, cal)
            else:
                self._cache[key] = (float(self.cfg.generator_eps), None)
        return self._cache[key]


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    checks: dict = field(default_factory=dict)  # name -> bool
    summary: dict = field(default_factory=dict)


def _decays(report, lo, hi=float("inf"), floor=1e-12):
    """Ratio window, or an identity that holds to rounding at every resolution."""
    if max(report.residuals) <= floor:
        return True
    return all(lo <= q <= hi for q in report.ratios)


def _identity_rows(report, ok):
    return [(report.name, n, r, q, int(ok)) for (_, n, r, q) in report.rows()]


# ---- subcommands -----------------------------------------------------------------
def cmd_check_identities(ctx, rng):
    from . import identities, plate
    from .grid import build_grid

    cfg, U, dom = ctx.cfg, ctx.U, ctx.domain
    res = cfg.identities_resolutions
    out = Outcome()
    rows = []
    p_expr = identities.green_test_scalar(U, dom, seed=cfg.run_seed)
    u_expr = identities.green_test_vector(U, dom, seed=cfg.run_seed)
    for rep in (identities.green_pressure_identity(U, p_expr, res, dom),
                identities.green_velocity_identity(U, u_expr, res, dom)):
        ok = _decays(rep, 3.5, 4.5)
        out.checks[rep.name] = ok
        rows += _identity_rows(rep, ok)

    mult = []
    for n in res:
        g2 = build_grid(dom, (n, n, 5))
        h = plate.FluxField(U, plate.normal_extension_for(g2), ctx.alpha(g2))
        # fixed asymmetric field: symmetric bumps satisfy the discrete identity exactly
        w = plate.random_clamped_field(g2, np.random.default_rng(0))
        mult.append(plate.multiplier_terms(h, w, g2))
    rep = identities.IdentityReport("flux_multiplier", list(res), [abs(m.residual) for m in mult])
    floor = 1e-12 * max(1.0, max(abs(m.lhs) for m in mult))
    ok = _decays(rep, 1.8, floor=floor)
    out.checks[rep.name] = ok
    rows += _identity_rows(rep, ok)

    alpha = ctx.alpha(build_grid(dom, res[-1]))
    dis = identities.dissipativity_identity_residual(U, ctx.params, alpha, res, dom)
    ok = _decays(dis, 1.8)
    out.checks["dissipativity"] = ok
    rows += _identity_rows(dis, ok)
    i1b = dis.extra["I1_boundary"]
    out.checks["I1_boundary_nonpositive"] = all(b <= 1e-10 for b in i1b)
    if "I2_two_route" in dis.extra:
        rows += _identity_rows(dis.extra["I2_two_route"], 1)
    out.tables["identities"] = (("identity", "resolution", "residual", "ratio", "pass"), rows)

    est = []
    for n, t in zip(res, dis.extra["terms"]):
        c = identities.estimate_constants(t)
        est.append((n, t.I1, t.I2, t.I3, t.I1_boundary, c["C1"], c["C2"], c["C3"]))
    out.tables["estimates"] = (("resolution", "I1", "I2", "I3", "I1_boundary", "C1", "C2", "C3"), est)
    out.summary["alpha"] = alpha
    return out


def cmd_dirichlet_norm(ctx, rng):
    from .harmonic import estimate_D_operator_norm

    rows = estimate_D_operator_norm(ctx.domain, ctx.cfg.dirichlet_resolutions, seed=ctx.cfg.run_seed)
    sups = [r.sup_ratio for r in rows]
    out = Outcome()
    out.tables["dirichlet_norm"] = (("resolution", "sup_ratio", "top_mode_ratio", "probes"),
                                    [(r.resolution, r.sup_ratio, r.top_mode_ratio, r.probes) for r in rows])
    out.checks["bounded_drift"] = max(sups) / min(sups) < 2.0
    out.summary["drift"] = max(sups) / min(sups)
    return out


def _calibration_outcome(ctx):
    n = ctx.cfg.generator_n
    asm, gram, alpha = ctx.system(n)
    eps, cal = ctx.eps(n)
    out = Outcome()
    out.summary.update(n=n, dofs=asm.size, alpha=alpha, eps=eps)
    if cal is not None:
        out.tables["calibration"] = (("eps", "abscissa"), cal.curve)
        out.summary.update(abscissa_unshifted=cal.abscissa_unshifted, abscissa_at_eps=cal.abscissa_at_eps,
                           scale=cal.scale)
        out.checks["certified"] = cal.abscissa_at_eps <= 1e-10 * cal.scale
        if ctx.U.is_zero and alpha == 0:
            out.checks["zero_flow_eps"] = cal.eps_star <= 1e-6
    return asm, gram, eps, out


def cmd_calibrate(ctx, rng):
    return _calibration_outcome(ctx)[3]


def cmd_dissipativity(ctx, rng):
    from .generator import dissipation_rate

    asm, gram, eps, out = _calibration_outcome(ctx)
    rows = []
    scale = out.summary.get("scale", 1.0)
    worst = -np.inf
    for k in range(100):
        y = rng.standard_normal(asm.size)
        r = dissipation_rate(asm, gram, eps, y) / gram.norm(y) ** 2
        worst = max(worst, r)
        rows.append((k, r))
    out.tables["dissipation_rates"] = (("sample", "rate_over_norm_sq"), rows)
    out.checks["nonpositive_rates"] = worst <= 1e-10 * scale
    out.summary["max_rate"] = worst
    return out


def _xi_values(ctx, asm, eps):
    from .resolvent import check_B_ellipticity

    if str(ctx.cfg.resolvent_xi).strip().lower() != "auto":
        return [float(v) for v in str(ctx.cfg.resolvent_xi).replace(",", " ").split()], None
    rep = check_B_ellipticity(asm, ctx.cfg.ellipticity_xi, eps)
    if rep.xi_min is None:
        return [], rep
    tail = [r.xi for r in rep.rows if r.xi >= rep.xi_min]
    picks = [tail[0], tail[len(tail) // 2], tail[-1]]
    return sorted(set(picks)), rep


def cmd_resolvent_verify(ctx, rng):
    from .resolvent import (PlateBForm, factorize_resolvent, solve_resolvent_monolithic, solve_resolvent_staged,
                            verify_lemma_estimates)

    n = ctx.cfg.resolvent_n
    asm, gram, _ = ctx.system(n)
    eps, _ = ctx.eps(n)
    out = Outcome()
    xis, ell = _xi_values(ctx, asm, eps)
    if not xis:
        out.checks["xi_min_found"] = False
        return out
    rows = []
    worst = 0.0
    for xi in xis:
        bf = PlateBForm(asm, xi, eps)
        lu = factorize_resolvent(asm, xi, eps)
        for k in range(ctx.cfg.resolvent_samples):
            data = rng.standard_normal(asm.size)
            ys = solve_resolvent_staged(asm, xi, eps, data, bform=bf).y
            ym = solve_resolvent_monolithic(asm, xi, eps, data, lu=lu)
            rel = gram.norm(ys - ym) / gram.norm(ym)
            worst = max(worst, rel)
            rows.append((xi, k, rel))
    out.tables["resolvent"] = (("xi", "sample", "relative_m_norm_difference"), rows)
    out.checks["staged_matches_monolithic"] = worst <= 1e-8
    lem = verify_lemma_estimates(asm, ctx.cfg.resolvent_lemma_xi, eps)
    out.tables["lemma"] = (("xi", "p_norm", "v_h1"), [(r.xi, r.p_norm, r.v_h1) for r in lem.rows])
    out.checks["lemma_estimates"] = lem.passes()
    out.summary.update(n=n, eps=eps, xi=xis, max_difference=worst, slope=lem.slope, h1_spread=lem.h1_spread)
    return out


def cmd_ellipticity(ctx, rng):
    from .resolvent import check_B_ellipticity

    n = ctx.cfg.resolvent_n
    asm, _, _ = ctx.system(n)
    eps, _ = ctx.eps(n)
    rep = check_B_ellipticity(asm, ctx.cfg.ellipticity_xi, eps)
    out = Outcome()
    out.tables["ellipticity"] = (("xi", "coercivity"), [(r.xi, r.coercivity) for r in rep.rows])
    out.checks["coercive_tail"] = rep.passes()
    out.summary.update(xi_min=rep.xi_min, eps=eps)
    return out


def cmd_growth_bound(ctx, rng):
    from .ambient import div_sup
    from .evolve import growth_bound_check

    n = ctx.cfg.generator_n
    asm, gram, alpha = ctx.system(n)
    eps, _ = ctx.eps(n)
    ds = div_sup(ctx.U, asm.grid)
    rep = growth_bound_check(asm, gram, eps, ctx.cfg.growth_times, ds)
    out = Outcome()
    out.tables["growth"] = (("t", "norm", "bound", "contraction_norm"),
                            [(r.t, r.norm, r.bound, r.contraction_norm) for r in rep.rows])
    out.checks["growth_bound"] = rep.passes()
    out.summary.update(K=rep.K, eps=eps, div_sup=ds, alpha=alpha, dofs=asm.size)
    return out


def cmd_simulate(ctx, rng):
    from .evolve import simulate

    cfg = ctx.cfg
    asm, gram, _ = ctx.system(cfg.generator_n)
    op = asm.A
    if cfg.simulate_operator == "Ahat":
        op = asm.Ahat(ctx.eps(cfg.generator_n)[0])
    y0 = rng.standard_normal(asm.size)
    tr = simulate(asm, gram, y0, cfg.simulate_t_final, cfg.simulate_dt, operator=op, scheme=cfg.simulate_scheme)
    out = Outcome()
    out.tables["trajectory"] = (("t", "energy", "standard_norm", "coupling_residual"), tr.rows())
    out.checks["coupling_fidelity"] = float(np.max(tr.coupling)) <= 1e-10
    out.summary.update(max_coupling=float(np.max(tr.coupling)), final_energy=float(tr.energy[-1]))
    return out


COMMANDS = {
    "check-identities": cmd_check_identities,
    "dirichlet-norm": cmd_dirichlet_norm,
    "calibrate": cmd_calibrate,
    "dissipativity": cmd_dissipativity,
    "resolvent-verify": cmd_resolvent_verify,
    "ellipticity": cmd_ellipticity,
    "growth-bound": cmd_growth_bound,
    "simulate": cmd_simulate,
}


# ---- output ----------------------------------------------------------------------
def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.15e}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else str(float(v))
    return v


def _versions():
    import scipy
    import sympy

    return {"flowplate": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__}


def write_manifest(out_dir, payload):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _thread_limit(deterministic):
    from threadpoolctl import threadpool_limits

    if deterministic:
        return threadpool_limits(1)
    env = os.environ.get("FLOWPLATE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"FLOWPLATE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError("FLOWPLATE_THREADS must be positive")
        return threadpool_limits(n)
    return threadpool_limits(None)


def build_parser():
    ap = argparse.ArgumentParser(prog="flowplate", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="key = value config file (defaults built in)")
    ap.add_argument("--out", help="output directory (overrides run.out)")
    ap.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    ap.add_argument("--deterministic", action="store_true", help="single-threaded, byte-reproducible output")
    return ap


def run(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out else None
    manifest = {"subcommand": args.subcommand, "config_path": args.config}
    try:
        cfg = load_config(args.config) if args.config else validate_config(ExperimentConfig())
        if args.seed is not None:
            cfg.run_seed = args.seed
        if args.deterministic:
            cfg.run_deterministic = True
        out_dir = out_dir or Path(cfg.run_out)
        manifest.update(config=cfg.to_dotted(), seed=cfg.run_seed, deterministic=cfg.run_deterministic,
                        versions=_versions())
        limiter = _thread_limit(cfg.run_deterministic)
        ctx = _Context(cfg)
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        if out_dir is not None:
            write_manifest(out_dir, {**manifest, "error": str(exc), "exit_code": 1})
        return 1
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        if out_dir is not None:
            write_manifest(out_dir, {**manifest, "error": str(exc), "exit_code": 1})
        return 1

    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.run_seed)
    try:
        with limiter:
            outcome = COMMANDS[args.subcommand](ctx, rng)
    except FlowPlateError as exc:
        print(f"{args.subcommand} failed: {exc}", file=sys.stderr)
        write_manifest(out_dir, {**manifest, "error": str(exc), "exit_code": 2})
        return 2

    files = []
    for name, (header, rows) in outcome.tables.items():
        path = out_dir / f"{name}.csv"
        write_csv(path, header, rows)
        files.append(path.name)
    code = 0 if all(outcome.checks.values()) else 2
    for name, ok in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {args.subcommand}:{name}")
    write_manifest(out_dir, {**manifest, "checks": outcome.checks, "summary": outcome.summary,
                             "files": files, "exit_code": code})
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
