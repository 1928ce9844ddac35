"""Command-line entry point: ``fragrate <subcommand> [--config FILE] ...``.

Exit status is 0 on success, 1 for configuration or validation failures and
2 for numeric failures.  Errors are also reported as one JSON line on
standard error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
import warnings
from functools import cached_property

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, DomainError, FragrateError, GridMismatchError, NumericError
from .evolution import evolve
from .grid import sample_initial, write_density_csv
from .kernel import lambda_cum, require_valid, validate_hypotheses
from .operators import assemble_A, assemble_B_op, assemble_fragment_plus, assemble_T, write_operator_csv
from .profile import (
    check_profile_bounds,
    compute_profile,
    explicit_profile,
    stationarity_residual,
)
from .spectral import hypothesis_audit, spectral_report
from .splitting import audit_dissipativity, check_split_invariants, select_parameters
from .svg import write_chart

__all__ = ["main", "build_parser", "run_subcommand"]

SUBCOMMANDS = ("validate", "profile", "evolve", "split", "audit", "spectrum", "report")


def _shape_text(spec):
    shape = spec.shape
    if hasattr(shape, "c"):
        return f"uniform(c={shape.c:g})"
    return "tabulated(" + ",".join(f"{z:g}:{h:g}" for z, h in zip(shape.z, shape.h)) + ")"


class Session:
    """Lazily built objects shared by the subcommands of one run."""

    def __init__(self, cfg: RunConfig, dump_operators: bool = False):
        self.cfg = cfg
        self.dump_operators = dump_operators
        self.out = cfg.out_dir
        self.written = []

    # ------------------------------------------------------------ builders
    @cached_property
    def T(self):
        require_valid(self.cfg.spec)
        return assemble_T(self.cfg.spec, self.cfg.grid)

    @cached_property
    def profile(self):
        cfg = self.cfg
        if cfg.profile["source"] == "explicit":
            return explicit_profile(cfg.spec, cfg.grid)
        return compute_profile(cfg.spec, cfg.grid, cfg.profile["tol"], cfg.profile["t_max"], weights=cfg.weights, T_h=self.T)

    @cached_property
    def rate_max(self):
        return float(self.cfg.spec.rate(self.cfg.grid.x_max))

    @cached_property
    def trajectory(self):
        cfg, ev = self.cfg, self.cfg.evolve
        g0 = sample_initial(ev["initial"], cfg.grid, normalize_mass=True, profile=self.profile)
        return evolve(self.T, g0, ev["t_end"], ev["cfl"], self.profile, cfg.weights, ev["sample_dt"], self.rate_max)

    @cached_property
    def params(self):
        return select_parameters(self.cfg.spec, self.cfg.split_m, self.cfg.split_M)

    # ------------------------------------------------------------ output
    def header(self, extra=()):
        cfg = self.cfg
        g = cfg.grid
        lines = [
            f"fragrate {__version__}",
            f"config_sha256={cfg.config_hash}",
            f"grid x_min={g.x_min!r} x_max={g.x_max!r} n={g.n}",
            f"kernel gamma={cfg.spec.gamma!r} shape={_shape_text(cfg.spec)}",
            f"weights m={cfg.weights.m!r} M={cfg.weights.M!r}",
            f"provenance profile={cfg.profile['source']} split_m={'selected' if cfg.split['m'] == 'auto' else 'user'} "
            f"split_M={'selected' if cfg.split['M'] == 'auto' else 'user'}",
        ]
        return lines + list(extra)

    def path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def write_rows(self, name, columns, rows, extra=()):
        with open(self.path(name), "w", newline="") as fh:
            for line in self.header(extra):
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(v) for v in row])

    def dump(self, *ops):
        if not self.dump_operators:
            return
        for op in ops:
            write_operator_csv(self.path(f"operator_{op.label}.csv"), op, self.header([f"operator {op.label}"]))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ---------------------------------------------------------------- subcommands


def cmd_validate(s: Session):
    report = validate_hypotheses(s.cfg.spec)
    for line in report.lines():
        print(line)
    if not report.passed:
        first = report[report.failed[0]]
        raise ConfigError(f"{first.name} fails: {first.detail}")


def cmd_profile(s: Session):
    cfg = s.cfg
    G = s.profile
    x = cfg.grid.x
    lam = lambda_cum(cfg.spec, x)
    K = np.exp(2 * np.log(x) + lam + np.log(G.values))
    extra = [f"profile source={G.source} mass={G.mass!r}", f"stationarity_residual={stationarity_residual(G, s.T, cfg.weights)!r}"]
    s.write_rows("profile.csv", ["x", "G", "Lambda", "K"], zip(x, G.values, lam, K), extra)
    rep = check_profile_bounds(G, cfg.spec, cfg.bound_a, cfg.profile["a_prime"])
    s.write_rows(
        "profile_bounds.csv",
        ["a", "a_prime", "sup_upper", "inf_lower", "monotone_K"],
        [(rep.a, rep.a_prime, rep.sup_ratio_upper, rep.inf_ratio_lower, rep.monotone_K)],
        [f"K_origin_limit={rep.K_origin_limit!r}", "bounds certified on the truncated grid only"],
    )
    write_density_csv(s.path("profile_density.csv"), cfg.grid, G.values, s.header())
    s.dump(s.T, assemble_fragment_plus(cfg.spec, cfg.grid))
    print(f"profile ({G.source}): mass={G.mass:.12g} sup G e^(a Lambda)={rep.sup_ratio_upper:.6g} "
          f"inf G e^(a' Lambda)={rep.inf_ratio_lower:.6g} K monotone={rep.monotone_K}")
    return rep


def cmd_evolve(s: Session):
    tr = s.trajectory
    ev = s.cfg.evolve
    extra = [f"initial={ev['initial']} t_end={ev['t_end']!r} cfl={ev['cfl']!r} sample_dt={ev['sample_dt']!r} dt={tr.dt!r}",
             "distances measured to mass(g_t) G"]
    s.write_rows("trajectory.csv", ["t", "mass", "distX", "distH", "normX"], zip(tr.times, tr.mass, tr.dist_X, tr.dist_H, tr.norm_X), extra)
    s.dump(s.T)
    print(f"evolve: dt={tr.dt:.6g} max |mass-1|={np.max(np.abs(tr.mass - 1)):.3e} final distX={tr.dist_X[-1]:.3e}")
    return tr


def cmd_split(s: Session):
    p = s.params
    checks = check_split_invariants(s.cfg.spec, p)
    prov = " ".join(f"{k}={v}" for k, v in sorted(p.provenance.items()))
    s.write_rows("split_params.csv", ["m", "M", "delta", "R0", "R", "a"], [(p.m, p.M, p.delta, p.R0, p.R, p.a)],
                 [f"C_diss={p.C_diss!r}", f"split provenance {prov}"])
    print(f"{'m':>10} {'M':>10} {'delta':>12} {'R0':>10} {'R':>12} {'a':>12}")
    print(f"{p.m:>10.6g} {p.M:>10.6g} {p.delta:>12.6g} {p.R0:>10.6g} {p.R:>12.6g} {p.a:>12.6g}")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    if not all(c.passed for c in checks):
        raise NumericError("selected splitting parameters fail their invariants")
    return p


def _run_audit(s: Session):
    cfg = s.cfg
    p = s.params
    au = audit_dissipativity(cfg.spec, p, cfg.audit["n_samples"], cfg.audit["seed"])
    s.write_rows("dissipativity_audit.csv", ["sample", "functional", "normX", "slack"],
                 zip(au.samples, au.functional, au.norm_X, au.slack), [f"a={p.a!r}", au.summary()])
    rep = hypothesis_audit(cfg.spec, s.profile, s.T, p, cfg.weights, seed=cfg.audit["seed"], audit_samples=cfg.audit["n_samples"])
    s.write_rows("hypothesis_audit.csv", ["point", "name", "passed", "value", "detail"],
                 [(pt.number, pt.name, pt.passed, pt.value, pt.detail) for pt in rep.points])
    if s.dump_operators:
        A = assemble_A(cfg.spec, cfg.grid, p.delta, p.R)
        s.dump(A, assemble_B_op(s.T, A))
    print("dissipativity audit: " + au.summary())
    for line in rep.lines():
        print(line)
    return au, rep


def _audit_failure(au, rep):
    failed = ([] if au.passed else ["dissipativity"]) + [f"point {pt.number}" for pt in rep.points if not pt.passed]
    return ConfigError("audit failed: " + ", ".join(failed)) if failed else None


def cmd_audit(s: Session):
    au, rep = _run_audit(s)
    failure = _audit_failure(au, rep)
    if failure is not None:
        raise failure
    return au, rep


def cmd_spectrum(s: Session):
    cfg = s.cfg
    rep = spectral_report(s.T, s.profile, cfg.weights, s.trajectory, s.params.C_diss,
                          window=tuple(cfg.evolve["window"]), seed=cfg.audit["seed"])
    s.write_rows("spectrum.csv", ["re", "im"], zip(rep.eigenvalues.real, rep.eigenvalues.imag))
    s.write_rows(
        "spectral_report.csv",
        ["gap", "stationary_modulus", "fitted_rate", "beta_est", "alpha_constructive"],
        [(rep.gap, rep.stationary_modulus, rep.fitted_rate, rep.beta_est, rep.alpha_constructive)],
        [f"fit window={cfg.evolve['window']} r_squared={rep.fit_r_squared!r}", f"stationary_distance={rep.stationary_distance!r}"],
    )
    s.dump(s.T)
    print(f"spectrum: gap={rep.gap:.6g} |lambda_0|={rep.stationary_modulus:.3e} fitted rate={rep.fitted_rate:.6g} "
          f"(r^2={rep.fit_r_squared:.6f}) beta_est={rep.beta_est:.6g} alpha={rep.alpha_constructive:.6g}")
    return rep


def cmd_report(s: Session):
    bounds = cmd_profile(s)
    tr = cmd_evolve(s)
    p = cmd_split(s)
    spec_rep = cmd_spectrum(s)
    au, hyp = _run_audit(s)
    failure = _audit_failure(au, hyp)
    write_chart(
        s.path("decay.svg"),
        [("log10 distX", tr.times, np.log10(tr.dist_X)), ("log10 distH", tr.times, np.log10(tr.dist_H))],
        "distance to the profile", "t", "log10 distance",
    )
    ev = spec_rep.eigenvalues
    write_chart(s.path("spectrum.svg"), [("eigenvalues", ev.real, ev.imag)], "spectrum of T_h", "Re", "Im", kind="scatter")
    drift = float(np.max(np.abs(tr.mass - 1)))
    lines = s.header() + [
        f"profile source={s.profile.source} sup_upper={bounds.sup_ratio_upper:.6g} inf_lower={bounds.inf_ratio_lower:.6g} monotone_K={bounds.monotone_K}",
        f"mass drift max={drift:.3e}",
        f"split m={p.m:.6g} M={p.M:.6g} delta={p.delta:.6g} R0={p.R0:.6g} R={p.R:.6g} C_diss={p.C_diss:.6g}",
        f"gap={spec_rep.gap:.6g} fitted_rate={spec_rep.fitted_rate:.6g} beta_est={spec_rep.beta_est:.6g} alpha={spec_rep.alpha_constructive:.6g}",
        "dissipativity audit: " + au.summary(),
    ] + hyp.lines() + [f"overall={'PASS' if failure is None else 'FAIL'}"]
    with open(s.path("report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    s.write_rows(
        "summary.csv",
        ["gap", "fitted_rate", "beta_est", "alpha_constructive", "C_diss", "mass_drift", "audit_passed"],
        [(spec_rep.gap, spec_rep.fitted_rate, spec_rep.beta_est, spec_rep.alpha_constructive, p.C_diss, drift, failure is None)],
    )
    if failure is not None:
        raise failure


COMMANDS = {
    "validate": cmd_validate,
    "profile": cmd_profile,
    "evolve": cmd_evolve,
    "split": cmd_split,
    "audit": cmd_audit,
    "spectrum": cmd_spectrum,
    "report": cmd_report,
}


def run_subcommand(name: str, cfg: RunConfig, dump_operators: bool = False) -> Session:
    if name not in COMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}")
    session = Session(cfg, dump_operators)
    COMMANDS[name](session)
    return session


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragrate", description="Self-similar fragmentation: profiles, spectra and decay audits.")
    parser.add_argument("--version", action="version", version=f"fragrate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", "-c", help="TOML run configuration (defaults built in)")
        p.add_argument("--out", help="output directory, overrides [output] dir")
        p.add_argument("--dump-operators", action="store_true", help="write assembled matrices as row,col,value CSV")
        if name in ("evolve", "spectrum", "report"):
            p.add_argument("--t-end", type=float)
            p.add_argument("--cfl", type=float)
            p.add_argument("--sample-dt", type=float)
            p.add_argument("--initial", help="initial datum kind:params, e.g. bump:1:0.2")
        if name in ("split", "audit", "spectrum", "report"):
            p.add_argument("--m", type=float, help="weight exponent m for the splitting")
            p.add_argument("--M", type=float, dest="M_split", help="fix M instead of selecting it")
        if name in ("audit", "report"):
            p.add_argument("--n-samples", type=int)
            p.add_argument("--seed", type=int)
    return parser


def _overrides(args):
    get = lambda k: getattr(args, k, None)  # noqa: E731
    return {
        ("output", "dir"): get("out"),
        ("evolve", "t_end"): get("t_end"),
        ("evolve", "cfl"): get("cfl"),
        ("evolve", "sample_dt"): get("sample_dt"),
        ("evolve", "initial"): get("initial"),
        ("split", "m"): get("m"),
        ("split", "M"): get("M_split"),
        ("audit", "n_samples"): get("n_samples"),
        ("audit", "seed"): get("seed"),
    }


def _error_line(exc, code):
    return json.dumps({"status": "error", "exit_code": code, "kind": type(exc).__name__, "message": str(exc)}, sort_keys=True)


def _thread_limit():
    value = os.environ.get("FRAGRATE_THREADS")
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError as exc:
        raise ConfigError(f"FRAGRATE_THREADS must be an integer, got {value!r}") from exc
    if n < 1:
        raise ConfigError("FRAGRATE_THREADS must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.showwarning = _show_warning
    try:
        with _thread_limit():
            cfg = load_config(args.config, _overrides(args))
            run_subcommand(args.command, cfg, args.dump_operators)
    except (ConfigError, DomainError, GridMismatchError) as exc:
        print(_error_line(exc, 1), file=sys.stderr)
        return 1
    except (NumericError, FloatingPointError) as exc:
        print(_error_line(exc, 2), file=sys.stderr)
        return 2
    except FragrateError as exc:
        print(_error_line(exc, 1), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
