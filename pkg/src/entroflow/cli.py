"""Command-line runner: ``entroflow <command> [options]``.

Every command writes a JSON report and, where there is a series, a long-format
CSV (``run_id,s,quantity,value``) into the output directory, plus a
``manifest.json`` with hashes, seed and timestamps.  Exit codes: 0 success,
2 a verified property failed, 3 bad configuration or input.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import os
import sys
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .balance import BalanceViolation, entropy_balance, theorem1_check
from .control import ScenarioError, brute_force_oracle, hopf_cole_oracle, solve_value
from .curves import (
    DensityError,
    GridMismatchError,
    dual_norm,
    dual_norm_sup,
    DriftField,
    forward_integrate,
    random_density,
    recover_continuity_drift,
    recover_fp_drift,
    v_norm,
)
from .io import (
    ConfigError,
    atomic_write,
    load_scenario,
    long_csv,
    read_curve,
    read_drift,
    to_json,
    write_curve,
    write_drift,
    write_json,
)
from .mollify import MollifierConfig, MollifierError, eps_sweep
from .space import SpaceError, load_space
from .suite import run_suite, space_invariants
from .transport import ContractionViolation, contraction_report, default_reg, w2_exact, w2_sinkhorn

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG = 0, 2, 3

# keys a --config file may set for each command (mirrors the long flags)
_COMMON = {"out_dir", "seed", "tol_scale", "threads"}
_CONFIG_KEYS = {
    "space": _COMMON | {"space", "beta"},
    "heat": _COMMON | {"space", "beta", "s", "density"},
    "drift": _COMMON | {"space", "beta", "curve", "midpoint", "weighting"},
    "balance": _COMMON | {"space", "beta", "curve", "midpoint", "weighting"},
    "mollify": _COMMON | {"space", "beta", "curve", "drift", "eps", "mollifier"},
    "transport": _COMMON | {"space", "beta", "mu", "nu", "s", "reg"},
    "control": _COMMON | {"scenario", "oracle"},
    "suite": _COMMON | {"space", "criteria"},
}


class _Assertion(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entroflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"entroflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML file whose keys set defaults for the flags")
        sp.add_argument("--out-dir", dest="out_dir", help="output directory (env ENTROFLOW_OUT overrides)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--tol-scale", dest="tol_scale", type=float, default=None)
        sp.add_argument("--threads", type=int, default=None)
        return sp

    def space_arg(sp):
        sp.add_argument("--space", default=None, help="k2, ring:N, grid:N or a space TOML file")
        sp.add_argument("--beta", type=float, default=None)

    s = common(sub.add_parser("space", help="build and inspect a space"))
    space_arg(s)
    s = common(sub.add_parser("heat", help="heat semigroup and kernel dumps"))
    space_arg(s)
    s.add_argument("--s", type=float, default=None, help="semigroup time")
    s.add_argument("--density", help="CSV curve file whose first row is the initial density")
    s = common(sub.add_parser("drift", help="recover current and Fokker-Planck drifts"))
    space_arg(s)
    s.add_argument("--curve")
    s.add_argument("--midpoint", choices=("arithmetic", "identric"), default=None)
    s.add_argument("--weighting", choices=("logmean", "arithmetic"), default=None)
    s = common(sub.add_parser("balance", help="entropy balance and entropy-speed inequality check"))
    space_arg(s)
    s.add_argument("--curve")
    s.add_argument("--midpoint", choices=("arithmetic", "identric"), default=None)
    s.add_argument("--weighting", choices=("logmean", "arithmetic"), default=None)
    s = common(sub.add_parser("mollify", help="epsilon sweeps of the regularization"))
    space_arg(s)
    s.add_argument("--curve")
    s.add_argument("--drift", help="drift CSV; defaults to the recovered Fokker-Planck drift")
    s.add_argument("--eps", type=float, nargs="+", default=None)
    s = common(sub.add_parser("transport", help="W2 distances and heat-flow contraction"))
    space_arg(s)
    s.add_argument("--mu", help="CSV curve file; first row used")
    s.add_argument("--nu", help="CSV curve file; last row used")
    s.add_argument("--s", type=float, default=None)
    s.add_argument("--reg", type=float, default=None)
    s = common(sub.add_parser("control", help="solve a value-function scenario"))
    s.add_argument("--scenario", help="scenario TOML file")
    s.add_argument("--oracle", choices=("none", "hopf-cole", "brute", "all"), default=None)
    s = common(sub.add_parser("suite", help="run the acceptance checks"))
    s.add_argument("--space", default=None, help="also run invariant checks on this space")
    s.add_argument("--criteria", type=int, nargs="+", default=None)
    return p


DEFAULTS = {
    "seed": 0,
    "tol_scale": 1.0,
    "threads": 1,
    "s": 0.1,
    "midpoint": "arithmetic",
    "weighting": "logmean",
    "oracle": "none",
    "eps": [0.1, 0.05, 0.025, 0.0125],
}


def _resolve(args: argparse.Namespace) -> dict:
    opts = {k: v for k, v in vars(args).items() if k not in ("config", "command")}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"config is not valid TOML: {exc}") from exc
        bad = set(data) - _CONFIG_KEYS[args.command]
        if bad:
            raise ConfigError(f"unknown keys in {path}: {sorted(bad)}")
        for k, v in data.items():
            if opts.get(k) is None:
                opts[k] = v
    for k, v in DEFAULTS.items():
        if opts.get(k) is None:
            opts[k] = v
    env = os.environ.get("ENTROFLOW_OUT")
    opts["out_dir"] = Path(env or opts.get("out_dir") or "entroflow_out")
    return opts


def _space(opts):
    if not opts.get("space"):
        raise ConfigError("--space is required")
    return load_space(str(opts["space"]), beta=opts.get("beta"))


def _curve(opts, space):
    if not opts.get("curve"):
        raise ConfigError("--curve is required")
    return read_curve(opts["curve"], space)


# ------------------------------------------------------------------ commands
def cmd_space(opts, out):
    sp = _space(opts)
    lam, _ = sp.spectrum()
    atomic_write(out / "space.toml", sp.to_toml())
    rep = {
        "name": sp.name,
        "n": sp.n,
        "edges": sp.n_edges,
        "beta": sp.beta,
        "K": sp.K,
        "spectral_gap": float(-lam[1]),
        "max_eigenvalue": float(-lam[-1]),
        "diameter": float(sp.d.max()),
    }
    return rep, []


def cmd_heat(opts, out):
    sp = _space(opts)
    s = float(opts["s"])
    ker = sp.heat_kernel(s)
    if opts.get("density"):
        rho0 = read_curve(opts["density"], sp).rho[0]
    else:
        rho0 = random_density(sp, np.random.default_rng(opts["seed"]), 0.8)
    rows = [",".join(["node"] + [f"node_{j}" for j in range(sp.n)])]
    rows += [",".join([str(i)] + [repr(float(v)) for v in row]) for i, row in enumerate(ker.matrix)]
    atomic_write(out / "kernel.csv", "\n".join(rows) + "\n")
    # drift-free run of the integrator, so recovered drifts vanish exactly
    curve = forward_integrate(sp, rho0, DriftField.zeros(sp, 16), -s)
    write_curve(out / "heatflow.csv", curve)
    be = sp.bakry_emery_report(rho0, s)
    rep = {
        "s": s,
        "kernel_min": ker.min_entry,
        "kernel_max": ker.max_entry,
        "a_s": ker.a_s,
        "strictly_positive": ker.strictly_positive,
        "bakry_emery": be.as_dict(),
    }
    series = [("heat", float(sk), "entropy", float(np.sum(r * np.log(r) * sp.m))) for sk, r in zip(curve.s, curve.rho)]
    return rep, series


def cmd_drift(opts, out):
    sp = _space(opts)
    c = _curve(opts, sp)
    kw = {"midpoint": opts["midpoint"], "weighting": opts["weighting"]}
    Y = recover_continuity_drift(c, **kw)
    V = recover_fp_drift(c, **kw)
    write_drift(out / "current.csv", Y, sp)
    write_drift(out / "fokker_planck.csv", V, sp)
    rep = {
        "N": c.N,
        "ds": c.dt,
        "current_norm_sq": v_norm(c, Y, **kw),
        "fp_norm_sq": v_norm(c, V, **kw),
        "dual_norm": dual_norm(c, **kw),
        "dual_norm_sup": dual_norm_sup(c, **kw),
    }
    return rep, []


def cmd_balance(opts, out):
    sp = _space(opts)
    c = _curve(opts, sp)
    rep = entropy_balance(c, midpoint=opts["midpoint"], weighting=opts["weighting"])
    t1 = theorem1_check(c, weighting=opts["weighting"], rel_tol=1e-8 * opts["tol_scale"])
    series = [("balance", float(c.s[k]), q, v) for k, q, v in rep.series()]
    return {"balance": rep.as_dict(), "theorem1": t1.as_dict()}, series


def cmd_mollify(opts, out):
    sp = _space(opts)
    c = _curve(opts, sp)
    drift = read_drift(opts["drift"], sp) if opts.get("drift") else recover_fp_drift(c)
    cfg = MollifierConfig.from_dict(opts.get("mollifier") or {})
    reps = eps_sweep(c, drift, [float(e) for e in opts["eps"]], cfg)
    series = []
    for r in reps:
        for key in ("sup_l1", "entropy_gap", "norm_out", "norm_out_interior"):
            series.append(("mollify", r.eps, key, getattr(r, key)))
    return {"config": cfg.to_dict(), "sweep": [r.as_dict() for r in reps]}, series


def cmd_transport(opts, out):
    sp = _space(opts)
    rng = np.random.default_rng(opts["seed"])
    mu = read_curve(opts["mu"], sp).rho[0] if opts.get("mu") else random_density(sp, rng)
    nu = read_curve(opts["nu"], sp).rho[-1] if opts.get("nu") else random_density(sp, rng)
    dist, coup = w2_exact(sp, mu, nu)
    reg = opts.get("reg") or default_reg(sp)
    rows = [",".join(["node"] + [f"node_{j}" for j in range(sp.n)])]
    rows += [",".join([str(i)] + [repr(float(v)) for v in row]) for i, row in enumerate(coup.plan)]
    atomic_write(out / "coupling.csv", "\n".join(rows) + "\n")
    con = contraction_report(sp, mu, nu, float(opts["s"]), tol=1e-6 * opts["tol_scale"])
    rep = {
        "w2_exact": dist,
        "w2_sinkhorn": w2_sinkhorn(sp, mu, nu, reg),
        "reg": reg,
        "dual_residual": coup.dual_residual,
        "marginal_error": coup.marginal_error(),
        "contraction": con.as_dict(),
    }
    return rep, []


def cmd_control(opts, out):
    if not opts.get("scenario"):
        raise ConfigError("--scenario is required")
    path = Path(opts["scenario"])
    cfg = load_scenario(path)
    sc = cfg.build(path.parent)
    which = opts["oracle"]
    sols = {"solve": solve_value(sc, tol=1e-6 * opts["tol_scale"])}
    if which in ("hopf-cole", "all"):
        sols["hopf_cole"] = hopf_cole_oracle(sc)
    if which in ("brute", "all"):
        sols["brute_force"] = brute_force_oracle(sc)
    series = []
    for name, sol in sols.items():
        write_curve(out / f"{name}_curve.csv", sol.curve)
        write_drift(out / f"{name}_drift.csv", sol.drift, sc.space)
        series += [(name, i, "objective", v) for i, v in enumerate(sol.trace)]
    values = {k: s.value for k, s in sols.items()}
    gaps = {
        f"{a}_vs_{b}": abs(values[a] - values[b]) for i, a in enumerate(values) for b in list(values)[i + 1 :]
    }
    rep = {
        "scenario_hash": cfg.digest(),
        "solutions": {k: s.summary() for k, s in sols.items()},
        "gaps": gaps,
        "entropy_nu": float(np.sum(sc.nu * np.log(sc.nu) * sc.space.m)),
        "lower_bound": sc.lower_bound(),
    }
    if not sols["solve"].value <= sols["solve"].baseline + 1e-9:
        raise _Assertion(("solve_value lost to the zero-drift baseline", rep, series))
    return rep, series


def cmd_suite(opts, out):
    results = run_suite(opts["seed"], opts["tol_scale"], opts["threads"], opts.get("criteria"))
    rep = {"seed": opts["seed"], "tol_scale": opts["tol_scale"], "criteria": [r.as_dict() for r in results]}
    ok = all(r.passed for r in results)
    if opts.get("space"):
        inv = space_invariants(_space(opts), opts["seed"], opts["tol_scale"])
        rep["space_checks"] = inv
        ok = ok and inv["passed"]
    rep["passed"] = ok
    series = [(run, s, q, v) for r in results for run, s, q, v in r.series]
    for r in results:
        print(r.line())
    if not ok:
        raise _Assertion(("acceptance checks failed", rep, series))
    return rep, series


COMMANDS = {
    "space": cmd_space,
    "heat": cmd_heat,
    "drift": cmd_drift,
    "balance": cmd_balance,
    "mollify": cmd_mollify,
    "transport": cmd_transport,
    "control": cmd_control,
    "suite": cmd_suite,
}


def _emit(out: Path, command: str, opts: dict, rep, series, status: str) -> None:
    report_path = write_json(out / f"{command}_report.json", rep)
    paths = [str(report_path)]
    if series:
        paths.append(str(atomic_write(out / f"{command}_series.csv", long_csv(series))))
    canon = to_json({k: str(v) for k, v in sorted(opts.items())})
    manifest = {
        "command": command,
        "status": status,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "tool_version": __version__,
        "seed": opts.get("seed"),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": paths,
    }
    write_json(out / "manifest.json", manifest)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        opts = _resolve(args)
        out = opts["out_dir"]
        rep, series = COMMANDS[args.command](opts, out)
    except _Assertion as exc:
        message, rep, series = exc.args[0]
        _emit(out, args.command, opts, rep, series, "assertion_failed")
        print(f"assertion failed: {message}", file=sys.stderr)
        return EXIT_ASSERT
    except (BalanceViolation, ContractionViolation, AssertionError) as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (
        ConfigError,
        ScenarioError,
        SpaceError,
        DensityError,
        GridMismatchError,
        MollifierError,
        FileNotFoundError,
    ) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(out, args.command, opts, rep, series, "ok")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
