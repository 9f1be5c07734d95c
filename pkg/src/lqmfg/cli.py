"""Command-line front end.

Exit codes: 0 when every requested check passes, 1 when a check fails (the
failing check is named on stderr), 2 for usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assumptions import check_general, check_lq, lq_samples, sample_pairs
from .model import ConfigError, SpaceGrid, SpecValidationError, TimeGrid
from .nplayer import estimate_exploitability, write_gap_csv
from .paths import (control_mean_gap, estimate_conditional_moments, lq_equilibrium_inputs,
                    simulate_paths, value_slopes, write_path_csv)
from .phi_field import CFLError, MasterField, solve_phi
from .riccati import solve_riccati
from .scenarios import GALLERY, Scenario, load_scenario
from .verify import CRITERIA, Settings, run_criterion, run_scenario


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--scenario", help=f"gallery scenario ({', '.join(GALLERY)})")
    g.add_argument("--config", type=Path, help="JSON scenario file")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--dnu", type=float, help="mean-state grid step")
    p.add_argument("--particles", type=int, help="particles per common path")
    p.add_argument("--paths", type=int, help="common paths")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker cap")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="artifact directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lqmfg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("check", "assumption report"),
                        ("solve", "Riccati and Phi on the grid"),
                        ("simulate", "common paths, particle clouds, consistency statistics"),
                        ("verify", "scenario checks, or the full acceptance suite"),
                        ("nplayer", "N-player exploitability study (demonstration)"),
                        ("report", "consolidated JSON + CSV bundle")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "verify":
            p.add_argument("--criteria", type=int, nargs="+", choices=sorted(CRITERIA),
                           help="acceptance criteria to run when no scenario is given")
        if name == "nplayer":
            p.add_argument("--players", type=int, nargs="+", default=[5, 10, 50])
            p.add_argument("--trials", type=int, default=20)
    return ap


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _scenario(args, validate: bool = True, default: str | None = None) -> Scenario:
    try:
        if args.config is not None:
            return load_scenario(config=args.config, validate=validate)
        name = args.scenario or default
        if name is None:
            raise UsageError("one of --scenario or --config is required")
        return load_scenario(name, validate=validate)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    except (ConfigError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def _settings(args, sc: Scenario | None) -> Settings:
    base = Settings() if sc is None else Settings(dt=sc.sim.dt, dnu=sc.sim.dnu, seed=sc.sim.seed,
                                                  particles=sc.sim.particles)
    for key in ("dt", "dnu", "seed", "particles", "paths", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(base, key, val)
    if base.dt <= 0 or base.dnu <= 0 or base.particles < 1 or base.paths < 1:
        raise UsageError("steps and counts must be positive")
    return base


def _meta(sc: Scenario, st: Settings) -> str:
    return (f"scenario={sc.name} seed={st.seed} dt={st.dt:.17g} dnu={st.dnu:.17g} "
            f"nu=[{sc.sim.nu_min:.17g},{sc.sim.nu_max:.17g}] version={__version__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def _fail(names) -> int:
    for n in names:
        print(f"FAILED: {n}", file=sys.stderr)
    return 1 if names else 0


def _solve(sc: Scenario, st: Settings) -> MasterField:
    gs = sc.general
    grid = TimeGrid.from_step(gs.T, st.dt)
    P = solve_riccati(gs, grid)
    return MasterField(P, solve_phi(gs, P, grid, SpaceGrid(sc.sim.nu_min, sc.sim.nu_max, st.dnu)))


def _assumption_report(sc: Scenario):
    if sc.lq is not None:
        return check_lq(sc.lq, lq_samples(sc.lq, 10_000))
    return check_general(sc.general, sample_pairs(sc.general, 4096))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_check(args) -> int:
    sc = _scenario(args, validate=False)
    rep = _assumption_report(sc)
    print(rep.table())
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "check.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    return _fail(rep.failures())


def cmd_solve(args) -> int:
    sc = _scenario(args)
    st = _settings(args, sc)
    field = _solve(sc, st)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(sc, st)
    field.P.to_csv(out / "riccati.csv", meta)
    every = max(1, field.grid.M // 100)
    field.Phi.to_csv(out / "phi.csv", meta, every=every)
    phi0 = field.Phi(0.0, np.array([sc.sim.xi_mean]))[0]
    summary = {"scenario": sc.name, "dt": st.dt, "dnu": st.dnu, "P0": field.P.P[0].tolist(),
               "phi0": phi0.tolist(), "eta": sc.sim.xi_mean, "sup_P": field.P.sup_norm,
               "certificate": field.P.certificate, "max_cfl": field.Phi.meta["max_cfl"],
               "phi_time_stride": every}
    _write_json(out / "solve.json", summary)
    print(f"{sc.name}: P(0) = {field.P.P[0].tolist()}, Phi(0, {sc.sim.xi_mean:g}) = {phi0.tolist()}")
    ok = bool(np.all(np.isfinite(field.Phi.values)))
    return _fail([] if ok else ["phi finite"])


def _simulate(sc: Scenario, st: Settings, field: MasterField, out: Path) -> dict:
    gs = sc.general
    bundles = simulate_paths(gs, field, seed=st.seed, paths=st.paths, particles=st.particles,
                             eta=sc.sim.xi_mean, xi_std=sc.sim.xi_std, threads=st.threads)
    meta = _meta(sc, st)
    stats = []
    for k, b in enumerate(bundles):
        mu = lq_equilibrium_inputs(sc.lq, b.nu)[0] if sc.lq is not None else None
        write_path_csv(out / f"path_{k:03d}.csv", b, mu, f"{meta} path={k}")
        rx, ry = estimate_conditional_moments(b).relative_max()
        row = {"path": k, "rel_dev_x": rx, "rel_dev_y": ry, "bsde_step_rms": b.bsde_step_rms,
               "bsde_cum_rms": b.bsde_cum_rms, "terminal_gap": b.terminal_gap,
               "reflections": b.nu.reflections, "boundary_flag": b.nu.flagged}
        stats.append(row)
    return {"scenario": sc.name, "seed": st.seed, "particles": st.particles, "paths": st.paths,
            "tolerance": sc.sim.tolerances.get("consistency", 0.05), "paths_stats": stats}


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    st = _settings(args, sc)
    if args.paths is None:
        st.paths = sc.sim.paths
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    res = _simulate(sc, st, _solve(sc, st), out)
    _write_json(out / "simulate.json", res)
    worst = max(max(r["rel_dev_x"], r["rel_dev_y"]) for r in res["paths_stats"])
    print(f"{sc.name}: {st.paths} path(s) x {st.particles} particles, worst relative deviation {worst:.4g}")
    return _fail([] if worst <= res["tolerance"] else [f"consistency ({worst:.4g} > {res['tolerance']})"])


def cmd_verify(args) -> int:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario is None and args.config is None:
        st = _settings(args, None)
        results = [run_criterion(n, st) for n in (args.criteria or sorted(CRITERIA))]
    else:
        sc = _scenario(args)
        results = run_scenario(sc, _settings(args, sc))
    for r in results:
        print(r.line())
    _write_json(out / "verify.json", [{k: v for k, v in r.to_dict().items() if k != "seconds"}
                                      for r in results])
    return _fail([r.name for r in results if not r.passed])


def cmd_nplayer(args) -> int:
    sc = _scenario(args, default="tanh-crowd")
    if sc.lq is None:
        raise UsageError("the N-player game needs an LQ scenario")
    if any(n < 2 for n in args.players):
        raise UsageError("the N-player game needs N >= 2")
    st = _settings(args, sc)
    field = _solve(sc, st)
    res = [estimate_exploitability(sc.lq, field, N, args.trials, st.seed,
                                   xi_mean=sc.sim.xi_mean, xi_std=sc.sim.xi_std)
           for N in args.players]
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_gap_csv(out / "nplayer_gaps.csv", res, f"{_meta(sc, st)} demonstration")
    for r in res:
        print(f"N={r.N:4d} gap {r.gap:.6g} +- {r.se:.2g} (median {r.median:.6g})")
    return _fail([f"nplayer N={r.N} gap below -2 SE" for r in res if not r.consistent])


def cmd_report(args) -> int:
    sc = _scenario(args, validate=False)
    st = _settings(args, sc)
    if args.paths is None:
        st.paths = sc.sim.paths
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rep = _assumption_report(sc)
    report = {"scenario": sc.name, "version": __version__, "seed": st.seed,
              "grid": {"dt": st.dt, "dnu": st.dnu, "nu_min": sc.sim.nu_min, "nu_max": sc.sim.nu_max},
              "assumptions": rep.to_dict()}
    failures = list(rep.failures())
    if rep.passed:
        field = _solve(sc, st)
        meta = _meta(sc, st)
        field.P.to_csv(out / "riccati.csv", meta)
        field.Phi.to_csv(out / "phi.csv", meta, every=max(1, field.grid.M // 100))
        sim = _simulate(sc, st, field, out)
        report["simulate"] = sim
        worst = max(max(r["rel_dev_x"], r["rel_dev_y"]) for r in sim["paths_stats"])
        if worst > sim["tolerance"]:
            failures.append("consistency")
        checks = run_scenario(sc, st, [c for c in ("riccati", "residual") if c in sc.checks])
        report["checks"] = [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in checks]
        failures += [r.name for r in checks if not r.passed]
        if sc.lq is not None:
            gaps = [float(np.max(np.abs(control_mean_gap(sc.lq, b, lq_equilibrium_inputs(sc.lq, b.nu)[0]))))
                    for b in simulate_paths(sc.general, field, seed=st.seed, paths=1,
                                            particles=min(st.particles, 2000),
                                            eta=sc.sim.xi_mean, xi_std=sc.sim.xi_std)]
            report["control_mean_gap"] = gaps[0]
            report["value_slopes_exploratory"] = [
                v.to_dict() for v in value_slopes(sc.lq, field, seed=st.seed, paths=16, particles=32,
                                                  eta=sc.sim.xi_mean)]
    _write_json(out / "report.json", report)
    print(f"{sc.name}: report written to {out / 'report.json'}")
    return _fail(failures)


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "simulate": cmd_simulate,
            "verify": cmd_verify, "nplayer": cmd_nplayer, "report": cmd_report}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"lqmfg: error: {exc}", file=sys.stderr)
        return 2
    except SpecValidationError as exc:
        print(f"lqmfg: invalid scenario: {exc}", file=sys.stderr)
        return 1
    except CFLError as exc:
        print(f"lqmfg: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
