"""
Command-line front end.

Subcommands: ``solve``, ``simulate``, ``calibrate``, ``pension`` and
``export-figures``. Exit codes: 0 success, 2 validation error, 3 numerical
failure (including a calibration that did not converge), 4 I/O error.

Money inputs are taken as dollars of the policy year; no CPI conversion
is applied.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    block_masks,
    calibrate,
    filter_samples,
    load_samples,
    model_predictions,
    write_residuals,
    write_result,
)
from .config import RunConfig
from .economics import FamilyStatus, ModelArrays, pension_components
from .errors import (
    DecumulationError,
    InfeasibleActionError,
    InvalidDataError,
    InvalidInputError,
    ModelInconsistencyError,
)
from .simulator import classify_phase, export_figure_data, simulate_paths, verify_optimality
from .solver import Solution, build_grid, read_metadata, solve

log = logging.getLogger("decumulation")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@contextmanager
def locked_dir(path: Path):
    """Create ``path`` and hold an exclusive lock file in it for the duration."""
    try:
        path.mkdir(parents=True, exist_ok=True)
        lock = path / ".lock"
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CommandError(f"output directory {path} is locked by another run (remove {path / '.lock'} if stale)", EXIT_IO)
    except OSError as exc:
        raise CommandError(f"cannot write to {path}: {exc}", EXIT_IO)
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield path
    finally:
        try:
            lock.unlink()
        except OSError:
            pass


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if getattr(args, "life_table", None):
        cfg.set("mortality.life_table_csv", str(args.life_table))
    if getattr(args, "min_withdrawals", None):
        cfg.set("solver.min_withdrawals", args.min_withdrawals == "on")
    if getattr(args, "grid_size", None) is not None:
        cfg.set("solver.grid_intervals", args.grid_size)
    if getattr(args, "quad_order", None) is not None:
        cfg.set("solver.quad_order", args.quad_order)
    if getattr(args, "seed", None) is not None:
        cfg.set("simulation.seed", args.seed)
    cfg.model_params()
    cfg.solve_options()
    return cfg


def _write_manifest(out: Path, cfg: RunConfig, command: str, files) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg.digest(),
        "version": __version__,
        "files": sorted(str(Path(f).relative_to(out)) for f in files),
        "config": cfg.tree,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)


def _summary_lines(sol: Solution) -> list[str]:
    levels = [w for w in (1e4, 5e4, 1e5, 2e5, 4e5, 8e5, 1.6e6) if w <= sol.grid.top]
    lines = [f"value at age {sol.t0} (utils) by liquid wealth"]
    for d, dn in enumerate(("single", "couple")):
        for h, hn in enumerate(("renter", "homeowner")):
            vals = ", ".join(f"{w:.0f}: {sol.lookup('value', sol.t0, d, h, w):.6e}" for w in levels)
            lines.append(f"  {dn} {hn}: {vals}")
    if sol.H_star is not None:
        lines.append("owner-occupied house value H by total wealth (unconditional H*, owner-conditional H)")
        for d, dn in enumerate(("single", "couple")):
            idx = [int(np.searchsorted(sol.grid.nodes, w)) for w in levels]
            pairs = ", ".join(f"{sol.grid.nodes[i]:.0f}: {sol.H_star[d, i]:.0f}/{sol.H_owner[d, i]:.0f}" for i in idx)
            lines.append(f"  {dn}: {pairs}")
    return lines


def cmd_solve(args) -> int:
    cfg = _config(args)
    params, opts = cfg.model_params(), cfg.solve_options()
    wmax, k = cfg.grid_spec()
    grid = build_grid(params.market, wmax, k)
    out = Path(args.out)
    with locked_dir(out):
        sol = solve(params, grid, opts)
        sol.save(out / "solution")
        with open(out / "solution" / "metadata.txt", "a") as fh:
            fh.write(f"config_hash = {cfg.digest()}\n")
        lines = [f"config_hash = {cfg.digest()}", f"grid: {grid.k + 1} nodes up to {grid.top:.6g}",
                 f"quadrature order: {opts.quad_order}"] + _summary_lines(sol)
        if opts.quad_order != 5:
            from dataclasses import replace
            ref = solve(params, grid, replace(opts, quad_order=5), housing=False)
            rel = np.abs(sol.value - ref.value) / np.maximum(np.abs(ref.value), 1e-300)
            lines.append(f"max relative value difference vs quadrature order 5: {rel.max():.3e}")
        with open(out / "summary.txt", "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print("\n".join(lines))
        _write_manifest(out, cfg, "solve", [p for p in out.rglob("*") if p.is_file() and p.name != ".lock"])
    return EXIT_OK


def _load_checked_solution(args, cfg: RunConfig) -> Solution:
    if not args.solution:
        raise CommandError("--solution DIR is required", EXIT_VALIDATION)
    src = Path(args.solution)
    if (src / "solution").is_dir():
        src = src / "solution"
    try:
        meta = read_metadata(src)
    except InvalidDataError as exc:
        raise CommandError(str(exc), EXIT_IO)
    want = cfg.model_params().digest()
    if meta.get("params_hash") != want:
        raise CommandError(
            f"solution in {src} was built from different model parameters (hash {meta.get('params_hash')}, "
            f"config gives {want}); re-run 'solve' with this config or pass the matching --config", EXIT_VALIDATION)
    sol = Solution.load(src)
    if sol.options.min_withdrawals != cfg.solve_options().min_withdrawals:
        raise CommandError("solution and config disagree on minimum withdrawals", EXIT_VALIDATION)
    return sol


def _status(token) -> FamilyStatus:
    try:
        g = FamilyStatus.parse(token)
    except InvalidInputError as exc:
        raise CommandError(str(exc), EXIT_VALIDATION)
    if g not in (FamilyStatus.SINGLE, FamilyStatus.COUPLE):
        raise CommandError("status must be single or couple", EXIT_VALIDATION)
    return g


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sim = cfg.tree["simulation"]
    for flag, key in (("w0", "start_wealth_dollars"), ("paths", "paths"), ("status", "start_status")):
        if getattr(args, flag) is not None:
            cfg.set(f"simulation.{key}", getattr(args, flag))
    if args.homeowner is not None:
        cfg.set("simulation.homeowner", args.homeowner == "yes")
    sol = _load_checked_solution(args, cfg)
    w0, n, seed = float(sim["start_wealth_dollars"]), int(sim["paths"]), int(sim["seed"])
    g0, h = _status(sim["start_status"]), int(bool(sim["homeowner"]))
    out = Path(args.out)
    with locked_dir(out):
        paths = simulate_paths(sol, w0, g0, h, n, seed)
        files = [paths.to_csv(out / "paths.csv")]
        files += export_figure_data(sol, out / "figures", d=g0.index, h=h)
        lines = [f"config_hash = {cfg.digest()}", f"{n} paths from {w0:.0f} ({g0.name.lower()}, homeowner={bool(h)})"]
        if args.audit:
            rep = verify_optimality(sol, w0, g0, h, n, int(sim["random_policies"]), seed)
            lines.append(rep.summary())
            with open(out / "audit.txt", "w") as fh:
                fh.write(rep.summary() + "\n")
            files.append(out / "audit.txt")
        print("\n".join(lines))
        _write_manifest(out, cfg, "simulate", files)
    return EXIT_OK


def cmd_export_figures(args) -> int:
    cfg = _config(args)
    sol = _load_checked_solution(args, cfg)
    out = Path(args.out)
    with locked_dir(out):
        files = export_figure_data(sol, out)
        _write_manifest(out, cfg, "export-figures", files)
        for f in files:
            print(f)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    if not args.samples:
        raise CommandError("--samples PATH is required", EXIT_VALIDATION)
    ccfg = cfg.calibration_config()
    samples = load_samples(args.samples)
    kept, dropped = filter_samples(samples, ccfg.base.pension, cfg.filter_rules())
    for s, reason in dropped:
        log.info("dropped line %d: %s", s.row, reason)
    if not kept:
        raise CommandError("every sample was removed by the filters; blocks consumption_single, consumption_couple, "
                           "housing_single and housing_couple are empty", EXIT_VALIDATION)
    for name, m in block_masks(kept).items():
        if not m.any():
            raise CommandError(f"block {name} is empty after filtering", EXIT_VALIDATION)
    out = Path(args.out)
    with locked_dir(out):
        res = calibrate(kept, ccfg, trace_path=out, resume=args.resume)
        c, h = model_predictions(res.theta_hat, kept, ccfg)
        files = [write_result(res, out / "result.txt", {"config_hash": cfg.digest(), "samples_kept": len(kept),
                                                           "samples_dropped": len(dropped)}),
                 write_residuals(kept, c, h, out / "residuals.csv"), out / "trace.csv"]
        _write_manifest(out, cfg, "calibrate", files)
        for k, v in res.as_dict().items():
            print(f"{k} = {v}")
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def cmd_pension(args) -> int:
    cfg = _config(args)
    params = cfg.model_params()
    g = _status(args.status)
    d = g.index
    w = float(args.wealth)
    if w < 0:
        raise CommandError("wealth must be non-negative", EXIT_VALIDATION)
    age = float(args.age)
    if age < params.market.t0 or age >= params.market.T:
        raise CommandError(f"age must lie in [{params.market.t0}, {params.market.T})", EXIT_VALIDATION)
    w_ret = w if args.w_at_retirement is None else float(args.w_at_retirement)
    arr = ModelArrays.build(params)
    deduction = w_ret * arr.deduction_rate[d, int(age) - params.market.t0]
    home = args.homeowner == "yes"
    p, pa, pi = pension_components(args.alpha * w, w, age, d, home, deduction, params.pension)
    phase = classify_phase(w, args.alpha, age, d, home, deduction, params.pension)
    print(f"asset_test_P_A = {float(pa):.2f}")
    print(f"income_test_P_I = {float(pi):.2f}")
    print(f"income_deduction_M = {deduction:.2f}")
    print(f"pension_P = {float(p):.2f}")
    print(f"phase = {phase.value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="decumulation",
        description="Retirement drawdown, risky share and housing with a means-tested Age Pension. "
                    "Money inputs are policy-year dollars; no CPI conversion is applied.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--echo-config", action="store_true", help="print the resolved configuration as JSON and exit")
    sub = ap.add_subparsers(dest="command")

    def common(p, solver=True):
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--life-table", type=Path, help="life table CSV with columns age,qM,qF")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int)
        if solver:
            p.add_argument("--min-withdrawals", choices=("on", "off"))
            p.add_argument("--grid-size", type=int, help="number of grid intervals k (k + 1 nodes)")
            p.add_argument("--quad-order", type=int, help="Gauss-Hermite order M")

    p = sub.add_parser("solve", help="solve the four household configurations")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="simulate paths and write plot data")
    common(p)
    p.add_argument("--solution", type=Path)
    p.add_argument("--w0", type=float, help="starting liquid wealth, dollars")
    p.add_argument("--status", choices=("single", "couple"))
    p.add_argument("--homeowner", choices=("yes", "no"))
    p.add_argument("--paths", type=int)
    p.add_argument("--audit", action="store_true", help="also run the random-policy optimality audit")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="maximum-likelihood calibration to a samples file")
    common(p)
    p.add_argument("--samples", type=Path)
    p.add_argument("--resume", action="store_true", help="continue from the simplex saved in --out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pension", help="print the means-test breakdown for one state")
    common(p, solver=False)
    p.add_argument("--wealth", type=float, required=True, help="liquid assets, dollars")
    p.add_argument("--alpha", type=float, default=0.0, help="drawdown proportion")
    p.add_argument("--age", type=float, default=65.0)
    p.add_argument("--status", default="single", choices=("single", "couple"))
    p.add_argument("--homeowner", default="no", choices=("yes", "no"))
    p.add_argument("--w-at-retirement", type=float, help="account balance at retirement (default: --wealth)")
    p.set_defaults(func=cmd_pension)

    p = sub.add_parser("export-figures", help="write plot-data CSVs from a saved solution")
    common(p)
    p.add_argument("--solution", type=Path)
    p.set_defaults(func=cmd_export_figures)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.echo_config:
            print(RunConfig.load(getattr(args, "config", None)).to_json())
            return EXIT_OK
        if not args.command:
            ap.print_help()
            return EXIT_VALIDATION
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ModelInconsistencyError, InfeasibleActionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DecumulationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
