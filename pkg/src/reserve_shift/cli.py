"""Command-line entry point: reserve-shift {simulate,ensemble,regress,extrapolate,ingest,snapshot}."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, contagion, econometrics as em, ingest
from .ensemble import export_snapshot, monte_carlo, run_simulation, snapshot_months
from .simcore import ConfigError, SimConfig

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "RESERVE_SHIFT_SEED"

# narrative horizons (years until the dummy reaches zero) the fits are compared with
REFERENCE_YEARS = {"gdp_model": 18.0, "ms_controls_model": 40.0}


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    master_seed: Optional[int]
    version: str = __version__
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0

    def add_input(self, path) -> None:
        path = Path(path)
        self.inputs[str(path)] = _digest(path.read_bytes())

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs.append({"path": path.name, "sha256": _digest(path.read_bytes())})

    def write(self, out_dir: Path, started: float) -> Path:
        self.duration_s = round(time.perf_counter() - started, 6)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_config(path: Optional[str], seed: Optional[int] = None) -> tuple[SimConfig, Optional[Path]]:
    """TOML config (flat table, or a [simulation] table) with the seed overrides applied.

    Precedence for the master seed: ``--seed``, then the environment variable,
    then the file, then the default.
    """
    values = {}
    src = None
    if path is not None:
        src = Path(path)
        if not src.is_file():
            raise UsageError(f"config file not found: {src}")
        try:
            doc = tomllib.loads(src.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{src}: {exc}") from exc
        values = doc.get("simulation", doc)
        if "simulation" in doc and len(doc) > 1:
            extra = sorted(set(doc) - {"simulation"})
            raise ConfigError(extra[0], "unknown top-level table")
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            values["master_seed"] = int(env)
        except ValueError:
            raise ConfigError("master_seed", f"{SEED_ENV}={env!r} is not an integer") from None
    if seed is not None:
        values["master_seed"] = seed
    return SimConfig.from_mapping(values), src


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    config, src = load_config(args.config, args.seed)
    out = _out_dir(args.out)
    man = RunManifest("simulate", config.to_dict(), config.master_seed)
    if src:
        man.add_input(src)
    run = run_simulation(config, args.run_index, record_snapshots=args.snapshots != "none")
    path = out / "trajectory.csv"
    path.write_text(run.trajectory.to_csv())
    man.add_output(path)
    path = out / "events.csv"
    contagion.write_events_csv(run.events, path)
    man.add_output(path)
    for snap in run.snapshots:
        path = export_snapshot(snap, out / f"snapshot_{snap.month:04d}.{args.snapshots}")
        man.add_output(path)
    man.write(out, started)
    trig = run.trajectory.trigger
    print(f"months={config.horizon_months} trigger={trig} events={len(run.events)} out={out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    started = time.perf_counter()
    config, src = load_config(args.config, args.seed)
    if args.runs is not None:
        config = config.replace(runs=args.runs)
    out = _out_dir(args.out)
    man = RunManifest("ensemble", config.to_dict(), config.master_seed)
    if src:
        man.add_input(src)
    stats = monte_carlo(config, jobs=args.jobs)
    path = out / "ensemble.csv"
    path.write_text(stats.to_csv())
    man.add_output(path)
    if args.plot:
        from .plotting import write_ensemble_figures

        for path in write_ensemble_figures(stats, out):
            man.add_output(path)
    man.write(out, started)
    print(f"runs={stats.runs} months={config.horizon_months} out={out}")
    return EXIT_OK


def cmd_snapshot(args) -> int:
    started = time.perf_counter()
    config, src = load_config(args.config, args.seed)
    months = snapshot_months(config.horizon_months)
    if args.month is not None:
        if not 0 <= args.month < config.horizon_months:
            raise UsageError(f"--month must lie in [0, {config.horizon_months - 1}]")
        config = config.replace(horizon_months=args.month + 1)
    elif not months:
        raise UsageError("horizon 0 has no snapshot")
    run = run_simulation(config, args.run_index, record_snapshots=True)
    snap = run.snapshots[-1]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_snapshot(snap, out, args.format)
    man = RunManifest("snapshot", config.to_dict(), config.master_seed)
    if src:
        man.add_input(src)
    man.add_output(out)
    if args.plot:
        from .plotting import network_figure

        fig = out.with_suffix(".svg")
        fig.write_text(network_figure(snap))
        man.add_output(fig)
    man.write(out.parent, started)
    print(f"month={snap.month} nodes={snap.graph.n} edges={len(snap.graph.edges())} out={out}")
    return EXIT_OK


def _load_panel(args, man: RunManifest) -> ingest.PanelDataset:
    if args.panel is None:
        return ingest.build_panel(ingest.Sources.from_dir(ingest.bundled_replication_dir()))
    if not Path(args.panel).is_file():
        raise FileNotFoundError(args.panel)
    man.add_input(args.panel)
    return ingest.read_panel(args.panel)


_SPEC_OF = {"simple": "simple_gdp", "simple-ms": "simple_ms", "simple-trade": "simple_trade",
            "multiple": "multiple", "ridge": "penalized", "lasso": "penalized"}


def cmd_regress(args) -> int:
    started = time.perf_counter()
    man = RunManifest("regress", {k: v for k, v in vars(args).items() if k != "func"}, args.cv_seed)
    panel = _load_panel(args, man)
    spec = ingest.MODELS[args.spec or _SPEC_OF[args.model]]
    rows = ingest.model_rows(panel, spec, args.year)
    y, X = ingest.design(rows, spec)
    lines = [f"model={args.model} spec={spec.name} year={args.year} n={len(y)} "
             f"issuers={','.join(rows['issuer'])}"]

    if args.model in ("ridge", "lasso"):
        if args.cv:
            grid = np.r_[0.0, np.logspace(-3, 2, 26)] if args.grid is None else args.grid
            lam = em.select_lambda(y, X, grid, args.model, args.folds, args.cv_seed)
            lines.append(f"cv: folds={args.folds} seed={args.cv_seed} grid={len(set(grid))} "
                         f"selected lambda={lam:g}")
        else:
            lam = args.lam if args.lam is not None else 0.0
        res = em.ridge(y, X, lam) if args.model == "ridge" else em.lasso(y, X, lam)
        raw = res.coef[1:] / res.extra["sds"]
        lines.append("unstandardized slopes: " +
                     ", ".join(f"{n}={b:.6g}" for n, b in zip(X.names, raw)))
    else:
        res = em.ols(y, X)
        bp = em.breusch_pagan(res.resid, X)
        lines.append(f"Breusch-Pagan: LM={bp.lm:.4f} p={bp.lm_pvalue:.4f} "
                     f"F={bp.fvalue:.4f} p={bp.f_pvalue:.4f}")
        if "ln_ms" in X.names:
            lines.append(f"Mars test (alpha={args.alpha}): {em.mars_test(res, args.alpha)}")
    if args.chow_split:
        group = rows["issuer"].isin(args.chow_split.split(",")).to_numpy()
        chow_X = em.DesignMatrix(X.values, X.names)
        # dummies that only flag one side are constant within a group
        keep = [i for i in range(len(X.names))
                if np.ptp(chow_X.values[group, i]) > 0 and np.ptp(chow_X.values[~group, i]) > 0]
        chow_X = em.DesignMatrix(X.values[:, keep], [X.names[i] for i in keep])
        ct = em.chow_test(y, chow_X, group)
        lines.append(f"Chow ({args.chow_split} vs rest, on {','.join(chow_X.names)}): "
                     f"F={ct.statistic:.4f} p={ct.pvalue:.4g} df={ct.df}")

    text = res.summary() + "\n" + "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args.out)
        for name, body in (("report.csv", res.to_csv()), ("report.txt", text)):
            (out / name).write_text(body)
            man.add_output(out / name)
        man.write(out, started)
    return EXIT_OK


def _bundled_coefficients() -> Path:
    return Path(str(resources.files("reserve_shift").joinpath("data/china_dummy_coefficients.csv")))


def cmd_extrapolate(args) -> int:
    started = time.perf_counter()
    src = Path(args.coefficients) if args.coefficients else _bundled_coefficients()
    if not src.is_file():
        raise FileNotFoundError(src)
    import pandas as pd

    df = pd.read_csv(src, comment="#")
    if "year" not in df.columns or args.column not in df.columns:
        raise UsageError(f"{src} needs columns year and {args.column}")
    df = df[["year", args.column]].dropna()
    if len(df) < 2:
        raise UsageError(f"{src}: need at least two (year, coefficient) rows, got {len(df)}")
    fit = em.extrapolate_equilibrium(df["year"].to_numpy(), df[args.column].to_numpy())
    lines = [f"column={args.column} points={len(df)}", f"slope={fit.slope:.6g} per year",
             f"intercept={fit.intercept:.6g}"]
    if fit.crossing_year is None:
        lines += ["crossing_year=none (non-positive slope)", "years_from_last=none"]
    else:
        lines += [f"crossing_year={fit.crossing_year:.2f}",
                  f"years_from_last={fit.years_from_last:.2f}"]
    ref = args.reference if args.reference is not None else REFERENCE_YEARS.get(args.column)
    if ref is not None and fit.years_from_last is not None:
        diff = fit.years_from_last - ref
        lines.append(f"reference_years={ref:g} difference={diff:+.2f} "
                     "(narrative horizon is approximate; documented discrepancy, not an error)")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args.out)
        man = RunManifest("extrapolate", {"column": args.column, "reference": ref}, None)
        man.add_input(src)
        (out / "extrapolation.txt").write_text(text)
        man.add_output(out / "extrapolation.txt")
        man.write(out, started)
    return EXIT_OK


def cmd_ingest(args) -> int:
    started = time.perf_counter()
    data = Path(args.data) if args.data else ingest.bundled_replication_dir()
    if not data.is_dir():
        raise FileNotFoundError(data)
    years = args.years
    sources = ingest.Sources.from_dir(data, years)
    spec = ingest.MODELS[args.model] if args.model else None
    panel = ingest.build_panel(sources, years, spec)
    out = _out_dir(args.out)
    man = RunManifest("ingest", {"years": years, "model": args.model}, None)
    man.inputs = {str(data / k): v for k, v in sources.digests.items()}
    for path in panel.write(out):
        man.add_output(path)
    man.write(out, started)
    print(f"rows={len(panel)} drops={len(panel.drops)} out={out}")
    return EXIT_OK


def _years(text: str) -> list[int]:
    years = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            years += range(int(a), int(b) + 1)
        else:
            years.append(int(part))
    return years


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reserve-shift", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def sim_args(sp):
        sp.add_argument("--config", help="TOML file; every key optional")
        sp.add_argument("--seed", type=int, help=f"master seed (overrides {SEED_ENV})")

    sp = sub.add_parser("simulate", help="one run: trajectory, events, snapshots")
    sim_args(sp)
    sp.add_argument("--run-index", type=int, default=0)
    sp.add_argument("--snapshots", choices=("json", "dot", "none"), default="json")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ensemble", help="Monte Carlo mean and std per month")
    sim_args(sp)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--plot", action="store_true", help="also write SVG figures")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("snapshot", help="network state at one month")
    sim_args(sp)
    sp.add_argument("--run-index", type=int, default=0)
    sp.add_argument("--month", type=int, help="default: last month of the horizon")
    sp.add_argument("--format", choices=("json", "dot"), default="json")
    sp.add_argument("--plot", action="store_true")
    sp.add_argument("--out", required=True, help="output file")
    sp.set_defaults(func=cmd_snapshot)

    sp = sub.add_parser("regress", help="cross-sectional FER regressions for one year")
    sp.add_argument("panel", nargs="?", help="panel.csv (default: bundled replication panel)")
    sp.add_argument("--model", choices=tuple(_SPEC_OF), default="simple")
    sp.add_argument("--spec", choices=tuple(ingest.MODELS), help="override the predictor set")
    sp.add_argument("--year", type=int, required=True)
    lam = sp.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float)
    lam.add_argument("--cv", action="store_true", help="pick lambda by k-fold CV")
    sp.add_argument("--grid", type=_floats, help="comma-separated lambda grid for --cv")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--cv-seed", type=int, default=0)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--chow-split", help="comma-separated issuers forming the first group")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_regress)

    sp = sub.add_parser("extrapolate", help="zero crossing of a yearly dummy-coefficient trend")
    sp.add_argument("coefficients", nargs="?", help="CSV with year and coefficient columns")
    sp.add_argument("--column", default="ms_controls_model")
    sp.add_argument("--reference", type=float, help="horizon in years to compare against")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_extrapolate)

    sp = sub.add_parser("ingest", help="build panel.csv from canonical source CSVs")
    sp.add_argument("--data", help="directory of source CSVs (default: bundled)")
    sp.add_argument("--years", type=_years, help="e.g. 2016,2022 or 2016-2022")
    sp.add_argument("--model", choices=tuple(ingest.MODELS),
                    help="also drop rows lacking this model's predictors")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ingest.IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, em.LassoConvergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
