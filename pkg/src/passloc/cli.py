"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 I/O error.  Every output
carries the fully resolved configuration in its metadata; feeding that
block back with ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bcrb import bcrb_table
from .exceptions import InvalidParameterError
from .experiments import FIGURES, reproduce_figure
from .geometry import (MeasurementSet, Scenario, default_scenario_path, load_scenario,
                       perturb_receivers, simulate_measurements)
from .harness import AXES, METRICS, ExperimentSpec, MetricTable, sweep
from .parametric_bp import run_parametric_bp
from .sample_bp import PsoConfig, run_sample_bp

log = logging.getLogger("passloc")

EXIT_CONFIG = 2
EXIT_IO = 3

# keys that describe where output goes rather than what is computed
_NOT_ECHOED = {"output", "config", "trace", "gnuplot", "verbose", "func"}


_FILE_TAGS = {"parametric": "parametric", "sample+pso": "sample_pso", "sample-pso": "sample_nopso"}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: config error: {message}\n")


def _common(p: argparse.ArgumentParser, algo=True, trials=False):
    p.add_argument("--scenario", default=None,
                   help="scenario JSON file (positions in m, variances in m^2); default: bundled "
                        "three-target, five-receiver layout")
    p.add_argument("--seed", type=int, default=0, help="root random seed (integer)")
    p.add_argument("-o", "--output", default="-", help="output file, '-' for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")
    p.add_argument("--config", default=None,
                   help="JSON config echoed by an earlier run; explicit flags override it")
    if algo:
        p.add_argument("--algo", default="parametric",
                       choices=("parametric", "sample", "sample+pso", "sample-pso"),
                       help="estimator; 'sample' means particle BP with PSO unless --pso-iters 0")
        p.add_argument("--bp-iters", type=int, default=40, help="BP iterations (count)")
        p.add_argument("--particles", type=int, default=None,
                       help="particles per node (count); default 100 with PSO, 2000 without")
        p.add_argument("--receiver-particles", type=int, default=None,
                       help="particles per receiver (count); default same as --particles")
        p.add_argument("--pso-iters", type=int, default=10, help="PSO iterations per BP iteration (count)")
        p.add_argument("--c1", type=float, default=1.5, help="PSO cognitive acceleration (dimensionless)")
        p.add_argument("--c2", type=float, default=1.5, help="PSO social acceleration (dimensionless)")
        p.add_argument("--inertia", type=float, default=0.72, help="PSO inertia weight (dimensionless)")
        p.add_argument("--damping", type=float, default=0.0,
                       help="parametric message damping factor in [0, 1) (dimensionless)")
        p.add_argument("--model-meas-var", type=float, default=None,
                       help="range variance assumed by the estimator (m^2); default: the scenario's")
    if trials:
        p.add_argument("--trials", type=int, default=500, help="Monte Carlo trials (count)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (count)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="passloc", description="Passive multi-target localization with "
                     "belief propagation and the matching Bayesian bound.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw noisy ranges and receiver prior means")
    _common(p, algo=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run one estimator on one measurement set")
    _common(p)
    p.add_argument("--measurements", default=None,
                   help="JSON written by 'simulate --format json'; default: simulate from --seed")
    p.add_argument("--trace", default=None,
                   help="per-iteration trace CSV path; default <output>_trace.csv, none for stdout")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bcrb", help="position bound (m^2) for every target and receiver")
    _common(p, algo=False)
    p.set_defaults(func=cmd_bcrb)

    p = sub.add_parser("sweep", help="Monte Carlo MSE and bound over one parameter grid")
    _common(p, trials=True)
    p.add_argument("--axis", choices=[a for a in AXES if a != "none"], required=False,
                   help="swept parameter: meas_var (m^2), prior_var (m^2) or n_targets (count)")
    p.add_argument("--grid", default=None, help="comma-separated grid values in the axis units")
    p.add_argument("--metrics", default="mse", help=f"comma-separated subset of {','.join(METRICS)}")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce-figure", help="data behind one of the study figures")
    p.add_argument("figure", type=int, choices=sorted(FIGURES),
                   help="; ".join(f"{k}: {v[0]}" for k, v in FIGURES.items()))
    _common(p, trials=True)
    p.add_argument("--gnuplot", default=None, help="directory for gnuplot data files")
    p.set_defaults(func=cmd_figure)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _scenario(args) -> Scenario:
    src = args.scenario
    if isinstance(src, dict):
        return Scenario.from_dict(src)
    path = Path(src) if src else default_scenario_path()
    try:
        return load_scenario(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario: {path} is not valid JSON ({exc})") from exc
    except InvalidParameterError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def _echo(args, scenario: Scenario) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_ECHOED}
    cfg["scenario"] = scenario.to_dict()
    return cfg


def _pso(args) -> PsoConfig | None:
    try:
        cfg = PsoConfig(c1=args.c1, c2=args.c2, n_pso=args.pso_iters, inertia=args.inertia)
    except InvalidParameterError as exc:
        raise ConfigError(f"pso: {exc}") from exc
    return cfg


def _algo(args) -> str:
    if args.algo == "sample":
        return "sample+pso" if args.pso_iters > 0 else "sample-pso"
    return args.algo


def _spec(args, scenario, **extra) -> ExperimentSpec:
    algo = _algo(args)
    pso = _pso(args)
    for key in ("trials", "bp_iters", "workers"):
        if getattr(args, key, 1) < 1:
            raise ConfigError(f"--{key.replace('_', '-')} must be at least 1")
    try:
        return ExperimentSpec(scenario, algorithm=algo, n_trials=args.trials, seed=args.seed,
                              n_iter=args.bp_iters, n_particles=args.particles,
                              n_receiver_particles=args.receiver_particles, pso=pso,
                              damping=args.damping, model_meas_var=args.model_meas_var,
                              workers=args.workers, **extra)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc


def _emit(args, text: str):
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)


def _header(meta: dict) -> str:
    return f"# {json.dumps(meta)}\n"


def _records(args, meta: dict, columns, rows) -> str:
    if args.format == "json":
        return json.dumps({"metadata": meta, "rows": [dict(zip(columns, r)) for r in rows]},
                          indent=1) + "\n"
    buf = io.StringIO()
    buf.write(_header(meta))
    w = csv.writer(buf)
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _table_text(args, table: MetricTable) -> str:
    return table.to_json() + "\n" if args.format == "json" else table.to_csv()


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> None:
    sc = _scenario(args)
    meas = simulate_measurements(sc, args.seed)
    means = perturb_receivers(sc, args.seed)
    meta = {"config": _echo(args, sc)}
    if args.format == "json":
        doc = {"metadata": meta, "seed": args.seed, "ranges": meas.ranges.tolist(),
               "receiver_prior_means": means.tolist()}
        _emit(args, json.dumps(doc, indent=1) + "\n")
        return
    rows = [("range", i, m, repr(float(meas.ranges[i, m])))
            for i in range(sc.n_targets) for m in range(sc.n_receivers)]
    rows += [(f"receiver_prior_{c}", m, "", repr(float(means[m, k])))
             for m in range(sc.n_receivers) for k, c in enumerate("xy")]
    _emit(args, _records(args, meta, ("quantity", "index", "receiver", "value"), rows))


def _load_measurements(path, sc: Scenario):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"measurements: {path} is not valid JSON ({exc})") from exc
    for key in ("ranges", "receiver_prior_means"):
        if key not in doc:
            raise ConfigError(f"measurements: missing key '{key}'")
    try:
        meas = MeasurementSet(doc["ranges"], int(doc.get("seed", 0)))
    except InvalidParameterError as exc:
        raise ConfigError(f"measurements: {exc}") from exc
    if meas.shape != (sc.n_targets, sc.n_receivers):
        raise ConfigError(f"measurements: ranges have shape {meas.shape}, scenario needs "
                          f"{(sc.n_targets, sc.n_receivers)}")
    return meas, np.asarray(doc["receiver_prior_means"], dtype=float)


def cmd_estimate(args) -> None:
    sc = _scenario(args)
    if args.measurements:
        meas, means = _load_measurements(args.measurements, sc)
    else:
        meas, means = simulate_measurements(sc, args.seed), perturb_receivers(sc, args.seed)
    try:
        priors = sc.priors(means, args.model_meas_var)
    except InvalidParameterError as exc:
        raise ConfigError(f"model_meas_var: {exc}") from exc
    algo = _algo(args)
    if args.bp_iters < 1:
        raise ConfigError("--bp-iters must be at least 1")
    try:
        if algo == "parametric":
            res = run_parametric_bp(priors, meas, args.bp_iters, damping=args.damping)
        else:
            pso = _pso(args) if algo == "sample+pso" else None
            L = args.particles or (100 if algo == "sample+pso" else 2000)
            res = run_sample_bp(priors, meas, args.bp_iters, L, args.receiver_particles, pso, args.seed)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc
    meta = {"config": _echo(args, sc), "info": {k: v for k, v in res.info.items() if k != "particles"}}
    rows = []
    for kind, mean, var, truth in (("target", res.target_mean, res.target_var, sc.targets),
                                   ("receiver", res.receiver_mean, res.receiver_var, sc.receivers)):
        for k in range(len(mean)):
            err = float(((mean[k] - truth[k]) ** 2).sum())
            rows.append((kind, k, repr(float(mean[k, 0])), repr(float(mean[k, 1])),
                         repr(float(var[k, 0])), repr(float(var[k, 1])), repr(err)))
    _emit(args, _records(args, meta, ("node_kind", "node_id", "x", "y", "var_x", "var_y", "sq_error"),
                         rows))
    trace = args.trace
    if trace is None and args.output != "-":
        out = Path(args.output)
        trace = str(out.with_name(out.stem + "_trace.csv"))
    if trace:
        Path(trace).write_text(_header(meta) + res.trace_csv())


def cmd_bcrb(args) -> None:
    sc = _scenario(args)
    try:
        rows = [(k, i, repr(b)) for k, i, b in bcrb_table(sc)]
    except ArithmeticError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    _emit(args, _records(args, {"config": _echo(args, sc)}, ("node_kind", "node_id", "bcrb_m2"), rows))


def _parse_grid(text, key):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse '{text}' as comma-separated numbers") from exc


def cmd_sweep(args) -> None:
    sc = _scenario(args)
    if not args.axis:
        raise ConfigError("axis: --axis is required for sweep")
    if not args.grid:
        raise ConfigError("grid: --grid is required for sweep")
    grid = _parse_grid(args.grid, "grid")
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    spec = _spec(args, sc, axis=args.axis, grid=grid, metrics=metrics)
    try:
        table = sweep(spec)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc
    table.metadata["cli"] = _echo(args, sc)
    _emit(args, _table_text(args, table))


def cmd_figure(args) -> None:
    sc = _scenario(args)
    base = _spec(args, sc)
    table = reproduce_figure(args.figure, base)
    table.metadata["cli"] = _echo(args, sc)
    _emit(args, _table_text(args, table))
    if args.gnuplot:
        _write_gnuplot(table, args.figure, Path(args.gnuplot))


def _write_gnuplot(table: MetricTable, figure: int, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    _, algos, metrics, _, _ = FIGURES[figure]
    multi = len(algos) > 1
    for algo in algos:
        pre = f"{algo}/" if multi else ""
        tag = _FILE_TAGS[algo] if multi else "data"
        if "cdf" in metrics:
            for kind in ("target", "receiver"):
                with open(outdir / f"fig{figure}_{kind}_{tag}.dat", "w") as fh:
                    table.write_gnuplot(fh, pre + "cdf", kind, "all")
        if "rmse_trace" in metrics:
            with open(outdir / f"fig{figure}_{tag}.dat", "w") as fh:
                table.write_gnuplot(fh, pre + "rmse_iter", "target", "all")
        if "mse" in metrics:
            kinds = {r.node_kind: sorted({x.node_id for x in table.rows if x.node_kind == r.node_kind})
                     for r in table.rows}
            for kind, ids in kinds.items():
                for node in ids:
                    with open(outdir / f"fig{figure}_{kind}{node}.dat", "w") as fh:
                        fh.write("# sweep_value mse mse_se bcrb\n")
                        svs = sorted({r.sweep_value for r in table.rows})
                        for sv in svs:
                            vals = []
                            for m in ("mse", "mse_se", "bcrb"):
                                hit = table.select(pre + m if m != "bcrb" else "bcrb", kind, node, sv)
                                vals.append(repr(hit[0].value) if hit else "nan")
                            fh.write(f"{sv!r} {' '.join(vals)}\n")


def _apply_config(parser, argv):
    # a --config file supplies defaults; explicit flags still win
    pre = parser.parse_args(argv)
    if not getattr(pre, "config", None):
        return pre
    text = Path(pre.config).read_text()
    if text.startswith("#"):
        # CSV output: the echo is the JSON comment on the first line
        text = text.splitlines()[0].lstrip("# ")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {pre.config} is not valid JSON ({exc})") from exc
    doc = doc.get("metadata", doc)
    doc = doc.get("cli", doc.get("config", doc))
    if doc.get("subcommand") not in (None, pre.subcommand):
        raise ConfigError(f"config: echoed subcommand '{doc.get('subcommand')}' "
                          f"does not match '{pre.subcommand}'")
    known = set(vars(pre))
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(sorted(unknown))}")
    explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
    for k, v in doc.items():
        if k not in explicit and k != "subcommand":
            setattr(pre, k, v)
    return pre


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"passloc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"passloc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"passloc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
