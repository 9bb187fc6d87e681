"""Command line: ``lfp <subcommand> [--config PATH] [--seed S] [--out DIR] [--workers N]``.

Exit status is 0 on success, 1 when a run's checks fail and 2 on a config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import LfpCoefficients, build_lattice, coefficients_from_init
from .data import KINDS, gen_data
from .experiments import (
    PAPER_SCALE,
    PRESETS,
    ConfigError,
    compare_files,
    dataset_from_config,
    load_config_file,
    network_train_config,
    resolve_config,
    run_compare,
    run_flow_verify,
    run_sweep,
    sweep_files,
    evaluation_grid,
    write_outputs,
)
from .nn import InitSpec, TrainingDivergedError, apply_asi, init_net, train_with_backoff
from .plot import Series, heatmap, line_plot
from .solver import RidgeConfig, SingularSystemError, predict, solve_lfp, spectrum_csv

log = logging.getLogger("lfp")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _kv(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = _parse_value(v)
    return out


def _raw_config(args) -> dict:
    raw = load_config_file(args.config) if args.config else {}
    if getattr(args, "preset", None):
        raw = {**raw, "preset": args.preset}
    return raw


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    params = _kv(args.param)
    seed = args.seed if args.seed is not None else 0
    try:
        data = gen_data(args.kind, params, seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    name = args.name or f"{args.kind}.csv"
    note = {"xor_2d": "corner coordinates are a generator choice",
            "random_1d": "sample coordinates and labels are seeded, not measured",
            "asym_2d": "points and labels are seeded, not measured"}.get(args.kind, "")
    cfg = {"kind": args.kind, "params": params, "seed": seed, "note": note}
    write_outputs(args.out, {name: data.to_csv()}, "gen-data", cfg, {name: data.sha256()})
    print(f"wrote {Path(args.out) / name} ({data.M} samples, d={data.d})")
    return EXIT_OK


def cmd_compare(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["dataset"] = {"seed": args.seed}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.widths:
        overrides["widths"] = args.widths
    if args.paper_scale:
        log.warning("paper-scale widths %s with %d seeds: expect hours of training on one core",
                    PAPER_SCALE["widths"], len(PAPER_SCALE["seeds"]))
        overrides.update(PAPER_SCALE)
    cfg = resolve_config("compare", _raw_config(args), overrides)
    report = run_compare(cfg)
    files = compare_files(report)
    write_outputs(args.out, files, "compare", cfg, {"dataset": report.data.sha256()})
    print(report.summary_csv(), end="")
    if len(report.widths) > 1 and not report.l2_strictly_decreasing():
        print("check failed: mean L2 is not strictly decreasing in width")
        return EXIT_CHECK_FAILED
    if any(c["status"] != "ok" for c in report.cells):
        print("check failed: some cells errored")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_flow_verify(args) -> int:
    overrides = {"seed": args.seed} if args.seed is not None else {}
    cfg = resolve_config("flow-verify", _raw_config(args), overrides)
    report = run_flow_verify(cfg)
    files = {"flow_verify.csv": report.to_csv(),
             "summary.json": json.dumps(report.summary(), indent=2, default=float) + "\n"}
    write_outputs(args.out, files, "flow-verify", cfg)
    for r in report.rows:
        print(f"{r['kind']:>15} {r['id']:>3}  max distance {r.get('max_distance', '')!s:>24}  {r['status']}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_sweep(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.v:
        overrides["v_list"] = args.v
    cfg = resolve_config("sweep", _raw_config(args), overrides)
    result = run_sweep(cfg)
    write_outputs(args.out, sweep_files(result), "sweep", cfg)
    print(result.to_csv(), end="")
    s = result.summary()
    print(json.dumps(s))
    if len(result.rows) > 1 and not (s["fp_norm_strictly_increasing"] and s["spearman_fp_norm_vs_test_loss"] > 0.8):
        return EXIT_CHECK_FAILED
    return EXIT_CHECK_FAILED if s["failed_rows"] else EXIT_OK


def _coefficients(args, d: int) -> LfpCoefficients:
    if args.A is not None or args.B is not None:
        return LfpCoefficients(float(args.A or 0.0), float(args.B or 0.0), d)
    preset = PRESETS[args.preset or ("fig1_smooth" if d == 1 else "fig2_xor")]
    if preset["command"] != "compare":
        raise ConfigError("coefficients need a compare preset or explicit --A/--B")
    seed = args.seed if args.seed is not None else 0
    spec = InitSpec.parse({**preset["init"], "seed": seed})
    form = preset["form"] if d == 1 else "general_d"
    return coefficients_from_init(apply_asi(init_net(d, args.width // 2, spec, form)))


def _load_data(args):
    if not Path(args.data).is_file():
        raise ConfigError(f"dataset file {args.data} does not exist")
    return dataset_from_config({"path": args.data})


def cmd_solve(args) -> int:
    data = _load_data(args)
    c = _coefficients(args, data.d)
    lattice = build_lattice(data.d, args.L_prime, args.K)
    dual, spec = solve_lfp(data, lattice, c, RidgeConfig(args.epsilon, args.intercept_mode))
    files = {"spectrum.csv": spectrum_csv(spec), "dual.json": dual.to_json() + "\n"}
    lo, hi = float(np.min(data.domain[0])), float(np.max(data.domain[1]))
    grid = evaluation_grid({"lo": lo, "hi": hi, "n": 800 if data.d == 1 else 40}, data.d)
    pred = predict(spec, grid)
    files["prediction.csv"] = _prediction_csv(grid, pred)
    cfg = {"data": str(args.data), "A": c.A, "B": c.B, "L_prime": args.L_prime, "K": args.K,
           "epsilon": args.epsilon, "intercept_mode": args.intercept_mode}
    write_outputs(args.out, files, "solve", cfg, {"dataset": data.sha256()})
    print(f"A={c.A!r} B={c.B!r} condition={dual.condition:.3e} intercept={spec.intercept!r}")
    return EXIT_OK


def _prediction_csv(grid, values) -> str:
    cols = [f"x{j + 1}" for j in range(grid.shape[1])] + ["h"]
    lines = [",".join(cols)]
    for x, v in zip(grid, values):
        lines.append(",".join(repr(float(t)) for t in x) + "," + repr(float(v)))
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    data = _load_data(args)
    preset = PRESETS[args.preset or ("fig1_smooth" if data.d == 1 else "fig2_xor")]
    if preset["command"] != "compare":
        raise ConfigError(f"preset {args.preset!r} does not describe a network")
    seed = args.seed if args.seed is not None else 0
    form = preset["form"] if data.d == 1 else "general_d"
    net = apply_asi(init_net(data.d, args.width // 2, InitSpec.parse({**preset["init"], "seed": seed}), form))
    t = dict(preset["train"])
    if args.lr is not None:
        t.update(lr_policy="fixed", learning_rate=args.lr)
    if args.optimizer:
        t["optimizer"] = args.optimizer
    if args.max_steps:
        t["max_steps"] = args.max_steps
    tcfg = network_train_config(t, net, data)
    res = train_with_backoff(net, data, tcfg, int(t.get("lr_retries", 0)) if args.lr is None else 0)
    cfg = {"data": str(args.data), "preset": args.preset, "width": args.width, "seed": seed,
           "optimizer": tcfg.optimizer, "learning_rate": res.learning_rate, "max_steps": tcfg.max_steps,
           "stop_loss": tcfg.stop_loss}
    write_outputs(args.out, {"history.csv": res.history_csv(), "net.json": res.net.to_json() + "\n"},
                  "train", cfg, {"dataset": data.sha256()})
    print(f"steps={res.steps} final_loss={res.final_loss:.3e} stopped_by={res.stopped_by}")
    return EXIT_OK


def cmd_plot(args) -> int:
    path = Path(args.csv)
    if not path.is_file():
        raise ConfigError(f"{path} does not exist")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / (args.name or path.with_suffix(".svg").name)
    cols = rows[0].keys() if rows else []
    for c in [args.x, *args.y] + ([args.z] if args.z else []):
        if rows and c not in cols:
            raise ConfigError(f"column {c!r} not in {path}")
    if args.z:
        xs = sorted({float(r[args.x]) for r in rows})
        ys = sorted({float(r[args.y[0]]) for r in rows})
        Z = np.full((len(ys), len(xs)), np.nan)
        for r in rows:
            Z[ys.index(float(r[args.y[0]])), xs.index(float(r[args.x]))] = float(r[args.z])
        svg = heatmap(Z, (xs[0], xs[-1], ys[0], ys[-1]), args.title or args.z, xlabel=args.x, ylabel=args.y[0])
    else:
        series = [Series([float(r[args.x]) for r in rows], [float(r[c]) for r in rows], c, args.kind)
                  for c in args.y]
        svg = line_plot(series, args.title or path.stem, args.x, ", ".join(args.y))
    target.write_text(svg, encoding="utf-8")
    print(f"wrote {target}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or a manifest.json from an earlier run")
    common.add_argument("--seed", type=int, help="base seed (dataset / init / suite, per command)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lfp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a seeded dataset CSV")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator parameter, JSON value")
    p.add_argument("--name", help="output file name (default: <kind>.csv)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("compare", parents=[common], help="NN vs LFP discrepancy across widths and seeds")
    p.add_argument("--preset", choices=[k for k, v in PRESETS.items() if v["command"] == "compare"])
    p.add_argument("--widths", type=int, nargs="+")
    p.add_argument("--paper-scale", action="store_true", help="use the original (slow) widths and 10 seeds")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("flow-verify", parents=[common], help="flow / ridge / closed-form equivalence suite")
    p.set_defaults(func=cmd_flow_verify, preset=None)

    p = sub.add_parser("sweep", parents=[common], help="FP-norm vs test loss over sine frequencies")
    p.add_argument("--preset", choices=[k for k, v in PRESETS.items() if v["command"] == "sweep"])
    p.add_argument("--v", type=int, nargs="+", help="frequencies to sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("solve", parents=[common], help="solve the LFP model on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--A", type=float)
    p.add_argument("--B", type=float)
    p.add_argument("--preset", help="take A, B from this preset's initialization")
    p.add_argument("--width", type=int, default=1000)
    p.add_argument("--L-prime", dest="L_prime", type=float, default=20.0)
    p.add_argument("--K", type=int, default=2000)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--intercept-mode", choices=("unpenalized", "none"), default="unpenalized")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", parents=[common], help="train the two-layer network on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--preset")
    p.add_argument("--width", type=int, default=1000)
    p.add_argument("--optimizer", choices=("gd", "adam"))
    p.add_argument("--lr", type=float)
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plot", parents=[common], help="render CSV columns as SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", nargs="+", required=True)
    p.add_argument("--z", help="value column; renders a heatmap over (x, y)")
    p.add_argument("--kind", choices=("line", "scatter"), default="line")
    p.add_argument("--title")
    p.add_argument("--name", help="output file name")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "width", None) is not None and (args.width < 2 or args.width % 2):
        print("error: --width must be an even integer >= 2", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystemError, TrainingDivergedError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
