"""Command-line interface: simulate, loocv, report, bench.

`simulate` writes one choice-event dataset per layout; `loocv` trains the
full (model, fold, agent) grid on those datasets and writes the run
directory artifacts; `report` renders a run directory as text; `bench`
compares the compiled and pure-NumPy kernel backends.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import ExperimentConfig, canonical_config, load_config
from .dataset import DatasetFormatError, samples_from_events
from .errors import ConfigError, ParkPrefError
from .layout import LayoutError, load_layout_file
from .models import MODEL_KINDS
from . import results as results_mod
from . import runner as runner_mod

DEFAULT_OUT = "parkpref-run"


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else canonical_config()
    cfg = cfg.with_overrides(
        seed=args.seed,
        epochs=getattr(args, "epochs", None),
        learning_rate=getattr(args, "lr", None),
        patience=getattr(args, "patience", None),
        out_dir=args.out,
    )
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir or DEFAULT_OUT)


def _datasets_dir(args, cfg: ExperimentConfig) -> Path:
    if args.datasets:
        return Path(args.datasets)
    return _out_dir(cfg) / "datasets"


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    events = runner_mod.simulate_experiment(cfg)
    directory = _datasets_dir(args, cfg)
    samples = {}
    for path in cfg.layouts:
        lay = load_layout_file(path)
        samples[lay.id] = samples_from_events(lay, events[lay.id])
    paths = runner_mod.write_datasets(samples, directory)
    for (layout_id, layout_samples), path in zip(sorted(samples.items()),
                                                 paths):
        print(f"layout {layout_id}: {len(layout_samples)} events -> {path}")
    return 0


def cmd_loocv(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    layouts = runner_mod.load_layouts(cfg)
    samples = runner_mod.read_datasets(_datasets_dir(args, cfg),
                                       [lay.id for lay in layouts])
    t0 = time.perf_counter()
    result = runner_mod.run_experiment(
        cfg, samples,
        models=args.models, folds=args.folds, agents=args.agents,
        jobs=args.jobs, datasets_dir=_datasets_dir(args, cfg),
        save_params_dir=(out / "params") if args.save_params else None,
        progress=print,
    )
    elapsed = time.perf_counter() - t0
    results_mod.write_run_dir(out, cfg, result)
    n_ok = sum(o.status == runner_mod.STATUS_FINISHED for o in result.outcomes)
    print(f"{n_ok}/{len(result.outcomes)} runs finished in {elapsed:.1f}s; "
          f"artifacts in {out}")
    return 0


def cmd_report(args) -> int:
    print(results_mod.render_report(args.run_dir), end="")
    return 0


def cmd_bench(args) -> int:
    from . import bench

    print(bench.render_bench(repeats=args.repeats,
                             train_epochs=args.train_epochs), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parkpref",
        description=("Benchmark of spatial-preference models on simulated "
                     "pocket-park choice data."),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="experiment config JSON "
                             "(default: packaged canonical config)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--out", metavar="DIR", default=None,
                        help=f"run directory (default: {DEFAULT_OUT})")
    common.add_argument("--datasets", metavar="DIR", default=None,
                        help="dataset directory (default: <out>/datasets)")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="generate choice-event datasets per layout")
    p_sim.set_defaults(func=cmd_simulate)

    p_cv = sub.add_parser("loocv", parents=[common],
                          help="train the full leave-one-layout-out grid")
    p_cv.add_argument("--epochs", type=int, default=None,
                      help="override training epochs")
    p_cv.add_argument("--lr", type=float, default=None,
                      help="override learning rate")
    p_cv.add_argument("--patience", type=int, default=None,
                      help="override early-stopping patience")
    p_cv.add_argument("--jobs", type=int, default=1,
                      help="worker processes for independent runs")
    p_cv.add_argument("--models", nargs="+", choices=MODEL_KINDS,
                      default=None, help="restrict to these model kinds")
    p_cv.add_argument("--folds", nargs="+", type=int, default=None,
                      help="restrict to these fold ids")
    p_cv.add_argument("--agents", nargs="+", default=None,
                      help="restrict to these agent ids")
    p_cv.add_argument("--save-params", action="store_true",
                      help="export trained parameters per run")
    p_cv.set_defaults(func=cmd_loocv)

    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("run_dir", help="directory written by loocv")
    p_rep.set_defaults(func=cmd_report)

    p_bench = sub.add_parser(
        "bench", help="compare compiled and pure-NumPy kernel backends")
    p_bench.add_argument("--repeats", type=int, default=20,
                         help="timing repetitions per kernel")
    p_bench.add_argument("--train-epochs", type=int, default=2,
                         help="epochs for the training-slice comparison")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LayoutError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParkPrefError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
