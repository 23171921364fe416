"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .evaluation import overlap
from .experiments import (ConfigError, build_config, model_params, parse_config_text,
                          percolation_csv, rows_to_csv, rows_to_plot_data, run_experiment,
                          tessellation_scale)
from .gbg import run_gbg
from .model import read_graph, sample_coupled, write_graph
from .moments import threshold_report

FORCED = {
    "percolation": "percolation_sweep",
    "distinguish": "distinguish",
    "flipbad": "exact_recovery_sweep",
    "infoflow": "infoflow",
    "thresholds": "thresholds",
}
FLIPBAD_METRICS = {"flip_bad_mean", "flip_bad_campbell", "er_threshold_value"}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for trials")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field; repeatable")
    p = argparse.ArgumentParser(prog="prcm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="sample one coupled graph (geograph v1)")
    g = sub.add_parser("gbg", parents=[common], help="run GBG on a sampled or stored graph")
    g.add_argument("--graph", help="geograph v1 input file")
    for name in ("sweep", "percolation", "distinguish", "flipbad", "infoflow", "thresholds"):
        sub.add_parser(name, parents=[common])
    return p


def _load_config(args, experiment=None):
    raw = {}
    if args.config:
        raw.update(parse_config_text(Path(args.config).read_text()))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"{item}: overrides must look like KEY=VALUE")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if experiment is not None:
        raw["experiment"] = experiment
    return build_config(raw)


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _plot_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".plot.csv"))


def _first_params(cfg):
    return model_params(cfg, next(cfg.points()))


def _cmd_generate(args):
    cfg = _load_config(args)
    params = _first_params(cfg)
    graph = sample_coupled(params, cfg.seed)
    if args.out is None:
        write_graph(graph, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_graph(graph, fh)


def _cmd_gbg(args):
    cfg = _load_config(args)
    params = _first_params(cfg)
    if args.graph:
        with open(args.graph) as fh:
            graph = read_graph(fh)
    else:
        graph = sample_coupled(params, cfg.seed, with_info=False)
    res = run_gbg(graph, params, cfg.epsilon, R=tessellation_scale(cfg, params))
    lines = [f"{k} {int(z)}" for k, z in enumerate(res.estimates)]
    stats = dict(res.stats)
    stats["nodes"] = graph.n_nodes
    stats["overlap"] = overlap(res.estimates, graph.labels)
    lines += [f"# {k}={v}" for k, v in stats.items()]
    _emit("\n".join(lines) + "\n", args.out)


def _cmd_sweep(args, forced=None):
    cfg = _load_config(args, forced)
    rows = run_experiment(cfg, workers=args.workers)
    if args.command == "flipbad":
        rows = [r for r in rows if r.metric in FLIPBAD_METRICS]
    out = args.out or cfg.output
    _emit(rows_to_csv(rows, cfg.d), out)
    if out is not None:
        Path(_plot_path(out)).write_text(rows_to_plot_data(rows))


def _cmd_percolation(args):
    cfg = _load_config(args, "percolation_sweep")
    _emit(percolation_csv(cfg), args.out or cfg.output)


def _cmd_thresholds(args):
    cfg = _load_config(args, "thresholds")
    params = _first_params(cfg)
    rep = threshold_report(params.f_in, params.f_out, cfg.d, cfg.epsilon, cfg.eta)
    text = "".join(f"{k}={v!r}\n" for k, v in rep.as_dict().items())
    sys.stdout.write(text)
    out = args.out or cfg.output
    if out is not None:
        rows = run_experiment(cfg)
        Path(out).write_text(rows_to_csv(rows, cfg.d))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "generate":
            _cmd_generate(args)
        elif args.command == "gbg":
            _cmd_gbg(args)
        elif args.command == "percolation":
            _cmd_percolation(args)
        elif args.command == "thresholds":
            _cmd_thresholds(args)
        else:
            _cmd_sweep(args, FORCED.get(args.command))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
