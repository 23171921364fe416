"""Declarative sweeps: config parsing, seeded trials, CSV and plot-data output."""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .evaluation import (LikelihoodContext, detect_partitions, flip_bad_count,
                         info_flow_experiment, information_graph_profile,
                         is_flip_bad, overlap)
from .gbg import run_gbg
from .model import (LOG_TORUS, SPARSE, ConnectionFunction, ModelParams, average_function, mix_seed, sample_coupled, sample_null, sample_points)
from .moments import exact_recovery_threshold, threshold_report, triangle_deltas
from .percolation import theta_estimate, theta_sweep_coupled

EXPERIMENTS = ("weak_recovery_sweep", "exact_recovery_sweep", "percolation_sweep",
               "distinguish", "infoflow", "thresholds")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def _float(v):
    return float(v)


def _int(v):
    return int(v)


# name -> (parser, is_list, default)
FIELDS = {
    "experiment": (str, False, "weak_recovery_sweep"),
    "lambda": (_float, True, None),
    "n": (_float, True, [1000.0]),
    "a": (_float, True, [1.0]),
    "b": (_float, True, [0.0]),
    "R": (_float, True, [1.0]),
    "R_out": (_float, True, None),
    "d": (_int, False, 2),
    "regime": (str, False, SPARSE),
    "epsilon": (_float, False, 0.1),
    "eta": (_float, False, 0.05),
    "trials": (_int, False, 20),
    "seed": (_int, False, None),
    "output": (str, False, None),
    "tessellation": (str, False, "support"),
    "window": (_float, False, None),
    "radius": (_float, False, None),
    "L": (_float, False, None),
    "theta_trials": (_int, False, None),
}

SWEPT = ("lambda", "n", "a", "b", "R", "R_out")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    lambdas: tuple
    seed: int
    n: tuple = (1000.0,)
    a: tuple = (1.0,)
    b: tuple = (0.0,)
    R: tuple = (1.0,)
    R_out: tuple | None = None
    d: int = 2
    regime: str = SPARSE
    epsilon: float = 0.1
    eta: float = 0.05
    trials: int = 20
    output: str | None = None
    tessellation: str = "support"
    window: float | None = None
    radius: float | None = None
    L: float | None = None
    theta_trials: int | None = None

    def points(self):
        """Cartesian sweep in a fixed order (lambda varies fastest)."""
        r_out = self.R_out if self.R_out is not None else (None,)
        for n, a, b, R, ro, lam in itertools.product(self.n, self.a, self.b, self.R, r_out, self.lambdas):
            yield {"lambda": lam, "n": n, "a": a, "b": b, "R": R, "R_out": R if ro is None else ro}


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    return raw


def build_config(raw: dict) -> ExperimentConfig:
    values = {}
    for key, value in raw.items():
        if key not in FIELDS:
            raise ConfigError(f"{key}: unknown field")
        parse, is_list, _ = FIELDS[key]
        try:
            if is_list:
                items = [s.strip() for s in str(value).split(",") if s.strip()]
                if not items:
                    raise ConfigError(f"{key}: list must be non-empty")
                values[key] = tuple(parse(s) for s in items)
            else:
                values[key] = parse(value) if value not in (None, "") else None
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r}") from None
    for key, (_, _, default) in FIELDS.items():
        values.setdefault(key, default)
    if values["seed"] is None:
        raise ConfigError("seed: a seed is mandatory")
    if values["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
    if values["lambda"] is None:
        raise ConfigError("lambda: at least one intensity is required")
    for key in ("n", "a", "b", "R"):
        values[key] = tuple(values[key])
    cfg = ExperimentConfig(
        experiment=values["experiment"], lambdas=values["lambda"], seed=values["seed"],
        n=values["n"], a=values["a"], b=values["b"], R=values["R"], R_out=values["R_out"],
        d=values["d"], regime=values["regime"], epsilon=values["epsilon"], eta=values["eta"],
        trials=values["trials"], output=values["output"], tessellation=values["tessellation"],
        window=values["window"], radius=values["radius"], L=values["L"],
        theta_trials=values["theta_trials"],
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.trials < 1:
        raise ConfigError("trials: must be >= 1")
    if cfg.d < 1:
        raise ConfigError("d: must be >= 1")
    if cfg.regime not in (SPARSE, LOG_TORUS):
        raise ConfigError(f"regime: must be {SPARSE} or {LOG_TORUS}")
    if cfg.tessellation not in ("support", "er"):
        raise ConfigError("tessellation: must be support or er")
    if not 0 < cfg.epsilon < 0.5:
        raise ConfigError("epsilon: must lie in (0, 1/2)")
    if any(lam < 0 for lam in cfg.lambdas):
        raise ConfigError("lambda: must be non-negative")
    for key in ("a", "b"):
        if any(not 0 <= v <= 1 for v in getattr(cfg, key)):
            raise ConfigError(f"{key}: must lie in [0, 1]")
    for point in cfg.points():
        try:
            model_params(cfg, point)
        except ValueError as exc:
            field_name = "b" if "dominate" in str(exc) else "regime"
            raise ConfigError(f"{field_name}: {exc}") from None


def model_params(cfg: ExperimentConfig, point: dict) -> ModelParams:
    if cfg.regime == LOG_TORUS:
        return ModelParams.log_regime(point["lambda"], point["a"], point["b"], cfg.d, point["n"])
    f_in = ConnectionFunction.scaled_indicator(point["a"], point["R"])
    f_out = ConnectionFunction.scaled_indicator(point["b"], point["R_out"])
    return ModelParams(point["lambda"], cfg.d, point["n"], f_in, f_out, cfg.regime)


def tessellation_scale(cfg: ExperimentConfig, params: ModelParams) -> float:
    if cfg.tessellation == "er":
        return math.log(params.n) ** (1 / params.d) / (2 * params.d)
    return params.support


def sub_seed(cfg: ExperimentConfig, point_index: int, trial: int) -> int:
    return mix_seed(cfg.seed, zlib.crc32(cfg.experiment.encode()), point_index, trial)


@dataclass
class ResultRow:
    experiment: str
    params: dict
    metric: str
    value: float
    stderr: float
    trials: int
    seed: int
    wall_ms: float = 0.0


# --- per-trial workers (module level so they pickle) ------------------------

def _weak_trial(cfg, point, seed):
    params = model_params(cfg, point)
    graph = sample_coupled(params, seed, with_info=False)
    res = run_gbg(graph, params, cfg.epsilon, R=tessellation_scale(cfg, params))
    N = max(graph.n_nodes, 1)
    return {
        "overlap": overlap(res.estimates, graph.labels),
        "a_good_node_fraction": float(np.mean(res.component_of >= 0)) if graph.n_nodes else 0.0,
        "largest_component_fraction": res.stats["largest_component_nodes"] / N,
    }


def campbell_centres(params: ModelParams) -> np.ndarray:
    """A lattice of planted centres spaced at least two support radii apart.

    Flip-Bad status of a centre depends only on nodes within one support
    radius, so the centres act as independent Palm samples.
    """
    per_axis = max(int(params.side // (2 * params.support)), 1)
    step = params.side / per_axis
    axis = -params.side / 2 + step * (np.arange(per_axis) + 0.5)
    return np.array(list(itertools.product(axis, repeat=params.d)))


# planted centres examined per trial for the Campbell estimate
PALM_DRAWS = 512


def _exact_trial(cfg, point, seed):
    params = model_params(cfg, point)
    graph = sample_coupled(params, seed, with_info=False)
    res = run_gbg(graph, params, cfg.epsilon, R=tessellation_scale(cfg, params))
    count = flip_bad_count(LikelihoodContext(graph, graph.labels, params))
    centres = campbell_centres(params)
    bad = []
    for rep in range(max(1, math.ceil(PALM_DRAWS / len(centres)))):
        palm = sample_coupled(params, mix_seed(seed, 0xCA, rep), planted=centres, with_info=False)
        ctx = LikelihoodContext(palm, palm.labels, params)
        bad += [is_flip_bad(ctx, int(c)) for c in palm.points.planted]
    return {
        "exact_recovery": float(overlap(res.estimates, graph.labels) == 1.0),
        "flip_bad_count": float(count),
        "centre_flip_bad": float(np.sum(bad)),
        "centres": len(bad),
    }


def _distinguish_trial(cfg, point, seed, refs, planted):
    params = model_params(cfg, point)
    L = cfg.L if cfg.L is not None else params.side / 2 - params.support
    if planted:
        graph = sample_coupled(params, seed, with_info=False)
    else:
        pts = sample_points(params, seed)
        graph = sample_null(pts, average_function(params.f_in, params.f_out), params.metric,
                            seed, params.n)
    rep = detect_partitions(graph, L, params, refs=refs)
    return {"statistic": rep.statistic, "correct": float((rep.decision == "planted") == planted)}


def _run_trials(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list:
    rows = []
    for k, point in enumerate(cfg.points()):
        start = time.perf_counter()
        new = _run_point(cfg, k, point, workers)
        wall = (time.perf_counter() - start) * 1000
        for row in new:
            row.wall_ms = wall
        rows.extend(new)
    return rows


def _row(cfg, point, metric, value, stderr, trials):
    return ResultRow(cfg.experiment, dict(point), metric, float(value), float(stderr), trials, cfg.seed)


def _run_point(cfg, k, point, workers):
    T = cfg.trials
    params = model_params(cfg, point)
    if cfg.regime == LOG_TORUS:
        point = dict(point, R=params.support, R_out=params.support)
    seeds = [sub_seed(cfg, k, t) for t in range(T)]
    exp = cfg.experiment
    out = []
    if exp == "weak_recovery_sweep":
        results = _run_trials(_weak_trial, [(cfg, point, s) for s in seeds], workers)
        for metric in ("overlap", "a_good_node_fraction", "largest_component_fraction"):
            out.append(_row(cfg, point, metric, *_mean_se([r[metric] for r in results]), T))
    elif exp == "exact_recovery_sweep":
        results = _run_trials(_exact_trial, [(cfg, point, s) for s in seeds], workers)
        succ = np.mean([r["exact_recovery"] for r in results])
        out.append(_row(cfg, point, "exact_recovery", succ, math.sqrt(succ * (1 - succ) / T), T))
        out.append(_row(cfg, point, "flip_bad_mean", *_mean_se([r["flip_bad_count"] for r in results]), T))
        hits = sum(r["centre_flip_bad"] for r in results)
        draws = sum(r["centres"] for r in results)
        p = hits / draws
        mass = params.lam * params.n
        out.append(_row(cfg, point, "flip_bad_campbell", mass * p,
                        mass * math.sqrt(p * (1 - p) / draws), T))
        out.append(_row(cfg, point, "er_threshold_value",
                        exact_recovery_threshold(params.lam, point["a"], point["b"], cfg.d), 0.0, T))
    elif exp == "percolation_sweep":
        window = cfg.window if cfg.window is not None else 40 * params.support
        g = information_graph_profile(params)
        est, se = theta_estimate(params.lam, g, cfg.d, window, T, sub_seed(cfg, k, 0))
        out.append(_row(cfg, point, "theta", est, se, T))
    elif exp == "distinguish":
        refs = triangle_deltas(params.f_in, params.f_out, params.lam, cfg.d)
        jobs = [(cfg, point, s, refs, t % 2 == 0) for t, s in enumerate(seeds)]
        results = _run_trials(_distinguish_trial, jobs, workers)
        acc = np.mean([r["correct"] for r in results])
        out.append(_row(cfg, point, "accuracy", acc, math.sqrt(acc * (1 - acc) / T), T))
        planted = [r["statistic"] for r, j in zip(results, jobs) if j[4]]
        null = [r["statistic"] for r, j in zip(results, jobs) if not j[4]]
        out.append(_row(cfg, point, "statistic_planted", *_mean_se(planted), len(planted)))
        if null:
            out.append(_row(cfg, point, "statistic_null", *_mean_se(null), len(null)))
        out.append(_row(cfg, point, "delta_G_ref", refs[0], 0.0, T))
        out.append(_row(cfg, point, "delta_H_ref", refs[1], 0.0, T))
    elif exp == "infoflow":
        res = info_flow_experiment(params, cfg.radius, T, sub_seed(cfg, k, 0),
                                   theta_trials=cfg.theta_trials)
        out.append(_row(cfg, point, "success", res.success, res.stderr, T))
        out.append(_row(cfg, point, "reach", res.reach, math.sqrt(res.reach * (1 - res.reach) / T), T))
        out.append(_row(cfg, point, "theta", res.theta, res.theta_stderr, cfg.theta_trials or T))
        out.append(_row(cfg, point, "bound_ok", float(res.theta_bound_check), 0.0, T))
    elif exp == "thresholds":
        rep = threshold_report(params.f_in, params.f_out, cfg.d, cfg.epsilon, cfg.eta)
        for metric, value in rep.as_dict().items():
            out.append(_row(cfg, point, metric, value, 0.0, 1))
    return out


CSV_COLUMNS = ["experiment", "lambda", "n", "a", "b", "R", "R_out", "d", "metric", "value",
               "stderr", "trials", "seed"]


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def rows_to_csv(rows, d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        p = r.params
        w.writerow([r.experiment] + [_fmt(float(p[k])) for k in SWEPT] + [d, r.metric,
                   _fmt(r.value), _fmt(r.stderr), r.trials, r.seed])
    return buf.getvalue()


def rows_to_plot_data(rows) -> str:
    """x = lambda, y = value, yerr = stderr, grouped by metric (and other swept values)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "series", "x", "y", "yerr"])
    for r in rows:
        series = ";".join(f"{k}={_fmt(float(r.params[k]))}" for k in SWEPT if k != "lambda")
        w.writerow([r.metric, series, _fmt(float(r.params["lambda"])), _fmt(r.value), _fmt(r.stderr)])
    return buf.getvalue()


def percolation_csv(cfg: ExperimentConfig, coupled: bool = True) -> str:
    """theta estimates for the information-graph profile over the lambda list.

    With ``coupled`` every trial samples at the largest intensity and thins
    down, so the estimates are monotone in lambda.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "estimate", "stderr", "window", "trials", "seed"])
    for k, point in enumerate(itertools.islice(cfg.points(), 1)):
        params = model_params(cfg, point)
        g = information_graph_profile(params)
        window = cfg.window if cfg.window is not None else 40 * max(params.support, 1e-12)
        lams = list(cfg.lambdas)
        seed = sub_seed(cfg, k, 0)
        if coupled:
            ests, _ = theta_sweep_coupled(lams, g, cfg.d, window, cfg.trials, seed)
        else:
            ests = [theta_estimate(lam, g, cfg.d, window, cfg.trials, seed) for lam in lams]
        for lam, (est, se) in zip(lams, ests):
            w.writerow([_fmt(float(lam)), _fmt(float(est)), _fmt(float(se)), _fmt(float(window)),
                        cfg.trials, cfg.seed])
    return buf.getvalue()
