import csv
import io

import numpy as np
import pytest

from prcm.cli import main
from prcm.experiments import ConfigError, build_config, parse_config_text, run_experiment, rows_to_csv
from prcm.model import read_graph

BASE = ["--seed", "7", "--set", "lambda=4", "--set", "n=100", "--set", "trials=2"]


def read_rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_missing_seed_is_a_config_error(capsys):
    assert main(["sweep", "--set", "lambda=1"]) == 2
    assert "seed" in capsys.readouterr().err


@pytest.mark.parametrize("override, field", [
    ("b=2", "b"), ("lambda=-1", "lambda"), ("trials=0", "trials"), ("bogus=1", "bogus"),
    ("epsilon=0.7", "epsilon"), ("regime=wrap", "regime"), ("n=abc", "n"),
])
def test_invalid_fields_name_the_field(capsys, override, field):
    assert main(["sweep", "--seed", "1", "--set", "lambda=1", "--set", override]) == 2
    assert field in capsys.readouterr().err


def test_config_file_and_io_errors(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "absent.cfg")]) == 3
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lambda 1\n")
    assert main(["sweep", "--config", str(cfg), "--seed", "1"]) == 2
    assert main(["gbg", *BASE, "--graph", str(tmp_path / "absent.txt")]) == 3


def test_parse_config_text_skips_comments():
    raw = parse_config_text("# header\nlambda = 1, 2  # two points\n\nseed=3\n")
    assert raw == {"lambda": "1, 2", "seed": "3"}
    with pytest.raises(ConfigError):
        build_config({"lambda": "1"})


def test_sweep_grid_and_byte_identity(tmp_path):
    args = ["sweep", "--seed", "11", "--set", "lambda=1,2,4,8,16", "--set", "n=100,200",
            "--set", "trials=2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_rows(a)
    points = {(r["lambda"], r["n"]) for r in rows}
    assert len(points) == 10
    assert {r["metric"] for r in rows} == {"overlap", "a_good_node_fraction", "largest_component_fraction"}
    plot = read_rows(tmp_path / "a.plot.csv")
    assert set(plot[0]) == {"metric", "series", "x", "y", "yerr"}
    assert len(plot) == len(rows)


def test_parallel_workers_match_serial():
    cfg = build_config({"lambda": "2,6", "n": "150", "trials": "3", "seed": "5"})
    serial = rows_to_csv(run_experiment(cfg, workers=1), cfg.d)
    parallel = rows_to_csv(run_experiment(cfg, workers=2), cfg.d)
    assert serial == parallel


def test_gbg_output_format(tmp_path):
    out = tmp_path / "labels.txt"
    assert main(["gbg", *BASE, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    footer = dict(ln[2:].split("=", 1) for ln in lines if ln.startswith("#"))
    assert footer["nodes"] == str(len(body))
    for k, ln in enumerate(body):
        node, label = ln.split()
        assert int(node) == k and label in ("1", "-1")
    assert {"a_good_cells", "components", "overlap"} <= set(footer)


def test_generate_then_gbg_round_trip(tmp_path):
    graph_file = tmp_path / "g.txt"
    assert main(["generate", *BASE, "--out", str(graph_file)]) == 0
    with open(graph_file) as fh:
        g = read_graph(fh)
    direct, stored = tmp_path / "direct.txt", tmp_path / "stored.txt"
    assert main(["gbg", *BASE, "--out", str(direct)]) == 0
    assert main(["gbg", *BASE, "--graph", str(graph_file), "--out", str(stored)]) == 0
    assert direct.read_text() == stored.read_text()
    assert len(direct.read_text().splitlines()) > g.n_nodes


def test_thresholds_output(capsys):
    assert main(["thresholds", "--seed", "0", "--set", "lambda=1", "--set", "b=0.5"]) == 0
    values = dict(ln.split("=", 1) for ln in capsys.readouterr().out.splitlines())
    assert {"lambda_lower", "lambda_upper"} <= set(values)
    assert float(values["lambda_lower"]) < float(values["lambda_upper"])


def test_percolation_columns_and_monotonicity(tmp_path):
    out = tmp_path / "theta.csv"
    assert main(["percolation", "--seed", "3", "--set", "lambda=0.5,1,2,4", "--set", "trials=10",
                 "--set", "window=12", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["lambda", "estimate", "stderr", "window", "trials", "seed"]
    est = [float(r["estimate"]) for r in rows]
    assert est == sorted(est)


def test_flipbad_filters_metrics(tmp_path):
    out = tmp_path / "fb.csv"
    assert main(["flipbad", "--seed", "2", "--set", "lambda=1", "--set", "n=60",
                 "--set", "regime=log_torus", "--set", "a=0.9", "--set", "b=0.1",
                 "--set", "trials=2", "--out", str(out)]) == 0
    assert {r["metric"] for r in read_rows(out)} == {"flip_bad_mean", "flip_bad_campbell",
                                                      "er_threshold_value"}
    assert np.isfinite([float(r["value"]) for r in read_rows(out)]).all()
