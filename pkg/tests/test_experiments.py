import csv
import json
import os

import numpy as np
import pytest
import yaml

from sfgilbert.cli import main
from sfgilbert.errors import ConfigError, FormatError
from sfgilbert.experiments import (
    EXPERIMENTS,
    RESULT_COLUMNS,
    ExperimentConfig,
    load_config,
    replication_seed,
    run,
    validate,
)
from sfgilbert.plotting import ccdf_points, emit_plot_data, read_results_csv
from sfgilbert.sampling import RadiusLaw, read_points, sample_typical_out_sum, stream

SMALL = {
    "chains": {"experiment": "chains", "n": [8, 12], "replications": 3},
    "crossing": {"experiment": "crossing", "n": [8, 12], "s": 4, "beta": 50, "replications": 3},
    "components": {"experiment": "components", "n": [8], "replications": 2},
    "isolated": {"experiment": "isolated", "n": [8, 16], "s": 4, "beta": 0.1, "replications": 3},
    "regimes": {"experiment": "regimes", "n": [8, 16], "s": 5, "alpha": [1.0], "replications": 16},
    "thinning": {"experiment": "thinning", "n": [8, 16], "s": 2, "replications": 20},
    "backbone": {"experiment": "backbone", "n": [16], "beta": 150, "replications": 2, "gw_runs": 500},
    "out-tail": {"experiment": "out-tail", "s": 3, "alpha": [0.0], "samples": 10000},
    "in-tail": {"experiment": "in-tail", "s": 4, "alpha": [0.0, 2.0], "samples": 10000},
}


def cfg(**kw):
    return ExperimentConfig.from_dict(kw)


def write_yaml(tmp_path, data, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_every_experiment_has_a_small_config():
    assert set(SMALL) == set(EXPERIMENTS)


def test_validate_in_tail_needs_s_above_d():
    v = validate({"experiment": "in-tail", "s": 2.0, "d": 2})
    assert not v.ok and any("diverge" in e for e in v.errors)


def test_validate_empty_grid():
    v = validate({"experiment": "chains", "n": []})
    assert not v.ok and any(e.startswith("n:") for e in v.errors)


def test_validate_decreasing_grid():
    assert not validate({"experiment": "chains", "n": [32, 16]}).ok


def test_validate_backbone_below_threshold_is_a_warning():
    v = validate({"experiment": "backbone", "d": 2, "beta": 130, "n": [16]})
    assert v.ok and any("133.08" in w for w in v.warnings)


def test_validate_unknown_key_and_experiment():
    assert not validate({"experiment": "chains", "colour": "red"}).ok
    assert not validate({"experiment": "nonsense"}).ok
    assert not validate({"experiment": "thinning", "s": 3.0, "d": 2, "replications": 4}).ok
    assert not validate({"experiment": "regimes", "replications": 4}).ok


def test_validate_never_raises_on_garbage():
    v = validate({"experiment": "chains", "n": "many", "d": "two"})
    assert not v.ok


def test_config_hash_ignores_execution_keys():
    a = cfg(experiment="chains", n=[8], out_dir="x", threads=1)
    b = cfg(experiment="chains", n=[8], out_dir="y", threads=4)
    c = cfg(experiment="chains", n=[8], seed=1)
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_yaml(tmp_path, {"experiment": "chains", "bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))


def test_replication_seeds_are_distinct():
    seeds = {replication_seed(0, (j, r)) for j in range(5) for r in range(50)}
    assert len(seeds) == 250


@pytest.mark.parametrize("name", sorted(SMALL))
def test_each_experiment_runs(tmp_path, name):
    m = run(cfg(**SMALL[name]), out_dir=str(tmp_path))
    assert m.ok, m.failures
    rows = read_results_csv(os.path.join(m.directory, "results.csv"))
    assert rows and set(rows[0]) == set(RESULT_COLUMNS)
    assert all(r["experiment"] == name for r in rows)
    man = json.loads(open(os.path.join(m.directory, "manifest.json")).read())
    assert man["config_hash"] == m.config_hash and man["replication_seeds"]
    assert os.path.basename(m.directory).startswith(f"{name}-{m.config_hash[:12]}")


def test_regimes_rows_carry_oracle(tmp_path):
    m = run(cfg(**SMALL["regimes"]), out_dir=str(tmp_path), plots=False)
    rows = read_results_csv(os.path.join(m.directory, "results.csv"))
    norm = [r for r in rows if r["statistic"] == "normalized_mean"]
    assert len(norm) == 2 and all(r["oracle"] for r in norm)


def test_single_replication_single_row(tmp_path):
    m = run(cfg(experiment="isolated", n=[4], replications=1), out_dir=str(tmp_path), plots=False)
    rows = read_results_csv(os.path.join(m.directory, "results.csv"))
    assert len(rows) == 1


def _result_bytes(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(".csv") or name == "summary.json":
            out[name] = open(os.path.join(directory, name), "rb").read()
    return out


def test_rerun_is_byte_identical_in_fresh_directory(tmp_path):
    c = cfg(**SMALL["chains"])
    a = run(c, out_dir=str(tmp_path), plots=False)
    b = run(c, out_dir=str(tmp_path), plots=False)
    assert a.directory != b.directory and b.directory.endswith("-1")
    assert _result_bytes(a.directory) == _result_bytes(b.directory)
    assert a.replication_seeds == b.replication_seeds


def test_serial_equals_parallel(tmp_path):
    c = cfg(**SMALL["crossing"])
    a = run(c, out_dir=str(tmp_path / "serial"), threads=1, plots=False)
    b = run(c, out_dir=str(tmp_path / "parallel"), threads=2, plots=False)
    assert _result_bytes(a.directory) == _result_bytes(b.directory)


def test_backbone_run_writes_report(tmp_path):
    m = run(cfg(**SMALL["backbone"]), out_dir=str(tmp_path), plots=False)
    with open(os.path.join(m.directory, "backbone_runs.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["seed", "n", "terminated", "depth", "backbone_size", "diameter_bound", "bfs_diameter", "connected"]
    assert all(int(r["bfs_diameter"]) <= int(r["diameter_bound"]) for r in rows if r["terminated"] == "1")


def test_ccdf_is_monotone(tmp_path):
    x = sample_typical_out_sum(0.0, RadiusLaw.pareto(3.0, 1.0), stream(0), d=2, size=10**5)
    xs, ys = ccdf_points(x)
    assert np.all(np.diff(ys) <= 0) and np.all(np.diff(xs) >= 0)
    (path,) = emit_plot_data({"out": x}, "ccdf", str(tmp_path))
    data = np.loadtxt(path)
    assert data.shape[1] == 2 and np.all(np.diff(data[:, 1]) <= 0)


def test_plot_data_requires_columns(tmp_path):
    with pytest.raises(FormatError):
        emit_plot_data([{"n": 8, "value": 1.0}], "chain-length", str(tmp_path))
    with pytest.raises(FormatError):
        emit_plot_data([], "no-such-kind", str(tmp_path))


def test_plot_data_three_columns(tmp_path):
    rows = [
        {"experiment": "chains", "n": n, "alpha": 0.0, "statistic": "chain_over_log_n", "value": v, "stderr": 0.1}
        for n, v in ((16, 3.0), (32, 3.1))
    ]
    (path,) = emit_plot_data(rows, "chain-length", str(tmp_path))
    assert np.loadtxt(path).shape == (2, 3)


# command line


def test_cli_sample_build_and_distances(tmp_path, capsys):
    pts = str(tmp_path / "p.txt")
    assert main(["--seed", "3", "sample", "--n", "10", "--s", "2", "-o", pts]) == 0
    inst = read_points(pts)
    assert inst.seed == 3 and inst.n == 10
    for cmd in ("build", "thin"):
        assert main([cmd, pts, "-o", str(tmp_path / f"{cmd}.txt")]) == 0
    capsys.readouterr()
    assert main(["distances", pts, "--variant", "thinned", "--pair", "0,1", "--crossing", "--diameter"]) == 0
    out = capsys.readouterr()
    assert out.out.splitlines()[0].startswith("seed,n,") and len(out.out.splitlines()) == 3
    assert "diameter=" in out.err


def test_cli_sample_is_deterministic(tmp_path):
    a, b = str(tmp_path / "a.txt"), str(tmp_path / "b.txt")
    main(["--seed", "5", "sample", "--n", "12", "-o", a])
    main(["--seed", "5", "sample", "--n", "12", "-o", b])
    assert open(a, "rb").read() == open(b, "rb").read()


def test_cli_backbone_and_chains(tmp_path, capsys):
    pts = str(tmp_path / "p.txt")
    main(["--seed", "1", "sample", "--n", "16", "--beta", "150", "-o", pts])
    capsys.readouterr()
    assert main(["backbone", pts]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.split(",")[0] == "seed" and row.split(",")[2] == "1"
    assert main(["chains", pts]) == 0
    assert json.loads(capsys.readouterr().out)["length"] >= 1


def test_cli_experiment(tmp_path, capsys):
    good = write_yaml(tmp_path, SMALL["chains"], "good.yaml")
    bad = write_yaml(tmp_path, {"experiment": "in-tail", "s": 2, "samples": 10000}, "bad.yaml")
    assert main(["experiment", "validate", good]) == 0
    assert main(["experiment", "validate", bad]) == 1
    assert "violation" in capsys.readouterr().out
    assert main(["--out-dir", str(tmp_path / "out"), "experiment", "run", good]) == 0
    assert main(["--out-dir", str(tmp_path / "out"), "experiment", "run", bad]) == 1


def test_cli_exit_codes(tmp_path):
    assert main([]) == 1
    assert main(["sample"]) == 1
    assert main(["build", str(tmp_path / "missing.txt")]) == 2
    broken = tmp_path / "broken.txt"
    broken.write_text("not a point file\n1 2\n")
    assert main(["build", str(broken)]) == 2
