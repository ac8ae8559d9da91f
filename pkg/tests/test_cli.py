import json
import sys
import textwrap

import numpy as np
import pytest

from gegd.cli import main
from gegd.config import ConfigError, load_config, parse_config
from gegd.io import read_pgm, read_trace

BASE = """
version = 1
algorithm = "{alg}"
seed = 2
output = "{out}"
[problem]
rows = 12
cols = 16
min_feature = 3
"""


def write_cfg(tmp_path, alg="gegd", extra="", name="c.toml"):
    p = tmp_path / name
    p.write_text(BASE.format(alg=alg, out=tmp_path / "out") + extra)
    return p


def test_parse_defaults_and_rejections():
    cfg = parse_config({"version": 1})
    assert cfg.algorithm == "gegd" and cfg.grid.shape == (18, 36)
    for bad in ({}, {"version": 2}, {"version": 1, "nope": 1}, {"version": 1, "problem": {"rows": 3, "extra": 1}},
                {"version": 1, "gegd": {"seed": 3}}, {"version": 1, "algorithm": "sgd"},
                {"version": 1, "problem": {"rows": 2}}, {"version": 1, "gegd": {"sigma_r": -1.0}},
                {"version": 1, "problem": {"kind": "external"}}, {"version": 1, "bench": {"algorithms": ["x"]}}):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    p = tmp_path / "broken.toml"
    p.write_text("version = \n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, extra="[gegd]\nmax_iterations = 12\ncheckpoints = [5]\n")
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    rows = read_trace(out / "trace.csv")
    assert len(rows) == 12
    assert read_pgm(out / "best.pgm").shape == (12, 16)
    assert (out / "best_iter00005.pgm").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 12 and summary["hf_equiv_cost"] == 120.0
    assert main(["feascheck", str(out / "best.pgm"), "--config", str(cfg)]) == 0


@pytest.mark.parametrize("alg,section", [("tf", "[tf]\niterations_per_beta = 2\n"),
                                         ("af_ste", "[af_ste]\niterations = 3\n"),
                                         ("af_pso", "[af_pso]\niterations = 3\n")])
def test_run_baselines(tmp_path, alg, section):
    cfg = write_cfg(tmp_path, alg, section)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / alg)]) == 0
    rows = read_trace(tmp_path / alg / "trace.csv")
    assert rows[0]["algorithm"] == alg


def test_error_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.toml")]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"
    bad = write_cfg(tmp_path, extra="[gegd]\nmystery = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert "mystery" in capsys.readouterr().err
    dead = tmp_path / "dead.py"
    dead.write_text("import sys; sys.stdin.readline(); sys.exit(1)\n")
    ext = tmp_path / "ext.toml"
    ext.write_text(BASE.format(alg="gegd", out=tmp_path / "o2").replace(
        "[problem]", f'[problem]\nkind = "external"\ncommand = ["{sys.executable}", "{dead}"]')
        + "[gegd]\nmax_iterations = 2\n")
    assert main(["run", "--config", str(ext)]) == 3
    assert json.loads(capsys.readouterr().err.strip())["error"] == "backend"
    nan = tmp_path / "nan.py"
    nan.write_text(textwrap.dedent("""
        import json, sys
        for line in sys.stdin:
            print(json.dumps({"id": json.loads(line)["id"], "error": "diverged"}), flush=True)
    """))
    ext.write_text(ext.read_text().replace(str(dead), str(nan)))
    assert main(["run", "--config", str(ext)]) == 4
    assert json.loads(capsys.readouterr().err.strip())["error"] == "numerical"


def test_feascheck_infeasible(tmp_path):
    d = np.zeros((6, 6), int)
    d[2, 2] = 1
    p = tmp_path / "d.csv"
    p.write_text("\n".join(",".join(map(str, r)) for r in d))
    assert main(["feascheck", str(p), "--min-feature", "3"]) == 1
    assert main(["feascheck", str(p)]) == 2


def test_bench_and_covcache(tmp_path):
    cfg = write_cfg(tmp_path, extra="[bench]\nrepetitions = 2\niterations = 4\n")
    assert main(["bench", "--config", str(cfg)]) == 0
    lines = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert lines[0] == "algorithm,rep,best_cost,wall_time,hf_equiv_cost" and len(lines) == 1 + 4 * 2
    assert (tmp_path / "out" / "quartiles.csv").exists()
    assert len(list((tmp_path / "out" / "traces").glob("*.csv"))) == 2 + 2 + 7 * 2 * 2
    bad = write_cfg(tmp_path, extra="[bench]\nrestarts = 9\n", name="b.toml")
    assert main(["bench", "--config", str(bad)]) == 2
    abl = write_cfg(tmp_path, extra='[bench]\nmode = "ablation"\nrepetitions = 1\niterations = 4\nwindow = 2\n', name="a.toml")
    assert main(["bench", "--config", str(abl), "--out", str(tmp_path / "abl")]) == 0
    assert len((tmp_path / "abl" / "ablation.csv").read_text().splitlines()) == 4
    assert main(["covcache", "--config", str(cfg), "--out", str(tmp_path / "cache")]) == 0
    assert len(list((tmp_path / "cache").glob("cov_*.bin"))) == 1
