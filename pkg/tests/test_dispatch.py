import sys
import textwrap

import numpy as np
import pytest

from gegd.dispatch import Dispatcher, ExternalProblem, decode_design, dispatch_costs, encode_request
from gegd.fdg import generate
from gegd.grid import DesignGrid
from gegd.problems import CostEvaluationError, SumProblem

ECHO_STUB = textwrap.dedent("""
    import json, sys
    for line in sys.stdin:
        req = json.loads(line)
        if req["fidelity"] == "lo" and req["design"].startswith("1"):
            print(json.dumps({"id": req["id"], "error": "refused"}), flush=True)
            continue
        print(json.dumps({"id": req["id"], "cost": float(req["design"].count("1"))}), flush=True)
""")

DYING_STUB = textwrap.dedent("""
    import json, os, sys
    marker = sys.argv[1]
    for line in sys.stdin:
        req = json.loads(line)
        if not os.path.exists(marker):
            open(marker, "w").close()
            sys.exit(1)
        print(json.dumps({"id": req["id"], "cost": 1.0}), flush=True)
""")

ALWAYS_DEAD = "import sys; sys.stdin.readline(); sys.exit(1)\n"


@pytest.fixture
def designs():
    g = DesignGrid(6, 8, 2)
    rng = np.random.default_rng(0)
    return g, [generate(rng.normal(size=g.shape), g) for _ in range(10)]


def test_dispatch_order(designs):
    g, ds = designs
    ref = [float(d.rho_f.sum()) for d in ds]
    with Dispatcher(4) as d4:
        out = dispatch_costs(SumProblem(g), ds, ["hi"] * 10, d4)
    assert out.tolist() == ref
    with pytest.raises(ValueError):
        dispatch_costs(SumProblem(g), ds, ["hi"] * 9)
    with pytest.raises(ValueError):
        Dispatcher(0)


def test_wire_format_roundtrip(designs):
    import json
    _, ds = designs
    msg = json.loads(encode_request(3, "lo", ds[0]))
    assert msg["id"] == 3 and msg["fidelity"] == "lo" and (msg["rows"], msg["cols"]) == (6, 8)
    np.testing.assert_array_equal(decode_design(msg), ds[0].rho_f)
    with pytest.raises(ValueError):
        decode_design({"rows": 2, "cols": 2, "design": "012"})


@pytest.mark.parametrize("processes", [1, 3])
def test_external_echo_matches_reference(tmp_path, designs, processes):
    g, ds = designs
    stub = tmp_path / "echo.py"
    stub.write_text(ECHO_STUB)
    prob = ExternalProblem(g, [sys.executable, str(stub)], processes=processes)
    try:
        out = dispatch_costs(prob, ds, ["hi"] * 10)
        assert out.tolist() == [SumProblem(g).cost(d) for d in ds]
        lo = prob.evaluate_batch([np.ones(g.shape), np.zeros(g.shape)], ["lo", "lo"])
        assert np.isnan(lo[0]) and lo[1] == 0.0
    finally:
        prob.close()


def test_external_restart_once(tmp_path, designs, caplog):
    g, ds = designs
    stub = tmp_path / "dying.py"
    stub.write_text(DYING_STUB)
    prob = ExternalProblem(g, [sys.executable, str(stub), str(tmp_path / "marker")])
    try:
        assert dispatch_costs(prob, ds[:4], ["hi"] * 4).tolist() == [1.0] * 4
    finally:
        prob.close()
    assert "restarting" in caplog.text


def test_external_second_death_aborts(tmp_path, designs):
    g, ds = designs
    stub = tmp_path / "dead.py"
    stub.write_text(ALWAYS_DEAD)
    prob = ExternalProblem(g, [sys.executable, str(stub)])
    try:
        with pytest.raises(CostEvaluationError):
            prob.evaluate_batch(ds[:2], ["hi", "hi"])
    finally:
        prob.close()
