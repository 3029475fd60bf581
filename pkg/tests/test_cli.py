import csv
import io
import json
import math
import shutil
import subprocess

import pytest

from irobd.bounds import bound_cor1_opt, lower_bound_thm3
from irobd.cli import main
from irobd.core import read_instance
from irobd.instances import gen_random
from irobd.sweep import COLUMNS


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


@pytest.fixture
def inst_file(tmp_path, capsys):
    path = tmp_path / "inst.json"
    assert run(["gen", "--family", "random", "seed=3", "T=8", "k=2", "--out", path], capsys)[0] == 0
    return path


class TestGenRunOracle:
    def test_gen_roundtrip(self, inst_file):
        inst = read_instance(inst_file)
        assert inst.T == 8 and inst.k == 2
        assert inst.minimizers.tolist() == gen_random(3, T=8, k=2).minimizers.tolist()

    def test_gen_stdout_and_remark2_reference(self, capsys):
        code, out, _ = run(["gen", "--family", "remark2", "eps=0.1", "gamma=0.05", "n=5"], capsys)
        data = json.loads(out)
        assert code == 0 and len(data["meta"]["reference"]) == 6

    def test_run_reports_costs(self, inst_file, capsys, tmp_path):
        out_path = tmp_path / "run.json"
        code, _, _ = run(["run", "--alg", "irobd", "--instance", inst_file, "--lambda", "0.5", "--out", out_path], capsys)
        data = json.loads(out_path.read_text())
        assert code == 0 and len(data["trajectory"]) == 8
        rep = data["report"]
        assert math.isclose(rep["total"], math.fsum(rep["hitting"] + rep["switching"]), rel_tol=1e-12)

    def test_run_rejects_delayed_robd(self, inst_file, capsys):
        code, _, err = run(["run", "--alg", "robd", "--instance", inst_file], capsys)
        assert code == 2 and "error" in err

    @pytest.mark.parametrize("method", ["auto", "convex", "multistart"])
    def test_oracle(self, inst_file, capsys, method):
        code, out, _ = run(["oracle", "--instance", inst_file, "--method", method, "--restarts", "2"], capsys)
        assert code == 0 and json.loads(out)["report"]["total"] >= 0

    def test_oracle_dp_refuses_large_memory(self, tmp_path, capsys):
        path = tmp_path / "p3.json"
        assert run(["gen", "--family", "random", "seed=0", "p=3", "T=4", "--out", path], capsys)[0] == 0
        assert run(["oracle", "--instance", path, "--method", "dp"], capsys)[0] == 2


class TestReduceBounds:
    def test_reduce_linear(self, tmp_path, capsys):
        sys_path = write_json(tmp_path / "sys.json", {"A": [[0, 1], [-1, 2]], "B": [[0], [1]],
                                                      "w": [[0.1, -0.2]] * 5, "q": [1] * 5})
        code, _, _ = run(["reduce", "--system", sys_path, "--out-dir", tmp_path / "red"], capsys)
        inst = read_instance(tmp_path / "red" / "instance.json")
        rec = json.loads((tmp_path / "red" / "recovery.json").read_text())
        assert code == 0 and inst.k == 2 and rec["C"] == [[[2.0]], [[-1.0]]]

    def test_reduce_nonlinear(self, tmp_path, capsys):
        sys_path = write_json(tmp_path / "sys.json", {"A": [[1.0]], "Q": [1, 1, 1], "v": [[0], [1], [2]],
                                                      "g": {"kind": "drag", "params": {"C1": 0.1, "C2": 0.01}}})
        code, _, _ = run(["reduce", "--system", sys_path, "--kind", "nonlinear", "--out-dir", tmp_path], capsys)
        assert code == 0 and read_instance(tmp_path / "instance.json").T == 3

    def test_reduce_rejects_non_canonical(self, tmp_path, capsys):
        sys_path = write_json(tmp_path / "sys.json", {"A": [[0.5, 1], [-1, 2]], "B": [[0], [1]],
                                                      "w": [[0, 0]], "q": [1]})
        code, _, err = run(["reduce", "--system", sys_path, "--out-dir", tmp_path], capsys)
        assert code == 2 and "row 1" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["reduce", "--system", tmp_path / "nope.json"], capsys)
        assert code == 2 and "nope.json" in err

    def test_bounds(self, capsys):
        code, out, _ = run(["bounds", "--which", "cor1_opt", "m=1", "L=0"], capsys)
        data = json.loads(out)
        assert code == 0 and data["value"] == pytest.approx(0.5 * (1 + math.sqrt(5)), abs=1e-15)
        _, out, _ = run(["bounds", "--which", "thm3", "m=1", "alpha=2", "k=3"], capsys)
        assert json.loads(out)["value"] == 21.0

    def test_bounds_domain_error(self, capsys):
        assert run(["bounds", "--which", "thm3", "m=1", "alpha=0.5", "k=3"], capsys)[0] == 2
        assert run(["bounds", "--which", "cor1", "m=1"], capsys)[0] == 2


def sweep(tmp_path, capsys, config, *extra):
    cfg = write_json(tmp_path / "cfg.json", config)
    out = tmp_path / "out.csv"
    code, _, err = run(["sweep", "--config", cfg, "--out", out, *extra], capsys)
    assert code == 0, err
    return out, list(csv.DictReader(io.StringIO(out.read_text())))


class TestSweep:
    def test_empty_grid_is_header_only(self, tmp_path, capsys):
        out, rows = sweep(tmp_path, capsys, {"family": "thm3", "grid": {"k": []}})
        assert rows == [] and out.read_text() == ",".join(COLUMNS) + "\n"

    def test_exponential_family_matches_lower_bound(self, tmp_path, capsys):
        _, rows = sweep(tmp_path, capsys, {"family": "thm3", "grid": {"m": [1], "alpha": [2], "k": [1, 2, 3, 4, 5]},
                                           "algorithms": ["stay"]})
        assert len(rows) == 5
        for r in rows:
            k = json.loads(r["params"])["k"]
            assert float(r["ratio"]) == pytest.approx(lower_bound_thm3(1, 2, k), rel=1e-12)
            assert r["bound_ok"] == "true"

    def test_matching_bound_at_optimal_lambda(self, tmp_path, capsys):
        _, rows = sweep(tmp_path, capsys, {"family": "remark1", "grid": {"m": [1.0, 2.0], "L": [0.0, 0.5], "T": [20]},
                                           "algorithms": ["robd"], "lambda": ["opt"], "seeds": [0, 1]})
        assert len(rows) == 8
        for r in rows:
            prm = json.loads(r["params"])
            assert r["error"] == "" and r["bound_ok"] == "true"
            assert float(r["ratio"]) <= bound_cor1_opt(prm["m"], prm["L"])[1] + 1e-6

    def test_deterministic_and_thread_independent(self, tmp_path, capsys, monkeypatch):
        config = {"family": "random", "grid": {"T": [6], "k": [0, 2]}, "algorithms": ["irobd", "stay"],
                  "seeds": [0, 1, 2]}
        monkeypatch.setenv("IROBD_THREADS", "1")
        first = sweep(tmp_path, capsys, config)[0].read_bytes()
        monkeypatch.setenv("IROBD_THREADS", "4")
        assert sweep(tmp_path, capsys, config)[0].read_bytes() == first

    def test_row_errors_are_recorded(self, tmp_path, capsys):
        _, rows = sweep(tmp_path, capsys, {"family": "random", "grid": {"k": [1]}, "algorithms": ["robd", "stay"]})
        by_alg = {r["algorithm"]: r for r in rows}
        assert by_alg["robd"]["error"].startswith("InvalidArgument") and by_alg["stay"]["error"] == ""

    def test_figures(self, tmp_path, capsys):
        figs = tmp_path / "figs"
        sweep(tmp_path, capsys, {"family": "thm3", "grid": {"m": [1], "alpha": [1.5], "k": [1, 2, 3]},
                                 "algorithms": ["stay", "irobd"]}, "--figures", figs)
        png = figs / "ratio_thm3.png"
        assert png.exists() and png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestVerify:
    def test_instance_passes(self, inst_file, capsys):
        code, out, _ = run(["verify", "--instance", inst_file, "--lambda", "0.5"], capsys)
        assert code == 0 and "FAIL" not in out and out.count("ok ") >= 3

    def test_sweep_failure_exits_nonzero(self, tmp_path, capsys):
        out, rows = sweep(tmp_path, capsys, {"family": "thm3", "grid": {"m": [1], "alpha": [2], "k": [2]},
                                             "algorithms": ["stay"]})
        assert run(["verify", "--sweep", out], capsys)[0] == 0
        rows[0]["bound_ok"] = "false"
        bad = tmp_path / "bad.csv"
        with open(bad, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        code, text, _ = run(["verify", "--sweep", bad], capsys)
        assert code == 1 and "violates thm3_lower" in text


@pytest.mark.skipif(shutil.which("irobd") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["irobd", "bounds", "--which", "thm3", "m=1", "alpha=2", "k=3"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["value"] == 21.0
