import csv
import json

import numpy as np
import pytest

from cdkpop.cli import main, parse_seeds
from cdkpop.heur import relative_gap
from cdkpop.instances import UNION_BALLS_LOCAL_POINT, UNION_BALLS_Q
from cdkpop.relax import POPInstance, build_relaxation
from cdkpop.sdp import read_sdpa, solve


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def strip_timing(rows):
    return [{k: v for k, v in r.items() if k != "wall_time_ms"} for r in rows]


class TestGenerate:
    def test_dense_box(self, tmp_path, capsys):
        assert main(["generate", "dense-box", "--n", "20", "--s", "0.2", "--seed", "7", "--out", str(tmp_path)]) == 0
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        assert POPInstance.load(files[0]).n == 20

    def test_block(self, tmp_path, capsys):
        assert main(["generate", "block", "--p", "7", "--nl", "22", "--overlap", "4", "--seed", "1",
                     "--out", str(tmp_path)]) == 0
        assert "n=130" in capsys.readouterr().out
        cl = json.loads((tmp_path / "block_seed1_cliques.json").read_text())
        assert len(cl["cliques"]) == 7

    def test_union_balls(self, tmp_path):
        main(["generate", "union-balls", "--out", str(tmp_path)])
        pop = POPInstance.load(tmp_path / "union-balls.json")
        x = np.random.default_rng(0).standard_normal(5)
        assert pop.objective(x) == pytest.approx(x @ UNION_BALLS_Q @ x + pop.objective.coefficient((1, 0, 0, 0, 0)) * x[0]
                                                 + sum(pop.objective.coefficient(tuple(int(i == j) for i in range(5))) * x[j]
                                                       for j in range(1, 5)), abs=1e-12)

    def test_bad_params(self, tmp_path, capsys):
        assert main(["generate", "dense-box", "--out", str(tmp_path)]) == 2
        assert main(["generate", "block", "--p", "2", "--nl", "3", "--overlap", "3", "--out", str(tmp_path)]) == 2


class TestRun:
    def test_h1_example(self, tmp_path):
        main(["generate", "example", "--out", str(tmp_path)])
        out = tmp_path / "o"
        rc = main(["run", "--mode", "h1", "--problem", str(tmp_path / "example.json"), "--epsilon", "0.05",
                   "--max-iters", "26", "--delta", "0", "--out", str(out)])
        assert rc == 0
        rows = read_rows(out / "summary_h1.csv")
        assert len(rows) == 1
        assert float(rows[0]["f_d"]) == pytest.approx(-3.0, abs=1e-3)
        trace = json.loads((out / "trace_h1_seed0.json").read_text())
        assert len(trace["iterations"]) == int(rows[0]["iterations"]) + 1

    def test_h2_union_balls(self, tmp_path):
        main(["generate", "union-balls", "--out", str(tmp_path)])
        point = tmp_path / "xbar.json"
        point.write_text(json.dumps(list(UNION_BALLS_LOCAL_POINT)))
        out = tmp_path / "o"
        main(["run", "--mode", "h2", "--problem", str(tmp_path / "union-balls.json"), "--order", "2",
              "--local-point", str(point), "--out", str(out)])
        row = read_rows(out / "summary_h2.csv")[0]
        assert float(row["f_tilde_d"]) == pytest.approx(-6.1883, rel=2e-2)

    def test_batch_deterministic(self, tmp_path):
        args = ["run", "--mode", "relax", "--family", "dense-box", "--n", "5", "--seeds", "0-9"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--jobs", "2", "--out", str(tmp_path / "b")])
        a = read_rows(tmp_path / "a" / "summary_relax.csv")
        b = read_rows(tmp_path / "b" / "summary_relax.csv")
        assert len(a) == 10
        assert strip_timing(a) == strip_timing(b)
        for r in a:
            ub, lb = float(r["ub"]), float(r["f_d"])
            assert float(r["gap_before"]) == pytest.approx(relative_gap(ub, lb), rel=0, abs=1e-9)

    def test_sparse_modes(self, tmp_path):
        main(["generate", "block", "--p", "2", "--nl", "4", "--overlap", "2", "--out", str(tmp_path)])
        prob, cl = tmp_path / "block_seed0.json", tmp_path / "block_seed0_cliques.json"
        for mode in ("h1cs", "h2cs"):
            assert main(["run", "--mode", mode, "--problem", str(prob), "--cliques", str(cl), "--max-iters", "2",
                         "--out", str(tmp_path / mode)]) == 0
            assert read_rows(tmp_path / mode / f"summary_{mode}.csv")[0]["method"] == mode

    def test_order_too_small(self, tmp_path):
        main(["generate", "union-balls", "--out", str(tmp_path)])
        assert main(["run", "--mode", "relax", "--problem", str(tmp_path / "union-balls.json"), "--order", "1",
                     "--out", str(tmp_path / "o")]) == 2

    def test_solver_failure_exit_code(self, tmp_path, monkeypatch):
        main(["generate", "example", "--out", str(tmp_path)])
        # an unreachable tolerance makes the solver give up
        monkeypatch.setenv("CDKPOP_SDP_TOL", "1e-30")
        rc = main(["run", "--mode", "relax", "--problem", str(tmp_path / "example.json"), "--order", "2",
                   "--out", str(tmp_path / "o")])
        row = read_rows(tmp_path / "o" / "summary_relax.csv")[0]
        assert row["status"] == "SolverFailure"
        assert rc == 1

    def test_parse_seeds(self):
        assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]


class TestGrid:
    def test_uniform_square(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["christoffel-grid", "--source", "uniform-square", "--num", "41", "--out", str(out)]) == 0
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert np.allclose(data[np.argmin(data[:, 2]), :2], [0.5, 0.5])

    def test_dirac(self, tmp_path):
        out = tmp_path / "g.csv"
        main(["christoffel-grid", "--source", "dirac", "--point", "0,0", "--beta", "1e-3", "--out", str(out)])
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert np.allclose(data[np.argmin(data[:, 2]), :2], [0.0, 0.0])

    def test_wrong_dimension(self, tmp_path):
        main(["generate", "union-balls", "--out", str(tmp_path)])
        assert main(["christoffel-grid", "--problem", str(tmp_path / "union-balls.json"),
                     "--out", str(tmp_path / "g.csv")]) == 2


class TestExport:
    def test_sdpa(self, tmp_path):
        main(["generate", "example", "--out", str(tmp_path)])
        out = tmp_path / "r.dat-s"
        assert main(["export-sdpa", "--problem", str(tmp_path / "example.json"), "--order", "2", "--out", str(out)]) == 0
        sol = solve(read_sdpa(out))
        # the exported program omits the constant term of the objective (y_0 is substituted)
        f0, _ = build_relaxation(POPInstance.load(tmp_path / "example.json"), 2).objective_vector()
        assert f0 - sol.dual_objective == pytest.approx(-2.0, abs=1e-4)
