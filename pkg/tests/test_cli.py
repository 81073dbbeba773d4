import json

import pytest

from bundlekit.cli import main

QUAD_CONFIG = """
problem.family = quadratic
problem.n = 6
problem.condition = 20
problem.seed = 3
algorithm = apbm
solver.rho = L
solver.qp_tol = 1e-12
epsilons = 1e-3,1e-4
seeds = 3
output_dir = {out}
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(QUAD_CONFIG.format(out=tmp_path / "runs"))
    return path


class TestRunCommand:
    def test_run_writes_outputs(self, config_path, tmp_path, capsys):
        assert main(["run", str(config_path)]) == 0
        out = capsys.readouterr().out
        assert "wrote 2 runs" in out
        summary = json.loads((tmp_path / "runs" / "summary.json").read_text())
        assert len(summary["runs"]) == 2
        assert all(r["envelope_violations"] == 0 for r in summary["runs"])

    def test_missing_config_is_config_error(self):
        assert main(["run", "/nonexistent/path.cfg"]) == 2

    def test_bad_config_key_is_config_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("problem.family=quadratic\nalgorithm=apbm\nwat=1\n")
        assert main(["run", str(path)]) == 2

    def test_unknown_algorithm_lists_names(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("problem.family=quadratic\nalgorithm=never\n")
        assert main(["run", str(path)]) == 2
        err = capsys.readouterr().err
        assert "apbm" in err and "pbm" in err


class TestFitCommand:
    def test_gap_fit_from_trace(self, config_path, tmp_path, capsys):
        main(["run", str(config_path)])
        trace = tmp_path / "runs" / "run_e1_s0.csv"
        assert main(["fit", str(trace), "--kind", "gap"]) == 0
        out = capsys.readouterr().out
        assert "slope=" in out and "r_squared=" in out

    def test_nullrun_fit_from_summary(self, config_path, tmp_path, capsys):
        main(["run", str(config_path)])
        summary = tmp_path / "runs" / "summary.json"
        # Two epsilons only: below the five-point minimum.
        assert main(["fit", str(summary), "--kind", "nullrun"]) == 2

    def test_insufficient_points_is_config_error(self, tmp_path):
        path = tmp_path / "tiny.csv"
        from bundlekit.harness import CSV_HEADER
        path.write_text(CSV_HEADER + "\n1,serious,1.0,0.5,0.1,0.2,0.0,1.0,0,1.0,nan\n")
        assert main(["fit", str(path), "--kind", "gap"]) == 2


class TestLemmaCommand:
    def test_holds(self, capsys):
        assert main(["lemma-recurrence", "--r0", "1", "--cprime", "5",
                     "--kmax", "1000"]) == 0
        assert "holds" in capsys.readouterr().out

    def test_bad_domain(self):
        assert main(["lemma-recurrence", "--r0", "-1", "--cprime", "0"]) == 2


class TestDumpProblem:
    def test_inline_descriptor(self, capsys):
        assert main(["dump-problem", "family=quadratic,n=4,condition=10,seed=2"]) == 0
        out = capsys.readouterr().out
        assert "descriptor=family=quadratic" in out
        assert "f_star=" in out and "x_star=" in out

    def test_descriptor_file(self, tmp_path, capsys):
        path = tmp_path / "p.desc"
        path.write_text("family=log-sum-exp\nn=3\nm=5\nsigma=0.5\nseed=1\n")
        assert main(["dump-problem", str(path)]) == 0
        out = capsys.readouterr().out
        assert "L=" in out

    def test_unknown_family(self, capsys):
        assert main(["dump-problem", "family=unknown"]) == 2
        assert "quadratic" in capsys.readouterr().err

    def test_determinism(self, capsys):
        main(["dump-problem", "family=quadratic,n=4,condition=10,seed=2"])
        first = capsys.readouterr().out
        main(["dump-problem", "family=quadratic,n=4,condition=10,seed=2"])
        assert capsys.readouterr().out == first


class TestAcceptCommand:
    def test_single_fast_criterion(self, capsys):
        assert main(["accept", "--criteria", "11"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "1/1 criteria passed" in out

    def test_failed_criterion_exits_one(self, capsys, monkeypatch):
        from bundlekit import cli
        from bundlekit.acceptance import CriterionResult

        def fake(numbers=None):
            results = [CriterionResult(1, "forced failure", False, "synthetic", 0.0)]
            return results, "1 FAIL"

        monkeypatch.setattr(cli, "run_acceptance", fake)
        assert main(["accept"]) == 1


class TestExitCodes:
    def test_run_with_solver_failure_exits_three(self, config_path, monkeypatch):
        from bundlekit import harness
        from bundlekit.errors import NumericError

        def boom(*args, **kwargs):
            raise NumericError("synthetic failure")

        monkeypatch.setattr(harness, "apbm_run", boom)
        assert main(["run", str(config_path)]) == 3
