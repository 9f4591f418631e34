import json

import numpy as np
import pytest

from lwlattice.cli import dispatch

GAUSS_1D = {"n": 1, "A": [[1.0]], "interaction": {"type": "zero"}}
QUARTIC_1D = {"n": 1, "A": [[1.0]], "interaction": {"type": "diagonal_quartic", "v": [[1.0]]}}


@pytest.fixture
def model_path(tmp_path):
    def make(obj, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)

    return make


def run_json(capsys, argv):
    code = dispatch(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


class TestOracleCommand:
    def test_gaussian_model(self, capsys, model_path):
        code, payload = run_json(capsys, ["oracle", "--model", model_path(GAUSS_1D)])
        assert code == 0
        assert payload["omega"] == pytest.approx(-0.91893853320467274, abs=1e-12)
        assert payload["green"] == [[pytest.approx(1.0)]]
        assert "std_errors" not in payload

    def test_out_file(self, tmp_path, model_path):
        out = tmp_path / "report.json"
        code = dispatch(["oracle", "--model", model_path(GAUSS_1D), "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["z"] > 0

    def test_mc_byte_identical(self, capsys, model_path):
        argv = [
            "oracle", "--model", model_path(GAUSS_1D),
            "--mode", "mc", "--mc-samples", "65536", "--seed", "5",
        ]
        code1 = dispatch(argv)
        first = capsys.readouterr().out
        code2 = dispatch(argv)
        second = capsys.readouterr().out
        assert code1 == code2 == 0
        assert first == second
        assert json.loads(first)["std_errors"]["omega"] > 0

    def test_validation_exit_code(self, capsys, model_path):
        bad = {"n": 1, "A": [[-1.0]], "interaction": {"type": "zero"}}
        code = dispatch(["oracle", "--model", model_path(bad)])
        assert code == 3  # divergent integral is a numerical failure
        assert "error" in capsys.readouterr().err

    def test_missing_model_file(self, capsys, tmp_path):
        code = dispatch(["oracle", "--model", str(tmp_path / "none.json")])
        assert code == 1

    def test_usage_error_is_validation(self, capsys):
        code = dispatch(["oracle"])  # --model missing
        assert code == 1


class TestInvertAndLw:
    def test_invert_gaussian(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[0.5]]))
        code, payload = run_json(
            capsys, ["invert", "--model", model_path(GAUSS_1D), "--G", str(g)]
        )
        assert code == 0
        assert payload["a_of_g"][0][0] == pytest.approx(2.0, abs=1e-9)

    def test_lw_quartic(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        code, payload = run_json(
            capsys,
            [
                "lw", "--model", model_path(QUARTIC_1D), "--G", str(g),
                "--quad-nodes", "160", "--tol", "1e-11",
            ],
        )
        assert code == 0
        assert payload["phi"] == pytest.approx(-0.61015233527279275, abs=1e-8)
        assert payload["sigma_exact"][0][0] == pytest.approx(-1.0785281441273579, abs=1e-8)

    def test_boundary_too_close_exit(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1e-8]]))
        code = dispatch(["lw", "--model", model_path(QUARTIC_1D), "--G", str(g)])
        assert code == 1


class TestSigmaCommand:
    def test_first_order(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        code, payload = run_json(
            capsys,
            ["sigma", "--model", model_path(QUARTIC_1D), "--G", str(g), "--order", "1"],
        )
        assert code == 0
        assert payload["sigma"][0][0] == pytest.approx(-1.5)

    def test_scaled_interaction_folds_strength(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        scaled = {
            "n": 1,
            "A": [[1.0]],
            "interaction": {
                "type": "scaled",
                "factor": 0.1,
                "inner": {"type": "diagonal_quartic", "v": [[1.0]]},
            },
        }
        code, payload = run_json(
            capsys, ["sigma", "--model", model_path(scaled), "--G", str(g), "--order", "1"]
        )
        assert code == 0
        assert payload["sigma"][0][0] == pytest.approx(-0.15)

    def test_unsupported_order(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        code = dispatch(
            ["sigma", "--model", model_path(QUARTIC_1D), "--G", str(g), "--order", "3"]
        )
        assert code == 1


class TestSolverCommands:
    def test_dyson_bold1(self, capsys, model_path):
        code, payload = run_json(
            capsys,
            [
                "dyson", "--model", model_path(QUARTIC_1D),
                "--sigma-model", "bold1", "--tol", "1e-10",
            ],
        )
        assert code == 0
        assert payload["converged"] is True
        root = (np.sqrt(7.0) - 1.0) / 3.0
        assert payload["final_green"][0][0] == pytest.approx(root, abs=1e-9)

    def test_trace_csv(self, tmp_path, model_path):
        trace = tmp_path / "trace.csv"
        code = dispatch(
            [
                "dyson", "--model", model_path(QUARTIC_1D),
                "--sigma-model", "bold1", "--trace-csv", str(trace), "--out",
                str(tmp_path / "o.json"),
            ]
        )
        assert code == 0
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "iter,residual,free_energy"
        assert len(lines) > 2

    def test_non_convergence_exit_two(self, capsys, model_path):
        code = dispatch(
            [
                "dyson", "--model", model_path(QUARTIC_1D),
                "--sigma-model", "bold1", "--tol", "1e-12", "--max-iter", "2",
            ]
        )
        capsys.readouterr()
        assert code == 2

    def test_minimize_matches(self, capsys, model_path):
        code, payload = run_json(
            capsys,
            [
                "minimize", "--model", model_path(QUARTIC_1D),
                "--sigma-model", "bold1", "--tol", "1e-9",
            ],
        )
        assert code == 0
        root = (np.sqrt(7.0) - 1.0) / 3.0
        assert payload["final_green"][0][0] == pytest.approx(root, abs=1e-8)


class TestNonDiagonalModels:
    def test_composed_interaction_oracle(self, capsys, model_path):
        c = s = float(np.sqrt(0.5))
        model = {
            "n": 2,
            "A": [[1.0, 0.0], [0.0, 1.0]],
            "interaction": {
                "type": "composed",
                "map": [[c, s], [-s, c]],
                "inner": {"type": "diagonal_quartic", "v": [[1.0, 0.5], [0.5, 1.0]]},
            },
        }
        code, payload = run_json(capsys, ["oracle", "--model", model_path(model)])
        assert code == 0
        assert payload["z"] > 0.0

    def test_general_quartic_model(self, capsys, model_path):
        # x^4 with unit coefficient, flat row-major tensor of one entry
        model = {
            "n": 1,
            "A": [[1.0]],
            "interaction": {"type": "general_quartic", "w": [0.125]},
        }
        code, payload = run_json(capsys, ["oracle", "--model", model_path(model)])
        assert code == 0
        # same theory as diagonal_quartic v=[[1]]
        assert payload["z"] == pytest.approx(2.1019609161655169959, abs=1e-8)

    def test_sigma_rejects_general_quartic(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        model = {
            "n": 1,
            "A": [[1.0]],
            "interaction": {"type": "general_quartic", "w": [0.125]},
        }
        code = dispatch(
            ["sigma", "--model", model_path(model), "--G", str(g), "--order", "1"]
        )
        assert code == 1


class TestVerifyCommand:
    def test_gaussian_suite(self, capsys):
        code = dispatch(["verify", "--suite", "gaussian"])
        captured = capsys.readouterr()
        assert code == 0
        reports = json.loads(captured.out)
        assert all(r["passed"] for r in reports)
        assert "PASS" in captured.err

    def test_unknown_suite_usage_error(self, capsys):
        code = dispatch(["verify", "--suite", "bogus"])
        assert code == 1


class TestSweepCommand:
    def test_phi_sweep_rows(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        code = dispatch(
            [
                "sweep", "--model", model_path(QUARTIC_1D), "--G", str(g),
                "--quantity", "phi", "--eps", "1e-3:1e-1:log:10",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "eps,phi,residual_vs_series"
        assert len(lines) == 11
        eps, phi, residual = (float(x) for x in lines[1].split(","))
        assert eps == pytest.approx(1e-3)
        assert phi < 0.0
        assert residual <= 1e-6

    def test_sigma_sweep(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        out = tmp_path / "sweep.csv"
        code = dispatch(
            [
                "sweep", "--model", model_path(QUARTIC_1D), "--G", str(g),
                "--quantity", "sigma", "--eps", "1e-2:1e-1:log:4",
                "--order", "1", "--out", str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "eps,sigma,residual_vs_series"
        assert len(lines) == 5
        # first-order truncation leaves an O(eps^2) residual
        first = float(lines[1].split(",")[2])
        last = float(lines[4].split(",")[2])
        assert first < last

    def test_linear_grid(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        code = dispatch(
            [
                "sweep", "--model", model_path(QUARTIC_1D), "--G", str(g),
                "--eps", "0.01:0.05:lin:5",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        eps_column = [float(line.split(",")[0]) for line in out.strip().splitlines()[1:]]
        assert eps_column == pytest.approx([0.01, 0.02, 0.03, 0.04, 0.05])

    def test_bad_grid_spec(self, capsys, model_path, tmp_path):
        g = tmp_path / "g.json"
        g.write_text(json.dumps([[1.0]]))
        code = dispatch(
            [
                "sweep", "--model", model_path(QUARTIC_1D), "--G", str(g),
                "--eps", "oops",
            ]
        )
        assert code == 1
