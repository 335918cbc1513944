import csv
import json
import subprocess
import sys

import pytest

from glomix.cli import main, parse_measure, parse_observable
from glomix.errors import ConfigError
from glomix.maps import build_lsv

LSV1 = {"family": "GeneralizedLSV", "p": 1, "kappa": 2, "endpoints": [0, 0.5, 1]}
LSV2 = {"family": "GeneralizedLSV", "p": 2}
# first branch reaches 1 at 1/2, not at 0.4
MISMATCHED = {"family": "GeneralizedLSV", "p": 1, "kappa": 2, "endpoints": [0, 0.4, 1]}


@pytest.fixture
def write_map(tmp_path):
    def write(doc, name="map.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestParsing:
    def test_observables(self):
        assert parse_observable("box:0.5,1").cuts(0, 2) == [0.5, 1.0]
        assert parse_observable("constant:2")(0.3) == 2.0
        for bad in ("box:1", "sine", "constant:x"):
            with pytest.raises(ConfigError):
                parse_observable(bad)

    def test_measures(self):
        m = build_lsv(2)
        assert parse_measure("nu_p", m, 100, 1).p == 2
        assert parse_measure("lambda_q:0.5", m, 100, 1).param == 0.5
        with pytest.raises(ConfigError):
            parse_measure("counting", m, 100, 1)


class TestExitCodes:
    def test_check_passes(self, write_map, tmp_path, capsys):
        assert main(["check", "--map", write_map(LSV1), "--out", str(tmp_path / "o"), "--grid", "2000"]) == 0
        reports = json.loads((tmp_path / "o" / "checks.json").read_text())
        assert len(reports) == 6 and all(r["passed"] for r in reports)

    def test_mismatched_endpoint_is_a_failed_check(self, write_map, tmp_path):
        out = tmp_path / "o"
        assert main(["check", "--map", write_map(MISMATCHED), "--out", str(out)]) == 2
        reports = json.loads((out / "checks.json").read_text())
        assert reports[0]["assumption_id"] == "A1" and not reports[0]["passed"]

    def test_mismatch_in_other_commands(self, write_map, tmp_path):
        assert main(["orbit", "--map", write_map(MISMATCHED), "--x0", "0.3", "--out", str(tmp_path / "o")]) == 2

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["orbit", "--map", str(bad), "--x0", "0.3", "--out", str(tmp_path / "o")]) == 1

    def test_missing_map_file(self, tmp_path):
        assert main(["orbit", "--map", str(tmp_path / "nope.json"), "--x0", "0.3", "--out", str(tmp_path / "o")]) == 1

    def test_pm_without_kappa(self, write_map, tmp_path, capsys):
        doc = {"family": "GeneralizedPM", "p": 1}
        assert main(["orbit", "--map", write_map(doc), "--x0", "0.3", "--out", str(tmp_path / "o")]) == 1
        assert "kappa" in capsys.readouterr().err

    def test_unknown_observable(self, write_map, tmp_path):
        assert main(["mix", "--map", write_map(LSV1), "--F", "sine", "--n", "2", "--out", str(tmp_path / "o")]) == 1


class TestCommands:
    def test_orbit(self, write_map, tmp_path):
        main(["orbit", "--map", write_map(LSV1), "--x0", "0.75", "--n", "2", "--out", str(tmp_path)])
        rows = read_rows(tmp_path / "orbit.csv")
        assert float(rows[1]["x"]) == pytest.approx(0.5)

    def test_countable_cells_default_kappa(self, write_map, tmp_path):
        doc = {"family": "GeneralizedLSV", "p": 1, "endpoints": {"geometric": 0.5}}
        assert main(["orbit", "--map", write_map(doc), "--x0", "0.3", "--n", "1", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "orbit.csv")
        assert float(rows[1]["x"]) == pytest.approx(0.3 + 2 * 0.3**2)

    def test_conjugate_at_points(self, write_map, tmp_path):
        main(["conjugate", "--map", write_map(LSV1), "--at", "0.5,3", "--out", str(tmp_path)])
        rows = read_rows(tmp_path / "conjugate.csv")
        assert float(rows[0]["T_o"]) == pytest.approx(2.0, rel=1e-12)
        assert float(rows[1]["T_o"]) == pytest.approx(5 / 3, rel=1e-12)

    def test_density(self, write_map, tmp_path, capsys):
        pm = {"family": "GeneralizedPM", "p": 1, "kappa": 1}
        assert main(["density", "--map", write_map(pm), "--grid", "2000", "--out", str(tmp_path)]) == 0
        diag = json.loads((tmp_path / "density_diagnostics.json").read_text())
        assert diag["min_H"] > 0

    def test_mix_columns_and_trend(self, write_map, tmp_path):
        assert main(["mix", "--map", write_map(LSV2), "--measure", "nu_p", "--F", "identity",
                     "--g", "box:0.5,1", "--n", "30", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "mix.csv")
        assert list(rows[0]) == ["n", "c_n", "target", "residual", "method", "se", "error_bound"]
        assert len(rows) == 31
        diag = json.loads((tmp_path / "mix_diagnostic.json").read_text())
        assert diag["trend"] == "Decaying"
        res = [abs(float(r["residual"])) for r in rows]
        assert res[-1] < res[1]

    def test_demo(self, tmp_path, capsys):
        assert main(["demo-counterexample", "--n-max", "50", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "counterexample.csv")
        assert len(rows) == 49
        assert all(float(r["leb_at_beta"]) >= 0.5 for r in rows)
        assert "0.192308" in capsys.readouterr().out


class TestReproducibility:
    def run_twice(self, argv, tmp_path, name):
        first = tmp_path / "first"
        assert main(argv + ["--out", str(first)]) == 0
        second = tmp_path / "second"
        assert main(["replay", str(first / "manifest.json"), "--out", str(second)]) == 0
        assert (first / name).read_bytes() == (second / name).read_bytes()
        assert (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()
        return (first / name).read_bytes()

    def test_replay_mix(self, write_map, tmp_path):
        self.run_twice(["mix", "--map", write_map(LSV2), "--n", "8"], tmp_path, "mix.csv")

    def test_replay_montecarlo_across_threads(self, write_map, tmp_path, monkeypatch):
        argv = ["mix", "--map", write_map(LSV1), "--n", "5", "--method", "MonteCarlo", "--samples", "120000", "--seed", "3"]
        monkeypatch.setenv("GLOMIX_THREADS", "1")
        one = self.run_twice(argv, tmp_path / "t1", "mix.csv")
        monkeypatch.setenv("GLOMIX_THREADS", "4")
        four = self.run_twice(argv, tmp_path / "t4", "mix.csv")
        assert one == four

    def test_manifest_hashes_outputs(self, write_map, tmp_path):
        main(["orbit", "--map", write_map(LSV1), "--x0", "0.3", "--out", str(tmp_path)])
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert set(doc["outputs"]) == {"orbit.csv"}
        assert doc["config"]["map"] == LSV1


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "glomix.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("glomix")
