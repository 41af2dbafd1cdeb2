import csv
import json

import numpy as np
import pytest

from boxhaz import cli, sampler

FAST = ["--burn-in", "20", "--thin", "1", "--samples", "120"]


@pytest.fixture(scope="module")
def simfile(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "d.csv"
    assert cli.main(["simulate", "--n", "150", "--seed", "4", "--out", str(path)]) == 0
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestFit:
    def test_missing_data(self, capsys, tmp_path):
        assert cli.main(["fit", "--gamma", "0.5", "--out", str(tmp_path)]) == 2
        assert "--data" in capsys.readouterr().err

    def test_outputs(self, simfile, tmp_path):
        out = tmp_path / "fit"
        assert cli.main(["fit", "--data", str(simfile), "--gamma", "0.5", "--intervals", "3",
                         "--out", str(out), *FAST]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["summaries"]) == 2 + 3
        assert summary["config"]["sigma"] == [100.0] and summary["config"]["xi"] == 0.01
        assert (out / "samples.csv").exists() and (out / "curves.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0 and str(simfile) in manifest["inputs"]

    def test_cox_branch(self, simfile, tmp_path):
        assert cli.main(["fit", "--data", str(simfile), "--gamma", "0", "--out", str(tmp_path), *FAST]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["config"]["gamma"] == 0.0

    def test_unknown_covariate(self, simfile, tmp_path):
        assert cli.main(["fit", "--data", str(simfile), "--gamma", "0.5", "--constrained-covariate",
                         "nope", "--out", str(tmp_path), *FAST]) == 2

    def test_nonpositive_constrained_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,z\n1,1,-1\n2,1,1\n")
        assert cli.main(["fit", "--data", str(path), "--gamma", "0.5", "--out", str(tmp_path), *FAST]) == 2

    def test_initialization_failure(self, simfile, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise sampler.InitializationError("no admissible start")
        monkeypatch.setattr(sampler, "run_chain", boom)
        assert cli.main(["fit", "--data", str(simfile), "--gamma", "0.5", "--out", str(tmp_path)]) == 3

    def test_replay_bit_exact(self, simfile, tmp_path):
        a = tmp_path / "a"
        assert cli.main(["fit", "--data", str(simfile), "--gamma", "0.25", "--out", str(a), *FAST]) == 0
        assert cli.main(["replay", str(a / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
        for name in ("samples.csv", "summary.json", "curves.csv"):
            assert (a / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_env_override(self, simfile, tmp_path, monkeypatch):
        monkeypatch.setenv("BOXHAZ_GAMMA", "1")
        monkeypatch.setenv("BOXHAZ_SAMPLES", "110")
        assert cli.main(["fit", "--data", str(simfile), "--out", str(tmp_path), "--burn-in", "5",
                         "--thin", "1"]) == 0
        cfg = json.loads((tmp_path / "summary.json").read_text())["config"]
        assert cfg["gamma"] == 1.0 and cfg["M"] == 110


class TestSelect:
    def test_default_grid_shape(self, simfile, tmp_path):
        assert cli.main(["select", "--data", str(simfile), "--out", str(tmp_path),
                         "--burn-in", "5", "--thin", "1", "--samples", "20", "--jobs", "2"]) == 0
        r = rows(tmp_path / "grid.csv")
        assert [(float(x["gamma"]), int(x["J"])) for x in r] == [
            (g, J) for g in (0, 0.25, 0.5, 0.75, 1) for J in (1, 5, 10)]
        assert sum(int(x["best_B"]) for x in r) == 1 and sum(int(x["best_DIC"]) for x in r) == 1

    def test_single_cell(self, simfile, tmp_path):
        assert cli.main(["select", "--data", str(simfile), "--gammas", "0.5", "--intervals-list", "2",
                         "--out", str(tmp_path), *FAST]) == 0
        r = rows(tmp_path / "grid.csv")
        assert len(r) == 1 and r[0]["best_B"] == "1" and r[0]["best_DIC"] == "1"

    def test_failed_cell_recorded(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,status,z\n1,1,1\n2,0,2\n3,1,1\n")
        assert cli.main(["select", "--data", str(path), "--gammas", "1", "--intervals-list", "1,5",
                         "--out", str(tmp_path), *FAST]) == 0
        assert [x["status"] for x in rows(tmp_path / "grid.csv")] == ["ok", "failed"]


class TestSimulate:
    def test_defaults(self, tmp_path):
        out = tmp_path / "d.csv"
        assert cli.main(["simulate", "--n", "300", "--out", str(out)]) == 0
        r = rows(out)
        assert len(r) == 300
        assert 0.15 < np.mean([x["status"] == "0" for x in r]) < 0.35
        m = json.loads((tmp_path / "d.manifest.json").read_text())
        assert m["simulation"]["c_max"] > 0

    def test_no_censoring(self, tmp_path):
        out = tmp_path / "d.csv"
        assert cli.main(["simulate", "--censoring", "none", "--out", str(out)]) == 0
        assert all(x["status"] == "1" for x in rows(out))

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["simulate", "--seed", "9", "--out", str(a)])
        cli.main(["simulate", "--seed", "9", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_invalid_spec(self, tmp_path):
        assert cli.main(["simulate", "--n", "0", "--out", str(tmp_path / "x.csv")]) == 2
        assert cli.main(["simulate", "--beta", "1", "--out", str(tmp_path / "x.csv")]) == 2


class TestDiagnose:
    def write(self, path, cols):
        cols = np.column_stack(cols)
        lines = ["iter," + ",".join(f"p{c}" for c in range(cols.shape[1])) + ",loglik"]
        lines += [f"{i + 1}," + ",".join(repr(float(v)) for v in row) + ",-1.0" for i, row in enumerate(cols)]
        path.write_text("\n".join(lines) + "\n")

    def test_report(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        path = tmp_path / "s.csv"
        self.write(path, [rng.standard_normal(500), rng.standard_normal(500), np.ones(500)])
        assert cli.main(["diagnose", "--samples", str(path)]) == 0
        rep = json.loads(capsys.readouterr().out)
        params = rep["parameters"]
        assert [p["name"] for p in params] == ["p0", "p1", "p2"]
        assert params[2]["flagged"] and params[2]["z"] is None
        assert all(abs(p["z"]) < 3 for p in params[:2])

    def test_with_trace(self, simfile, tmp_path):
        out = tmp_path / "f"
        tr = tmp_path / "t.ndjson"
        cli.main(["fit", "--data", str(simfile), "--gamma", "0.5", "--out", str(out), "--trace", str(tr), *FAST])
        assert cli.main(["diagnose", "--samples", str(out / "samples.csv"), "--trace", str(tr),
                         "--out", str(tmp_path / "r.json")]) == 0
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["acceptance"]["sweeps"] == 20 + 120

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("nonsense\n1\n")
        assert cli.main(["diagnose", "--samples", str(path)]) == 2


def test_help_lists_defaults(capsys):
    assert cli.main(["fit", "--help"]) == 0
    text = capsys.readouterr().out
    for flag, default in [("--sigma", "100.0"), ("--alpha", "2.0"), ("--xi", "0.01"),
                          ("--burn-in", "2000"), ("--thin", "5"), ("--samples", "10000")]:
        assert flag in text and f"(default: {default})" in text
    assert cli.main(["select", "--help"]) == 0
    text = capsys.readouterr().out
    assert "0,0.25,0.5,0.75,1" in text and "1,5,10" in text
