import csv
import json
from pathlib import Path

import pytest

from confident_crowd.analysis import AnalysisOptions, analyze, render_report
from confident_crowd.cli import SEED_ENV, main
from confident_crowd.dataset import load_dataset
from confident_crowd.model import aggregate

GOLDEN = Path(__file__).parent / "data" / "golden"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def simulate(tmp_path, capsys, *extra, name="sim", bias=("--crowd-bias", -0.888)):
    out = tmp_path / name
    code, echo, _ = run(capsys, "simulate", "--truth", 734, "--sigma-p", 0.8, *bias,
                        "--groups", 10, "--out-dir", out, *extra)
    assert code == 0
    return out, json.loads(echo)


class TestSimulate:
    def test_byte_identical(self, tmp_path, capsys):
        a, _ = simulate(tmp_path, capsys, "--seed", 42, name="a")
        b, _ = simulate(tmp_path, capsys, "--seed", 42, name="b")
        for f in ("data.csv", "questions.csv", "weights.csv"):
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_row_count(self, tmp_path, capsys):
        out, _ = simulate(tmp_path, capsys, "--seed", 1, "--groups", 100, "--group-size", 12)
        rows = list(csv.DictReader(open(out / "data.csv")))
        assert len(rows) == 2400
        assert len(list(csv.DictReader(open(out / "weights.csv")))) == 1200

    def test_seed_echo_from_entropy(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        out, echo = simulate(tmp_path, capsys)
        seed = echo["seed"]
        again, _ = simulate(tmp_path, capsys, "--seed", seed, name="again")
        assert (out / "data.csv").read_bytes() == (again / "data.csv").read_bytes()

    def test_env_seed_and_flag_precedence(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "7")
        _, echo = simulate(tmp_path, capsys, name="env")
        assert echo["seed"] == 7
        _, echo = simulate(tmp_path, capsys, "--seed", 8, name="flag")
        assert echo["seed"] == 8

    def test_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"truth": 10, "sigma_p": 0.3, "n_groups": 2, "seed": 3, "p_zero": 0.5}))
        code, echo, _ = run(capsys, "simulate", "--config", cfg, "--out-dir", tmp_path / "c")
        assert code == 0
        echo = json.loads(echo)
        assert echo["p_zero"] == 0.5 and echo["n_groups"] == 2 and echo["seed"] == 3

    def test_unreachable_crowd_bias(self, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["simulate", "--truth", "5", "--sigma-p", "1", "--crowd-bias", "-0.5", "--p-zero", "1",
                  "--p-one", "0", "--p-out", "0", "--out-dir", str(tmp_path)])
        assert "--crowd-bias" in capsys.readouterr().err

    def test_invalid_flag_named(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--truth", "-1", "--sigma-p", "1", "--seed", "1", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2
        assert "--truth" in capsys.readouterr().err


class TestAnalyze:
    def test_golden_report(self, capsys):
        args = ["analyze", "--data", GOLDEN / "data.csv", "--questions", GOLDEN / "questions.csv"]
        code, first, _ = run(capsys, *args)
        assert code == 0
        _, second, _ = run(capsys, *args)
        assert first == second
        assert first == (GOLDEN / "report.json").read_text(encoding="utf-8")
        json.loads(first)

    def test_writes_report_and_plot_data(self, tmp_path, capsys):
        sim, _ = simulate(tmp_path, capsys, "--seed", 4)
        out = tmp_path / "report"
        code, _, _ = run(capsys, "analyze", "--data", sim / "data.csv", "--questions", sim / "questions.csv",
                         "--out-dir", out)
        assert code == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["fig1_pooled_fit.csv", "fig1_pooled_hist.csv", "fig1_q1_fit.csv", "fig1_q1_hist.csv",
                         "fig2a_q1_weights.csv", "fig2b_q1_sweep.csv", "report.json"]
        report = json.loads((out / "report.json").read_text())
        q = report["questions"][0]
        assert len(q["confident_estimates"]) == 4
        sweep_rows = list(csv.DictReader(open(out / "fig2b_q1_sweep.csv")))
        assert len(sweep_rows) == 41
        hist = list(csv.DictReader(open(out / "fig1_q1_hist.csv")))
        assert {r["trial"] for r in hist} == {"trial1", "trial2"}
        assert all(float(r["band_low"]) <= float(r["band_high"]) for r in hist)

    def test_control_only(self, tmp_path, capsys):
        sim, _ = simulate(tmp_path, capsys, "--seed", 4, "--condition", "control")
        code, out, _ = run(capsys, "analyze", "--data", sim / "data.csv", "--questions", sim / "questions.csv")
        assert code == 0
        q = json.loads(out)["questions"][0]
        assert q["crowd"]["geometric_mean"] > 0
        assert q["sweep"] is None and q["confident_estimates"] is None
        assert q["weights"]["no_signal"] == 120
        assert any("control" in n for n in q["notes"])

    def test_single_group_zero_weights(self, tmp_path, capsys):
        sim, _ = simulate(tmp_path, capsys, "--seed", 4, "--groups", 1, "--p-zero", 1, "--p-one", 0, "--p-out", 0,
                          bias=("--bias-slope", 0))
        code, out, _ = run(capsys, "analyze", "--data", sim / "data.csv", "--questions", sim / "questions.csv",
                           "--per-group")
        q = json.loads(out)["questions"][0]
        crowd = q["crowd"]["geometric_mean"]
        assert all(r["estimate_geomean"] == crowd for r in q["sweep"])
        assert all(c["value"] == pytest.approx(crowd, rel=1e-8) for c in q["confident_estimates"]
                   if c["aggregator"] == "geometric_mean")
        assert q["per_group"][0]["group_id"] == "g1"

    def test_infeasible_question_warns(self, tmp_path, capsys, caplog):
        sim, _ = simulate(tmp_path, capsys, "--seed", 4, "--groups", 1)
        code, out, err = run(capsys, "analyze", "--data", sim / "data.csv", "--questions", sim / "questions.csv",
                             "--min-n", 50)
        assert code == 0
        assert "NoFeasibleOmega" in err + caplog.text
        assert json.loads(out)["questions"][0]["selected_estimate"] is None

    def test_bad_data_exit_status(self, tmp_path, capsys):
        d = tmp_path / "d.csv"
        d.write_text("group_id,subject_id,question_id,condition,trial,estimate\ng1,s1,q1,mean,1,0\n")
        q = tmp_path / "q.csv"
        q.write_text("question_id,text,truth\nq1,x,5\n")
        code, _, err = run(capsys, "analyze", "--data", d, "--questions", q)
        assert code == 1
        assert "d.csv:2" in err and "NonPositiveEstimate" in err
        code, _, err = run(capsys, "analyze", "--data", d, "--questions", q, "--skip-invalid")
        assert code == 0

    def test_library_matches_cli(self, capsys):
        ds = load_dataset(GOLDEN / "data.csv", GOLDEN / "questions.csv")
        report, _, _ = analyze(ds, AnalysisOptions())
        assert render_report(report) == (GOLDEN / "report.json").read_text(encoding="utf-8")
        crowd = aggregate([s.x1 for s in ds.subjects("border")], "geometric_mean")
        assert report["questions"][0]["sweep"][0]["estimate_geomean"] == crowd


class TestSweepCommand:
    def test_explicit_grid(self, tmp_path, capsys):
        code, out, _ = run(capsys, "sweep", "--data", GOLDEN / "data.csv", "--questions", GOLDEN / "questions.csv",
                           "--omegas", "1.0,0.5,0.1")
        assert code == 0
        rows = list(csv.reader(out.splitlines()))
        assert rows[0] == ["omega", "n_selected", "estimate_geomean", "estimate_median"]
        assert [r[0] for r in rows[1:]] == ["1", "0.5", "0.1"]

    def test_empty_selection_blank(self, tmp_path, capsys):
        # mean signal is log(370); every subject moves halfway there, so all weights are 0.5
        import math
        mu = math.log(370.0)
        lines = ["group_id,subject_id,question_id,condition,trial,estimate"]
        for i, x1 in enumerate((10.0, 100.0, 1000.0)):
            x2 = math.exp(0.5 * math.log(x1) + 0.5 * mu)
            lines += [f"g1,s{i},q1,mean,1,{x1!r}", f"g1,s{i},q1,mean,2,{x2!r}"]
        d, q = tmp_path / "d.csv", tmp_path / "q.csv"
        d.write_text("\n".join(lines) + "\n")
        q.write_text("question_id,text,truth\nq1,x,100\n")
        code, out, _ = run(capsys, "sweep", "--data", d, "--questions", q, "--omegas", "1.0,0.1", "--min-n", 1)
        assert code == 0
        rows = list(csv.DictReader(out.splitlines()))
        assert rows[0]["n_selected"] == "3" and rows[0]["estimate_geomean"] == "100"
        assert rows[1] == {"omega": "0.1", "n_selected": "0", "estimate_geomean": "", "estimate_median": ""}

    def test_unknown_question(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--data", str(GOLDEN / "data.csv"), "--questions", str(GOLDEN / "questions.csv"),
                  "--question", "nope"])
        assert exc.value.code == 2

    def test_out_file(self, tmp_path, capsys):
        target = tmp_path / "s.csv"
        code, _, _ = run(capsys, "sweep", "--data", GOLDEN / "data.csv", "--questions", GOLDEN / "questions.csv",
                         "--question", "border", "--out", target)
        assert code == 0
        assert len(target.read_text().splitlines()) == 42

    def test_bad_grid(self, capsys):
        with pytest.raises(SystemExit):
            main(["sweep", "--data", str(GOLDEN / "data.csv"), "--questions", str(GOLDEN / "questions.csv"),
                  "--omegas", "0.1,0.5"])
