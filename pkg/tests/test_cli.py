import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from aaarisk.cli import (RunConfig, build_config, build_parser, importance_panels, main,
                         overlap_from_predictions, read_config)
from aaarisk.dataset import CostSpec, PriorSpec, Study, canonical_feature_names, write_study
from aaarisk.models import PIPELINE_KINDS
from aaarisk.shift import bayes_cutoff, shift_factor

FAST = ["--folds", "4", "--bootstrap", "50", "--lambda-points", "5", "--lambda-folds", "3"]


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def study28(tmp_path):
    rng = np.random.default_rng(8)
    y = np.r_[np.zeros(30), np.ones(14)].astype(int)
    x = rng.standard_normal((44, 28))
    x[:, 3] += 1.5 * y
    path = tmp_path / "study28.csv"
    write_study(Study(x, y, canonical_feature_names()), path)
    return path


@pytest.fixture
def blobs(tmp_path):
    rng = np.random.default_rng(2)
    y = np.r_[np.zeros(24), np.ones(16)].astype(int)
    x = rng.normal(0, 0.3, (40, 3)) + 4.0 * y[:, None]
    path = tmp_path / "blobs.csv"
    write_study(Study(x, y), path)
    return path


@pytest.fixture
def noisy(tmp_path):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((48, 4))
    y = (rng.random(48) < 1 / (1 + np.exp(-(x[:, 0] - 0.8 * x[:, 1])))).astype(int)
    path = tmp_path / "noisy.csv"
    write_study(Study(x, y), path)
    return path


def test_defaults():
    cfg = RunConfig()
    assert (cfg.l0, cfg.l1, cfg.p1) == (1.0, 7.72, 84 / 733)
    assert cfg.folds == 12 and cfg.pca_k == 5 and cfg.bootstrap == 2000 and cfg.level == 0.90
    assert cfg.pipelines == PIPELINE_KINDS and cfg.cutoff == "tuned"


def test_config_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nfolds = 6\nl1 = 5.0\npipelines = AIC, BIC\n")
    assert read_config(conf)["pipelines"] == ("AIC", "BIC")
    args = build_parser().parse_args(["evaluate", "--config", str(conf), "--folds", "3"])
    cfg = build_config(args)
    assert cfg.folds == 3 and cfg.l1 == 5.0 and cfg.pipelines == ("AIC", "BIC")
    conf.write_text("mystery = 1\n")
    with pytest.raises(ValueError, match="mystery"):
        read_config(conf)


def test_screen_outputs_and_determinism(study28, tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["screen", "--input", str(study28), "--out", str(out1)]) == 0
    assert main(["screen", "--input", str(study28), "--out", str(out2)]) == 0
    table = _rows(out1 / "screening.csv")
    assert len(table) == 29
    assert table[1][0] == canonical_feature_names()[3]
    assert len(list((out1 / "violin").glob("*.csv"))) == 28
    assert len(_rows(out1 / "scatter_top16.csv")[0]) == 17
    for f in ["screening.csv", "violin_summary.csv", "scatter_top16.csv"] + \
             [f"violin/{n}.csv" for n in canonical_feature_names()]:
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()
    assert (out1 / "violins.svg").exists() and (out1 / "scatter_matrix.svg").exists()


def test_screen_top_flag(study28, tmp_path):
    assert main(["screen", "--input", str(study28), "--out", str(tmp_path), "--top", "5"]) == 0
    header = _rows(tmp_path / "scatter_top5.csv")[0]
    assert len(header) == 6 and header[-1] == "group"


def test_bad_input_exit_status(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,group\n1.0,elective\nnan,emergent\n")
    assert main(["screen", "--input", str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "row" in err and "a" in err


def test_evaluate_separable(blobs, tmp_path, capsys):
    assert main(["evaluate", "--input", str(blobs), "--out", str(tmp_path), "--pca-k", "2"] + FAST) == 0
    printed = capsys.readouterr().out
    assert "Bayes reference cutoff: 0.3057" not in printed  # sample prior is 16/40 here
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary["models"]) == set(PIPELINE_KINDS)
    for name, m in summary["models"].items():
        assert (m["misclassified_elective"], m["misclassified_emergent"]) == (0.0, 0.0), name
    for row in _rows(tmp_path / "summary.csv")[1:]:
        assert float(row[3]) == (float(row[1]) + float(row[2])) / 2
    for f in ["risk_curves.svg", "ci.svg", "roc.svg", "ci.csv", "eval_AIC.json", "roc_PC.csv",
              "risk_curve_Sparse.csv"]:
        assert (tmp_path / f).exists()


def test_evaluate_default_constants_reference(tmp_path, capsys):
    rng = np.random.default_rng(1)
    y = np.r_[np.zeros(100), np.ones(44)].astype(int)
    x = rng.standard_normal((144, 2)) + y[:, None]
    path = tmp_path / "s.csv"
    write_study(Study(x, y), path)
    argv = ["evaluate", "--input", str(path), "--out", str(tmp_path / "o"), "--pipelines", "AIC",
            "--cutoff", "bayes", "--bootstrap", "0"]
    assert main(argv) == 0
    assert "Bayes reference cutoff: 0.3057" in capsys.readouterr().out
    rep = json.loads((tmp_path / "o" / "eval_AIC.json").read_text())
    expected = bayes_cutoff(CostSpec(), shift_factor(44 / 144, PriorSpec()))
    assert rep["cutoff"] == expected and rep["bayes_cutoff"] == expected


def test_evaluate_reruns_identical(noisy, tmp_path):
    for d in ("a", "b"):
        assert main(["evaluate", "--input", str(noisy), "--out", str(tmp_path / d),
                     "--pipelines", "BIC,PC", "--pca-k", "2"] + FAST) == 0
    for f in ["summary.csv", "summary.json", "eval_BIC.json", "eval_PC.json", "ci.csv"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_evaluate_jobs_same_output(noisy, tmp_path):
    args = ["evaluate", "--input", str(noisy), "--pipelines", "AIC,BIC", "--folds", "4", "--bootstrap", "50"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_overlap(blobs, noisy, tmp_path):
    assert main(["overlap", "--input", str(blobs), "--out", str(tmp_path / "b"),
                 "--pipelines", "AIC,BIC"] + FAST) == 0
    rows = _rows(tmp_path / "b" / "overlap.csv")
    assert rows[0] == ["observation", "group", "AIC", "BIC", "2-means", "intensity"]
    groups = [int(r[1]) for r in rows[1:]]
    assert groups == sorted(groups)
    assert all(r[2] == r[3] == "0" for r in rows[1:])
    assert main(["overlap", "--input", str(noisy), "--out", str(tmp_path / "n"),
                 "--pipelines", "AIC,AIC"] + FAST) == 1


def test_overlap_hand_fixture():
    y = np.array([1, 0, 1, 0, 0, 1])
    same = np.array([1, 1, 0, 0, 0, 1])
    ov = overlap_from_predictions({"A": same, "B": same.copy()}, y)
    assert set(ov.intensity) <= {0, 2}
    km = np.array([0, 0, 1, 1, 0, 1])
    ov = overlap_from_predictions({"A": same, "B": y.copy()}, y, km)
    assert ov.names == ("A", "B", "2-means")
    np.testing.assert_array_equal(ov.labels, [0, 0, 0, 1, 1, 1])
    # rows in order 1, 3, 4, 0, 2, 5
    np.testing.assert_array_equal(ov.matrix, [[1, 0, 0], [0, 0, 1], [0, 0, 0],
                                              [0, 0, 1], [1, 0, 0], [0, 0, 0]])
    np.testing.assert_array_equal(ov.intensity, [1, 1, 0, 1, 1, 0])


def test_overlap_needs_two(noisy, tmp_path):
    assert main(["overlap", "--input", str(noisy), "--out", str(tmp_path), "--pipelines", "AIC"]) == 1


def test_synth_defaults_and_determinism(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / d), "--n-pop", "20000", "--n-test", "4000"]) == 0
    rep = json.loads((tmp_path / "a" / "oracle_report.json").read_text())
    assert rep["mae_corrected"] < rep["mae_uncorrected"]
    assert rep["bias_uncorrected"] > 0
    for f in ["oracle_report.json", "population_summary.json", "study.csv"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = _rows(tmp_path / "a" / "study.csv")
    assert len(rows) == 145


def test_synth_constant_posterior(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--coef", "0,0,0", "--intercept", "-2",
                 "--n-pop", "20000", "--n0", "300", "--n1", "300", "--n-test", "2000"]) == 0
    rep = json.loads((tmp_path / "oracle_report.json").read_text())
    assert rep["mae_corrected"] < 0.03


def test_synth_insufficient(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--n-pop", "500", "--n1", "400"]) == 1


def test_importance_direction_flip(noisy, tmp_path):
    from aaarisk.dataset import load_study

    s = load_study(noisy)
    cfg = RunConfig(lambda_points=8, lambda_folds=3)
    panels, errors = importance_panels(s, cfg)
    flipped, _ = importance_panels(Study(s.features, 1 - s.labels, s.feature_names), cfg)
    assert not errors
    assert [p[0] for p in panels] == ["MannWhitney", "SparseL", "AIC", "BIC"]
    swap = {"increasing": "decreasing", "decreasing": "increasing"}
    for (_, rows), (_, frows) in zip(panels[2:], flipped[2:]):
        assert [r[0] for r in rows] == [r[0] for r in frows]
        assert [swap[r[2]] for r in rows] == [r[2] for r in frows]


def test_importance_intercept_only(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 3))
    y = np.r_[np.zeros(20), np.ones(20)].astype(int)
    path = tmp_path / "null.csv"
    write_study(Study(x, y), path)
    assert main(["importance", "--input", str(path), "--out", str(tmp_path / "o"),
                 "--lambda-points", "5", "--lambda-folds", "3"]) == 0
    bic = _rows(tmp_path / "o" / "importance_BIC.csv")
    assert bic[1][0] == "(intercept-only)"
    assert (tmp_path / "o" / "importance.svg").exists()


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "aaarisk", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("screen", "evaluate", "overlap", "synth", "importance", "summary.csv"):
        assert name in res.stdout
