"""Study driver: slope fits, branch pairing, config handling, CLI."""

import json
import math
import shutil
from dataclasses import asdict, replace

import numpy as np
import pytest

from oscwall.limitspec import LAMBDA0
from oscwall.studycli import (
    CSV_COLUMNS,
    BranchPairing,
    StudyConfig,
    StudyError,
    compute_predictors,
    config_hash,
    fit_slope,
    main,
    pair_branches,
    run_study,
    write_report,
)


@pytest.fixture(scope="module")
def cli_out(tmp_path_factory):
    return tmp_path_factory.mktemp("cli-out")


@pytest.fixture(scope="module")
def small_cfg():
    # three N values is the minimum a slope fit accepts
    return StudyConfig(profile="flat:d=1", N_list=(1, 2, 3))


@pytest.fixture(scope="module")
def small_report(small_cfg, cli_out):
    return run_study(small_cfg, cache_dir=str(cli_out / "cache"))


@pytest.fixture(scope="module")
def config_json(small_cfg, cli_out):
    path = cli_out / "config.json"
    path.write_text(json.dumps(asdict(small_cfg)), encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# fit_slope


def test_fit_slope_exact_power():
    eps = [0.4, 0.2, 0.1, 0.05]
    slope, r2, intercept = fit_slope([(e, e ** 2) for e in eps])
    assert abs(slope - 2.0) < 1e-12
    assert r2 > 1.0 - 1e-12
    assert abs(intercept) < 1e-12


def test_fit_slope_recovers_prefactor():
    eps = [0.3, 0.15, 0.075]
    slope, r2, intercept = fit_slope([(e, 3.0 * e ** 1.25) for e in eps])
    assert abs(slope - 1.25) < 1e-12
    assert abs(intercept - math.log(3.0)) < 1e-12
    assert r2 > 1.0 - 1e-12


def test_fit_slope_constant_values():
    # zero variance in log(value): the fit is flat and r^2 reports 1
    slope, r2, _ = fit_slope([(0.4, 5.0), (0.2, 5.0), (0.1, 5.0)])
    assert abs(slope) < 1e-12
    assert r2 == 1.0


def test_fit_slope_needs_three_points():
    with pytest.raises(ValueError, match="at least 3"):
        fit_slope([(0.2, 1.0), (0.1, 0.5)])


@pytest.mark.parametrize("bad", [(0.1, 0.0), (0.1, -2.0), (0.0, 1.0),
                                 (-0.1, 1.0)])
def test_fit_slope_rejects_nonpositive(bad):
    pts = [(0.4, 1.0), (0.2, 0.5), bad]
    with pytest.raises(ValueError, match="positive"):
        fit_slope(pts)


# ---------------------------------------------------------------------------
# pair_branches


def test_pair_branches_identity():
    pairing = pair_branches((44.0, 55.1), (44.06, 55.3))
    assert isinstance(pairing, BranchPairing)
    assert pairing.mismatch == pytest.approx(0.06 + 0.2, rel=1e-12)
    assert pairing.swapped > pairing.mismatch
    assert not pairing.ambiguous


def test_pair_branches_ambiguous_on_equal_predictions():
    pairing = pair_branches((49.9, 50.1), (50.0, 50.0))
    assert pairing.ambiguous
    assert pairing.mismatch == pytest.approx(pairing.swapped)


def test_pair_branches_crossed_raises():
    with pytest.raises(StudyError, match="crossed"):
        pair_branches((55.1, 44.0), (44.06, 55.3))


def test_pair_branches_arity():
    with pytest.raises(ValueError):
        pair_branches((1.0,), (1.0, 2.0))


# ---------------------------------------------------------------------------
# StudyConfig


def test_config_defaults_are_valid():
    cfg = StudyConfig()
    assert cfg.profile == "cosine:d=1,a=0.4"
    assert cfg.N_list == (3, 5, 7, 9, 11, 13)
    with pytest.raises(Exception):
        cfg.beta = 0.7    # frozen


@pytest.mark.parametrize("kwargs", [
    {"N_list": ()},
    {"N_list": (0, 1)},
    {"N_list": (3, 3)},
    {"N_list": (5, 3)},
    {"N_list": (17,)},              # above the default cap of 15
    {"beta": 0.0},
    {"beta": 1.0},
    {"beta": -0.5},
    {"orders": (0, 4)},
    {"eig_count": 1},
    {"profile": "box:d=1"},
    {"profile": "flat:d=0"},
])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        StudyConfig(**kwargs)


def test_config_cap_can_be_raised():
    cfg = StudyConfig(N_list=(17,), max_N=17)
    assert cfg.N_list == (17,)


def test_config_coerces_sequences():
    cfg = StudyConfig(N_list=[1, 2], orders=[0, 1])
    assert cfg.N_list == (1, 2)
    assert cfg.orders == (0, 1)


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys: color"):
        StudyConfig.from_dict({"profile": "flat:d=1", "color": "red"})


def test_config_json_round_trip(tmp_path):
    cfg = StudyConfig(profile="flat:d=0.5", N_list=(2, 4), beta=0.4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(asdict(cfg)), encoding="utf-8")
    assert StudyConfig.from_json(str(path)) == cfg


def test_config_hash_stability():
    a = StudyConfig(profile="flat:d=1", N_list=(1, 2, 3))
    b = StudyConfig(profile="flat:d=1", N_list=[1, 2, 3])
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    int(config_hash(a), 16)   # hex digest prefix
    assert config_hash(replace(a, seed=1)) != config_hash(a)
    assert config_hash(replace(a, h_bulk=1.0 / 32.0)) != config_hash(a)


# ---------------------------------------------------------------------------
# study report plumbing (small flat study, three N values)


def test_csv_header_is_pinned():
    assert ",".join(CSV_COLUMNS) == (
        "N,eps,branch,lambda_eps,pred0,pred1,pred2,pred3,"
        "rem0,rem1,rem2,rem3,h1_err,cluster_gap")


def test_report_row_structure(small_report):
    rows = small_report.rows
    assert [r.N for r in rows] == [1, 1, 2, 2, 3, 3]
    assert [r.branch for r in rows] == [1, 2, 1, 2, 1, 2]
    assert not any(r.flagged for r in rows)
    for r in rows:
        assert r.eps == pytest.approx(1.0 / (2 * r.N + 1), rel=1e-15)
        assert r.pred[0] == pytest.approx(LAMBDA0, rel=1e-12)
        # the wall dips below the flat bottom, so eigenvalues drop
        assert r.lambda_eps < LAMBDA0
        for k in range(4):
            assert r.rem[k] == pytest.approx(abs(r.lambda_eps - r.pred[k]),
                                             rel=1e-12)
        assert r.rem[1] < r.rem[0]
        assert r.cluster_gap > 0.0
        assert math.isfinite(r.h1_err)


def test_report_slopes_structure(small_report):
    for branch in ("branch1", "branch2"):
        entry = small_report.slopes[branch]
        for k in range(4):
            fit = entry[f"rem{k}"]
            assert {"slope", "r_squared", "intercept",
                    "flagged"} <= set(fit)
    # the corrected remainder converges visibly faster than the raw one
    b1 = small_report.slopes["branch1"]
    assert b1["rem1"]["slope"] > b1["rem0"]["slope"]


def test_report_metadata(small_report, small_cfg):
    meta = small_report.metadata
    assert meta["flagged_rows"] == 0
    assert meta["runtime_seconds"] > 0.0
    assert set(meta["branch_lambdas"]) == {"1", "2"}
    assert meta["max_corrector_residue"] <= 1e-8
    assert small_report.config == small_cfg
    assert small_report.config_hash == config_hash(small_cfg)


def test_csv_text_shape(small_report):
    lines = small_report.csv_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + len(small_report.rows)
    for line in lines[1:]:
        parts = line.split(",")
        assert len(parts) == len(CSV_COLUMNS)
        float(parts[1])             # eps column parses
        assert parts[0].isdigit()   # N column stays integral


def test_csv_deterministic_across_runs(small_cfg, small_report, cli_out):
    again = run_study(small_cfg, cache_dir=str(cli_out / "cache"))
    assert again.csv_text() == small_report.csv_text()
    assert again.config_hash == small_report.config_hash


def test_write_report_files(small_report, tmp_path):
    out = tmp_path / "report-out"
    paths = write_report(small_report, str(out))
    assert set(paths) == {"csv", "json", "slopes"}
    csv_body = (out / "study.csv").read_text(encoding="utf-8")
    assert csv_body == small_report.csv_text()
    doc = json.loads((out / "study.json").read_text(encoding="utf-8"))
    assert doc["config_hash"] == small_report.config_hash
    assert len(doc["rows"]) == len(small_report.rows)
    slopes = json.loads((out / "slopes.json").read_text(encoding="utf-8"))
    assert slopes["config_hash"] == small_report.config_hash
    assert set(slopes["slopes"]) == {"branch1", "branch2"}


def test_predictor_cache_round_trip(small_cfg, small_report, cli_out):
    cache = cli_out / "cache"
    stored = sorted(cache.glob("predictors-*.json"))
    assert len(stored) == 1
    cc, preds = compute_predictors(small_cfg, cache_dir=str(cache))
    meta = small_report.metadata
    assert asdict(cc) == meta["cell_constants"]
    for b in preds:
        assert list(b.lambdas) == meta["branch_lambdas"][str(b.branch)]


def test_predictor_cache_is_actually_read(small_cfg, small_report, cli_out,
                                          tmp_path):
    # tamper with a private copy of the cache; the sentinel must come back
    cache = tmp_path / "tampered-cache"
    cache.mkdir()
    src = next((cli_out / "cache").glob("predictors-*.json"))
    shutil.copy(src, cache / src.name)
    data = json.loads((cache / src.name).read_text(encoding="utf-8"))
    data["cell"]["C"] = 123.456
    (cache / src.name).write_text(json.dumps(data), encoding="utf-8")
    cc, _ = compute_predictors(small_cfg, cache_dir=str(cache))
    assert cc.C == 123.456


# ---------------------------------------------------------------------------
# command line entry point


def test_main_predict(config_json, cli_out, small_report, capsys):
    rc = main(["--config", config_json, "--out", str(cli_out),
               "predict", "--N", "3", "--order", "1", "--branch", "1"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["eps"] == pytest.approx(1.0 / 7.0, rel=1e-15)
    lam1 = small_report.metadata["branch_lambdas"]["1"][1]
    assert doc["lambda_pred"] == pytest.approx(LAMBDA0 + lam1 / 7.0,
                                               rel=1e-12)
    assert (cli_out / "predict.json").exists()


def test_main_correct(config_json, cli_out, small_report, capsys):
    rc = main(["--config", config_json, "--out", str(cli_out), "correct"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert [b["branch"] for b in doc] == [1, 2]
    for b in doc:
        assert b["residues"] <= 1e-8
        lams = small_report.metadata["branch_lambdas"][str(b["branch"])]
        assert b["lambda1"] == pytest.approx(lams[1], rel=1e-12)


def test_main_limit(capsys):
    rc = main(["limit", "--backend", "analytic"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["lambda0"] == pytest.approx(LAMBDA0, rel=1e-12)
    G = np.array(doc["G"])
    assert G.shape == (2, 2)
    assert G[0, 0] > G[1, 1] > 0.0
    assert doc["nondegeneracy_gap"] > 0.1
    assert len(doc["branch_traces_sampled"]["branch1"]) == 9


def test_main_study_writes_reports(config_json, cli_out, small_report,
                                   capsys):
    rc = main(["--config", config_json, "--out", str(cli_out), "study"])
    assert rc == 0
    out = capsys.readouterr().out
    assert f"study {small_report.config_hash}: 6 rows" in out
    csv_body = (cli_out / "study.csv").read_text(encoding="utf-8")
    assert csv_body == small_report.csv_text()
    assert (cli_out / "slopes.json").exists()


def test_main_report_pretty_print(small_report, tmp_path, capsys):
    write_report(small_report, str(tmp_path))
    rc = main(["--out", str(tmp_path), "report"])
    assert rc == 0
    out = capsys.readouterr().out
    assert small_report.config_hash in out
    assert "branch1:" in out and "branch2:" in out


def test_main_missing_config_is_clean_error(tmp_path, capsys):
    rc = main(["--config", str(tmp_path / "nope.json"), "cell"])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_main_bad_N_is_clean_error(config_json, cli_out, capsys):
    rc = main(["--config", config_json, "--out", str(cli_out),
               "predict", "--N", "0"])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")
