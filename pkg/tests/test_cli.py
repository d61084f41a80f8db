import json

import numpy as np
import pytest

from credit_copula.cli import PRESETS, build_parser, main, read_config_file, resolve_settings

FAST = ["--n-pairs", "3", "--n-sims", "400"]


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    return main([*argv, "--out", str(out)]), out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_simulate_outputs(tmp_path):
    rc, out = run(tmp_path, "simulate", "homogeneous", "--ca", "0.3", "--k", "5", *FAST)
    assert rc == 0
    names = {p.name for p in out.iterdir()}
    assert {"copula.json", "gaussian_copula.json", "deviation.json", "loss_pdf.csv",
            "summary.json", "manifest.json"} <= names
    m = manifest(out)
    assert m["status"] == "ok" and m["work_units"] == 3
    assert set(m["files"]) == names - {"manifest.json"}
    cop = json.loads((out / "copula.json").read_text())
    assert cop["b"] == 20 and len(cop["masses"]) == 400
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["c_a"] == 0.3 and summary["seed"] == 0
    assert (out / "loss_pdf.csv").read_text().startswith("# point_mass_at_zero=")


def test_repeat_runs_identical_digests(tmp_path):
    args = ["simulate", "homogeneous", "--ca", "0.2", "--k", "4", "--seed", "9", *FAST]
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, "--workers", "2", name="b")
    assert manifest(a)["files"] == manifest(b)["files"]


def test_seed_changes_digests(tmp_path):
    base = ["simulate", "homogeneous", "--k", "4", *FAST]
    _, a = run(tmp_path, *base, "--seed", "1", name="a")
    _, b = run(tmp_path, *base, "--seed", "2", name="b")
    assert manifest(a)["files"]["copula.json"] != manifest(b)["files"]["copula.json"]


def test_indefinite_correlation_is_usage_error(tmp_path, capsys):
    rc, out = run(tmp_path, "simulate", "homogeneous", "--ca", "-0.9", "--k", "50")
    assert rc == 2
    assert "c_a" in capsys.readouterr().err
    assert not (out / "manifest.json").exists()


def test_bad_flag_value_exits_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "homogeneous", "--sigma", "1,2,3"])
    assert err.value.code == 2


def test_unknown_preset(tmp_path):
    rc, _ = run(tmp_path, "simulate", "homogeneous", "--preset", "nope")
    assert rc == 2
    rc, _ = run(tmp_path, "simulate", "homogeneous", "--preset", "fig6")
    assert rc == 2


def test_every_preset_validates():
    for name, (kind, _) in PRESETS.items():
        argv = {"homogeneous": ["simulate", "homogeneous"],
                "heterogeneous_sigma": ["simulate", "hetero-sigma"],
                "sweep": ["sweep"], "empirical": ["empirical"]}[kind]
        args = build_parser().parse_args([*argv, "--preset", name])
        settings = resolve_settings(args)
        assert settings["mode"] in ("homogeneous", "heterogeneous_sigma", "empirical")


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmu = 0.0005\nsigma = 0.04\nK = 7\n")
    args = build_parser().parse_args(
        ["simulate", "homogeneous", "--preset", "fig3-top", "--config", str(cfg), "--sigma", "0.05"])
    s = resolve_settings(args)
    assert s["c_a"] == 0.3  # preset
    assert s["mu"] == 0.0005  # file beats preset
    assert s["sigma"] == 0.05  # flag beats file
    assert s["K"] == 7


def test_config_file_diagnostics(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mu = 0.001\nwarp_speed = 9\n")
    rc, _ = run(tmp_path, "simulate", "homogeneous", "--config", str(cfg))
    assert rc == 2
    err = capsys.readouterr().err
    assert "bad.cfg:2" in err and "warp_speed" in err
    cfg.write_text("[experiment]\nn_sims = many\n")
    with pytest.raises(Exception) as exc:
        read_config_file(cfg)
    assert "bad.cfg:2" in str(exc.value)


def test_hetero_sigma_run(tmp_path):
    rc, out = run(tmp_path, "simulate", "hetero-sigma", "--k", "4", "--sigma", "0.01,0.05", *FAST)
    assert rc == 0
    assert json.loads((out / "summary.json").read_text())["config"]["sigma"] == [0.01, 0.05]


def test_sweep_run(tmp_path):
    rc, out = run(tmp_path, "sweep", "--ca-grid", "0,0.5", "--k-list", "1,3", *FAST)
    assert rc == 0
    lines = (out / "losscorr_curve.csv").read_text().splitlines()
    assert lines[0] == "K,c_a,corr,stderr,n_pairs_used"
    assert len(lines) == 5
    assert (out / "losscorr_curve_K3.csv").exists()


def test_sweep_rejects_indefinite_grid(tmp_path):
    rc, _ = run(tmp_path, "sweep", "--ca-grid=-0.5,0", "--k-list", "1,50")
    assert rc == 2


def _write_market(price_csv, homogeneous_prices, name, n=10):
    return price_csv(homogeneous_prices(n, 0.0, 0.02, 0.3, n_days=600), name=name)


def test_empirical_run(tmp_path, price_csv, homogeneous_prices):
    a = _write_market(price_csv, homogeneous_prices, "a.csv")
    b = _write_market(price_csv, homogeneous_prices, "b.csv")
    rc, out = run(tmp_path, "empirical", "--market-a", str(a), "--market-b", str(b),
                  "--k", "3", "--n-iterations", "4", "--n-sims", "300", "--k-list", "1,3")
    assert rc == 0
    assert (out / "losscorr_curve.csv").exists()
    assert json.loads((out / "summary.json").read_text())["pairing"] == "cross"


def test_empirical_data_dir(tmp_path, price_csv, homogeneous_prices, monkeypatch):
    _write_market(price_csv, homogeneous_prices, "a.csv")
    monkeypatch.setenv("CREDIT_COPULA_DATA_DIR", str(tmp_path))
    rc, _ = run(tmp_path, "empirical", "--market-a", "a.csv", "--pairing", "same-a",
                "--k", "2", "--n-iterations", "2", "--n-sims", "200")
    assert rc == 0


def test_empirical_missing_file_exits_2(tmp_path, capsys):
    rc, out = run(tmp_path, "empirical", "--market-a", str(tmp_path / "nope.csv"),
                  "--pairing", "same-a")
    assert rc == 2
    assert "nope.csv" in capsys.readouterr().err


def test_runtime_failure_leaves_error_manifest(tmp_path, price_csv, homogeneous_prices):
    a = _write_market(price_csv, homogeneous_prices, "a.csv", n=4)
    rc, out = run(tmp_path, "empirical", "--market-a", str(a), "--pairing", "same-a",
                  "--k", "5", "--n-iterations", "2", "--n-sims", "100")
    assert rc == 1
    assert [p.name for p in out.iterdir()] == ["manifest.json"]
    m = manifest(out)
    assert m["status"] == "error" and "InsufficientUniverse" in m["error"]
    assert m["files"] == {}


def test_validate_data_ok(tmp_path, price_csv, capsys):
    rng = np.random.default_rng(0)
    prices = 50 * np.exp(np.cumsum(rng.normal(0, 0.01, (600, 3)), axis=0))
    prices[:60, 2] = np.nan
    path = price_csv(prices, ["AAA", "BBB", "CCC"])
    assert main(["validate-data", str(path)]) == 0
    text = capsys.readouterr().out
    assert "599 days x 2 tickers" in text
    assert "excluded tickers (1): CCC" in text
    assert "coverage of 1993-01..2014-04" in text


def test_validate_data_negative_price(tmp_path, price_csv, capsys):
    prices = np.full((600, 2), 10.0)
    prices[42, 1] = -1.0
    assert main(["validate-data", str(price_csv(prices, ["X", "Y"]))]) == 1
    out = capsys.readouterr().out
    assert "NonPositivePrice" in out and "Y" in out


def test_validate_data_malformed(tmp_path, capsys):
    path = tmp_path / "m.csv"
    path.write_text("date,A\n2020-01-02,1\n2020-01-03\n")
    assert main(["validate-data", str(path)]) == 1
    assert "line 3" in capsys.readouterr().out
