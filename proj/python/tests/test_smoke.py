import json
import math

import pytest

import modev


def upper_tail(z):
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def test_exact_gaussian_tail():
    n = 400
    u = n ** -0.25
    est = modev.event_probability("gaussian", [0.0], n, u, method="exact")
    assert est["p_hat"] == pytest.approx(upper_tail(math.sqrt(n) * u), rel=1e-10)
    assert est["method"] == "exact"


def test_tilted_agrees_with_exact():
    n, u = 100, 0.3
    exact = modev.event_probability("gaussian", [0.0], n, u, method="exact")
    mc = modev.event_probability("gaussian", [0.0], n, u, method="tilted", n_reps=20000, seed=3, workers=1)
    assert abs(mc["log_p"] - exact["log_p"]) <= 4 * mc["stderr_log"]


def test_rate_functional_and_normalized_rate():
    assert modev.rate_functional("half_space:1:2") == pytest.approx(4.0)
    assert modev.rate_functional("whole") == 0.0
    assert modev.normalized_rate(-8.0, 100, 0.4) == pytest.approx(1.0)


def test_sample_and_mle():
    xs = modev.draw_sample("bernoulli", [0.3], 500, 7)
    assert len(xs) == 500
    assert modev.mle("bernoulli", xs)[0] == pytest.approx(sum(xs) / 500, abs=1e-8)
    assert modev.fisher_information("gaussian", [0.0])[0][0] == pytest.approx(1.0)


def test_run_experiment_and_report(tmp_path):
    cfg = {"family": "gaussian", "n_values": "100,400,1600", "method": "exact"}
    out, artifacts, manifest = modev.run_experiment("ldp-curve", cfg, out_dir=str(tmp_path / "run"))
    assert artifacts == ["rate_curve.csv"]
    rows = modev.read_rate_curve(tmp_path / "run" / "rate_curve.csv")
    assert [r["n"] for r in rows] == [100, 400, 1600]
    assert json.loads(open(manifest).read())["schema"] == "modev.manifest.v1"
    summary = modev.report(tmp_path)
    entry = summary["entries"][0]["results"][0]
    assert entry["rate_gap"] == pytest.approx(abs(rows[-1]["normalized_rate"] - 1.0))


def test_errors(tmp_path):
    with pytest.raises(modev.ConfigError, match="theta0"):
        modev.run_experiment("ldp-curve", {"family": "bernoulli", "theta0": "2"}, out_dir=str(tmp_path))
    with pytest.raises(modev.ConfigError):
        modev.run_experiment("ldp-curve", {"no_such_key": "1"})
    with pytest.raises(modev.EmptyDirError):
        modev.report(tmp_path)
    assert issubclass(modev.ConfigError, modev.Error)
