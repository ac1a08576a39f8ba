import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from isingiic import stats
from isingiic.stats import Estimate, ScalingFit, fit_power_law


def _point(value, rel=0.01):
    return Estimate(value, value * rel, (value * (1 - 2 * rel), value * (1 + 2 * rel)), 1000)


def test_wilson_known_values():
    lo, hi = stats.wilson(0, 100)
    assert lo == 0 and hi == pytest.approx(0.03699, abs=1e-4)
    lo, hi = stats.wilson(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    assert stats.wilson(3, 0) == (0.0, 1.0)


@given(st.integers(0, 500), st.integers(1, 500))
def test_wilson_brackets_the_proportion(k, extra):
    n = k + extra
    lo, hi = stats.wilson(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_proportion_independent_draws():
    hits = np.random.default_rng(0).random(20_000) < 0.3
    e = stats.proportion(hits, seed=4, name="x")
    assert e.n_samples == 20_000 and e.n_hits == int(hits.sum())
    assert abs(e.value - 0.3) < 3 * e.stderr
    assert e.ci95[0] < e.value < e.ci95[1]
    # batch means only ever widen the binomial error, and not by much here
    se_bin = math.sqrt(e.value * (1 - e.value) / 20_000)
    assert se_bin <= e.stderr < 1.5 * se_bin


def test_proportion_widens_for_correlated_runs():
    # long identical runs: batch means see the dependence
    hits = np.repeat(np.random.default_rng(1).random(200) < 0.5, 100)
    e = stats.proportion(hits)
    assert e.stderr > 3 * math.sqrt(e.value * (1 - e.value) / len(hits))


def test_mean_and_exact():
    e = stats.mean(np.arange(10.0))
    assert e.value == 4.5 and e.ci95[0] < 4.5 < e.ci95[1]
    x = stats.exact(0.25, "p")
    assert x.stderr == 0 and x.ci95 == (0.25, 0.25) and x.name == "p"


def test_estimate_round_trip():
    e = Estimate(0.5, 0.01, (0.48, 0.52), 100, 50, 7, "abc", "name")
    assert Estimate.from_dict(e.to_dict()) == e
    assert e.named("other").name == "other" and e.ci_width == pytest.approx(0.04)
    assert e.excludes_zero()


def test_pooled_and_difference():
    a = Estimate(1.0, 0.1, (0.8, 1.2), 10)
    b = Estimate(2.0, 0.1, (1.8, 2.2), 10)
    p = stats.pooled([a, b])
    assert p.value == pytest.approx(1.5) and p.stderr == pytest.approx(0.1 / math.sqrt(2))
    d = stats.difference(b, a)
    assert d.value == pytest.approx(1.0) and d.stderr == pytest.approx(math.hypot(0.1, 0.1))
    assert not stats.agree(a, b)
    assert stats.agree(a, Estimate(1.2, 0.1, (1.0, 1.4), 10))


def test_log_ratio():
    a, b = _point(0.2), _point(0.4)
    r = stats.log_ratio([a], [b])
    assert r.value == pytest.approx(0.5)
    assert r.ci95[0] < 0.5 < r.ci95[1]
    with pytest.raises(ValueError, match="cross-ratio undefined"):
        stats.log_ratio([Estimate(0.0, 0.0, (0, 0), 5)], [b])


def test_digest_is_stable_and_order_free():
    assert stats.digest({"a": 1, "b": [1, 2]}) == stats.digest({"b": [1, 2], "a": 1})
    assert stats.digest({"a": 1}) != stats.digest({"a": 2})
    assert len(stats.digest("x")) == 16


@given(st.floats(-2.0, -0.01), st.floats(0.05, 5.0))
def test_fit_recovers_synthetic_power_law(exponent, amplitude):
    ns = [8, 16, 32, 64, 128, 256]
    pts = [(n, _point(amplitude * n ** exponent)) for n in ns]
    fit = fit_power_law(pts)
    assert abs(fit.exponent - exponent) < 0.005
    assert fit.exponent_ci[0] <= exponent <= fit.exponent_ci[1]


def test_fit_with_noise_covers_truth():
    rng = np.random.default_rng(3)
    ns = [8, 16, 32, 64, 128, 256]
    covered = 0
    for _ in range(200):
        pts = []
        for n in ns:
            v = 0.9 * n ** (-5 / 48) * math.exp(rng.normal(0, 0.02))
            pts.append((n, _point(v, 0.02)))
        lo, hi = fit_power_law(pts).exponent_ci
        covered += lo <= -5 / 48 <= hi
    assert covered >= 180


def test_log_linear_fit():
    pts = [(d, _point(0.7 * math.exp(-0.4 * d))) for d in (1, 2, 3, 4)]
    fit = fit_power_law(pts, log_x=False)
    assert fit.decay_rate == pytest.approx(0.4, abs=1e-9)
    assert fit.decay_ci[0] <= 0.4 <= fit.decay_ci[1]
    assert fit.fit_kind == "log-linear least squares"


def test_fit_errors_and_round_trip():
    with pytest.raises(ValueError):
        fit_power_law([(1, _point(1.0)), (2, _point(0.5))])
    with pytest.raises(ValueError):
        fit_power_law([(1, _point(1.0)), (2, _point(0.5)), (3, Estimate(0.0, 0, (0, 0), 1))])
    fit = fit_power_law([(n, _point(n ** -0.5)) for n in (2, 4, 8)])
    assert ScalingFit.from_dict(fit.to_dict()) == fit
