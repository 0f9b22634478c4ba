import math
import random

import numpy as np
import pytest

import gen
from relichoice import analysis
from relichoice.model import ComponentParams, Leaf, ProbChoice, Series, SystemSpec
from relichoice.montecarlo import (
    SimulationConfig,
    estimate_mttf,
    estimate_survival,
    estimate_survival_curve,
    sample_failure_time,
    sample_failure_times,
    uniforms,
)

CHI2_19_P001 = 43.82  # chi-square critical value, 19 dof, upper tail 0.001


def leaf(lam, t0=0.0):
    return SystemSpec.create([ComponentParams("A", lam, t0)], Leaf("A"))


def parallel(ws, lams, t0s=None):
    t0s = t0s or [0.0] * len(lams)
    comps = [ComponentParams(f"C{i}", lam, t0) for i, (lam, t0) in enumerate(zip(lams, t0s))]
    return SystemSpec.create(comps, ProbChoice(*zip(ws, (Leaf(c.id) for c in comps))))


def within(est, want, k=3.0):
    return abs(est.value - want) <= k * est.std_error


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(trials=0)
    with pytest.raises(ValueError):
        SimulationConfig(trials=10, seed=-1)
    with pytest.raises(ValueError):
        SimulationConfig(trials=10, lanes=0)


def test_uniforms_open_interval_and_distinct_streams():
    idx = np.arange(200_000, dtype=np.uint64)
    u = uniforms(9, 0, idx)
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005
    assert not np.array_equal(u, uniforms(9, 1, idx))
    assert not np.array_equal(u, uniforms(10, 0, idx))


def test_huge_rate_pins_lifetime_to_install_time():
    t = sample_failure_time(leaf(1e12, 5.0), 17, SimulationConfig(1, seed=3))
    assert t == pytest.approx(5.0, abs=1e-9)
    assert t >= 5.0


def test_series_time_is_min_of_leaf_lifetimes():
    comps = [ComponentParams("A", 1.0), ComponentParams("B", 1.0)]
    spec = SystemSpec.create(comps, Series(Leaf("A"), Leaf("B")))
    cfg = SimulationConfig(5000, seed=21)
    idx = np.arange(cfg.trials, dtype=np.uint64)
    # slots: 0 = series node, 1 = A, 2 = B
    life_a = -np.log(uniforms(cfg.seed, 1, idx))
    life_b = -np.log(uniforms(cfg.seed, 2, idx))
    times = sample_failure_times(spec, cfg)
    assert np.all(times <= life_a) and np.all(times <= life_b)
    assert np.array_equal(times, np.minimum(life_a, life_b))


def test_single_sample_matches_batch():
    spec = gen.nested(random.Random(4))
    cfg = SimulationConfig(300, seed=8)
    batch = sample_failure_times(spec, cfg)
    for i in (0, 1, 150, 299):
        assert sample_failure_time(spec, i, cfg) == batch[i]


def test_unit_exponential_mean():
    est = estimate_mttf(leaf(1.0), SimulationConfig(1_000_000, seed=1))
    assert abs(est.value - 1.0) <= 0.003
    assert est.std_error == pytest.approx(0.001, rel=0.05)


def test_survival_at_zero_with_late_installs():
    spec = parallel([0.5, 0.5], [1, 3], [0.5, 2])
    est = estimate_survival(spec, 0.0, SimulationConfig(10_000, seed=2))
    assert est.value == 1.0 and est.std_error == 0.0


def test_survival_estimate_unit_exponential():
    est = estimate_survival(leaf(1.0), 1.0, SimulationConfig(100_000, seed=5))
    assert within(est, math.exp(-1))
    assert est.std_error == pytest.approx(math.sqrt(est.value * (1 - est.value) / 1e5), rel=1e-12)
    assert est.trials == 100_000 and est.seed == 5


def test_determinism_and_lane_invariance():
    spec = gen.nested(random.Random(12))
    one = sample_failure_times(spec, SimulationConfig(200_000, seed=77))
    again = sample_failure_times(spec, SimulationConfig(200_000, seed=77))
    lanes = sample_failure_times(spec, SimulationConfig(200_000, seed=77, parallel_ok=True, lanes=4))
    assert np.array_equal(one, again)
    assert np.array_equal(one, lanes)
    assert estimate_mttf(spec, SimulationConfig(50_000, seed=77)) == estimate_mttf(
        spec, SimulationConfig(50_000, seed=77, parallel_ok=True, lanes=3)
    )


def test_mttf_examples():
    cfg = SimulationConfig(1_000_000, seed=2024)
    assert within(estimate_mttf(parallel([0.2, 0.3, 0.5], [1, 2, 4]), cfg), 0.475)
    comps = [ComponentParams(f"C{i}", lam) for i, lam in enumerate([0.1, 0.2, 0.3])]
    series = SystemSpec.create(comps, Series(*(Leaf(c.id) for c in comps)))
    assert within(estimate_mttf(series, cfg), 1 / 0.6)


def test_mean_lifetime_with_install_times_is_mtbf_value():
    est = estimate_mttf(parallel([0.5, 0.5], [1, 1], [2, 4]), SimulationConfig(1_000_000, seed=31))
    assert within(est, 4.0)
    assert not within(est, 1.0, k=100)


def test_survival_curve_monotone_common_numbers():
    spec = gen.nested(random.Random(9))
    ts = np.linspace(0, 6, 40)
    curve = estimate_survival_curve(spec, ts, SimulationConfig(20_000, seed=4))
    vals = [e.value for e in curve]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert curve[7] == estimate_survival(spec, float(ts[7]), SimulationConfig(20_000, seed=4))


def test_survival_agrees_with_analysis_on_nested():
    rng = random.Random(10)
    misses = 0
    for _ in range(20):
        spec = gen.nested(rng)
        T = rng.uniform(0, 4)
        est = estimate_survival(spec, T, SimulationConfig(100_000, seed=rng.getrandbits(32)))
        misses += not within(est, analysis.survival(spec, T), k=4)
    assert misses <= 1


def _mixture_quantiles(ws, lams, probs):
    # invert 1 - sum(w exp(-lam t)) by vectorised bisection
    ws, lams = np.asarray(ws), np.asarray(lams)
    lo = np.zeros(len(probs))
    hi = np.full(len(probs), 60.0 / lams.min())
    for _ in range(200):
        mid = (lo + hi) / 2
        cdf = 1 - (ws * np.exp(-np.outer(mid, lams))).sum(axis=1)
        below = cdf < probs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


def test_histogram_matches_mixture_density():
    ws, lams = [0.2, 0.3, 0.5], [1.0, 2.0, 4.0]
    n = 1_000_000
    times = sample_failure_times(parallel(ws, lams), SimulationConfig(n, seed=99))
    edges = _mixture_quantiles(ws, lams, np.arange(1, 20) / 20)
    counts = np.bincount(np.searchsorted(edges, times), minlength=20)
    expected = n / 20
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < CHI2_19_P001
