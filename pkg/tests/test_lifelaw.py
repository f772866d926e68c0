"""Life-law construction, summaries, and sampling."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwolab import lifelaw
from gwolab.errors import ConfigError, DivergentMoment
from gwolab.lifelaw import (
    BellmanHarris,
    DelayedDeath,
    FiniteLife,
    OffspringPMF,
    QuadraticTailLife,
    Sevastyanov,
    Tabulated,
    compound_params,
    phi,
    sample_individual,
    summarize,
)

BINARY = OffspringPMF([0.5, 0.0, 0.5])


def gw_binary() -> BellmanHarris:
    return BellmanHarris(FiniteLife({1: 1.0}), BINARY)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


def test_gw_binary_summary():
    s = summarize(gw_binary())
    assert s.mean_offspring == 1.0
    assert s.b == 0.5
    assert s.a == 1.0
    assert s.d == 0.0
    assert s.h == 2.0
    assert s.c == 0.0
    assert s.critical and s.a_finite


def test_compound_params_frozen_case():
    h, c = compound_params(a=2.0, b=1.0, d=1.0)
    assert c == pytest.approx(1.0, abs=1e-15)
    assert h == pytest.approx(1.0 + math.sqrt(2.0), abs=1e-14)


def test_quadratic_identity_random_draws():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a, b, d = rng.uniform(0.25, 2.0, size=3)
        h, c = compound_params(a, b, d)
        assert abs(b * h * h - a * h - d) <= 1e-12
        assert c == pytest.approx(4.0 * b * d / a**2, rel=1e-14)


def test_summary_quadratic_identity():
    model = BellmanHarris(QuadraticTailLife(d=1.0, t_min=2), OffspringPMF([0.75, 0, 0, 0, 0.25]))
    s = summarize(model)
    assert s.critical
    assert s.b == pytest.approx(1.5)
    assert s.d == 1.0
    assert abs(s.b * s.h**2 - s.a * s.h - s.d) <= 1e-12
    # mean life in closed form: t_min + d * trigamma(t_min)
    assert s.a == pytest.approx(2.0 + (math.pi**2 / 6.0 - 1.0), abs=1e-12)


def test_delayed_death_summary_exact_c():
    model = DelayedDeath(
        [(0.5, [1, 2]), (0.5, [])], QuadraticTailLife(d=1.125, t_min=2)
    )
    s = summarize(model)
    assert s.mean_offspring == 1.0
    assert s.b == 0.5
    assert s.a == 1.5
    assert s.d == 1.125
    assert s.c == pytest.approx(1.0, abs=1e-15)
    assert s.h == pytest.approx(1.5 + 1.5 * math.sqrt(2.0), abs=1e-13)


def test_tabulated_summary():
    model = Tabulated([(0.5, [1, 2], 3), (0.5, [], 2)])
    s = summarize(model)
    assert s.mean_offspring == 1.0
    assert s.b == 0.5
    assert s.a == 1.5
    assert s.d == 0.0
    assert s.h == pytest.approx(3.0)
    assert s.c == 0.0


def test_noncritical_flag():
    s = summarize(BellmanHarris(FiniteLife({1: 1.0}), OffspringPMF([0.4, 0.6])))
    assert not s.critical
    assert s.mean_offspring == pytest.approx(0.6)


def test_summary_tolerance_knob():
    off = OffspringPMF([0.5 - 1e-7, 0.0, 0.5 + 1e-7])
    model = BellmanHarris(FiniteLife({1: 1.0}), off)
    assert not summarize(model, tol=1e-9).critical
    assert summarize(model, tol=1e-6).critical


# ---------------------------------------------------------------------------
# sevastyanov moment certification
# ---------------------------------------------------------------------------


def _bounded_rule(l: int) -> OffspringPMF:
    # offspring only for short lives; trivial beyond l = 6
    if l <= 6:
        return OffspringPMF([0.5, 0.0, 0.5])
    return OffspringPMF([1.0])


def test_sevastyanov_finite_life():
    life = FiniteLife({1: 0.25, 2: 0.25, 5: 0.5})
    model = Sevastyanov(life, _bounded_rule)
    s = summarize(model)
    assert s.mean_offspring == pytest.approx(1.0)
    assert s.a == pytest.approx(0.25 * 1 + 0.25 * 2 + 0.5 * 5)
    assert s.d == 0.0


def test_sevastyanov_certified_tail():
    life = QuadraticTailLife(d=1.0, t_min=2)
    model = Sevastyanov(life, _bounded_rule, moment_tail_bound=lambda l0: 0.0 if l0 >= 6 else 10.0)
    s = summarize(model)
    # direct finite computation: only l in {2,...,6} carries offspring
    en = sum(life.pmf(l) * 1.0 for l in range(2, 7))
    a = sum(life.pmf(l) * l * 1.0 for l in range(2, 7))
    assert s.mean_offspring == pytest.approx(en, abs=1e-14)
    assert s.a == pytest.approx(a, abs=1e-14)
    assert s.d == 1.0


def test_sevastyanov_requires_bound():
    model = Sevastyanov(QuadraticTailLife(d=1.0, t_min=2), _bounded_rule)
    with pytest.raises(DivergentMoment):
        summarize(model)


def test_sevastyanov_divergent_bound():
    model = Sevastyanov(
        QuadraticTailLife(d=1.0, t_min=2),
        lambda l: OffspringPMF([0.5] + [0.0] * (l - 1) + [0.5]),
        moment_tail_bound=lambda l0: math.inf,
    )
    with pytest.raises(DivergentMoment):
        summarize(model)


def test_sevastyanov_uncertifiable_bound(monkeypatch):
    monkeypatch.setattr(lifelaw, "_CERT_CAP", 64)
    model = Sevastyanov(
        QuadraticTailLife(d=1.0, t_min=2),
        _bounded_rule,
        moment_tail_bound=lambda l0: 1.0,
    )
    with pytest.raises(DivergentMoment):
        summarize(model)


# ---------------------------------------------------------------------------
# phi
# ---------------------------------------------------------------------------


def test_phi_frozen_value():
    assert phi(BINARY, 0.3) == pytest.approx(0.045, abs=1e-15)


def test_phi_small_z_matches_dispersion():
    # truncated unit-mean Poisson, renormalized
    weights = [math.exp(-1.0) / math.factorial(n) for n in range(13)]
    probs = [w / sum(weights) for w in weights]
    off = OffspringPMF(probs)
    z = 1e-3
    assert phi(off, z) / z**2 == pytest.approx(off.dispersion, rel=0.01)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6))
def test_phi_nonnegative(raw):
    probs = np.asarray(raw) / sum(raw)
    off = OffspringPMF(probs)
    z = np.linspace(0.0, 1.0, 21)
    vals = phi(off, z)
    assert vals[0] == 0.0
    assert np.all(vals >= -1e-14)


# ---------------------------------------------------------------------------
# quadratic-tail life length
# ---------------------------------------------------------------------------


def test_quadratic_tail_survival_exact():
    life = QuadraticTailLife(d=4.0, t_min=2)
    assert life.survival(10) == 0.04
    assert life.survival(1) == 1.0
    for t in range(2, 50):
        assert t * t * life.survival(t) == pytest.approx(4.0, abs=1e-15)


def test_quadratic_tail_pmf_array_consistent():
    life = QuadraticTailLife(d=2.5, t_min=2)
    arr = life.pmf_array(400)
    assert arr[0] == 0.0
    assert float(arr.sum()) == pytest.approx(1.0 - life.survival(400), abs=1e-12)
    for l in (2, 3, 17):
        assert arr[l] == pytest.approx(life.pmf(l), abs=1e-15)


def test_quadratic_tail_mean_against_partial_sum():
    life = QuadraticTailLife(d=3.0, t_min=3)
    partial = 3 + 3.0 * sum(1.0 / t**2 for t in range(3, 200000))
    assert life.mean == pytest.approx(partial + 3.0 / 199999, abs=1e-4)


def test_quadratic_tail_inverse_cdf_property():
    life = QuadraticTailLife(d=4.0, t_min=2)
    for u in np.linspace(1e-6, 0.999999, 200):
        t = life.sample_from_uniform(float(u))
        assert life.survival(t) < u <= life.survival(t - 1) + 1e-15


def test_quadratic_tail_degenerate_d0():
    life = QuadraticTailLife(d=0.0, t_min=5)
    assert life.sample_from_uniform(0.5) == 5
    assert life.mean == 5.0


def test_quadratic_tail_validation():
    with pytest.raises(ConfigError):
        QuadraticTailLife(d=9.0, t_min=2)
    with pytest.raises(ConfigError):
        QuadraticTailLife(d=-1.0, t_min=2)
    with pytest.raises(ConfigError):
        QuadraticTailLife(d=1.0, t_min=0)


# ---------------------------------------------------------------------------
# construction errors
# ---------------------------------------------------------------------------


def test_offspring_validation():
    with pytest.raises(ConfigError):
        OffspringPMF([0.5, 0.6])
    with pytest.raises(ConfigError):
        OffspringPMF([1.5, -0.5])


def test_finite_life_validation():
    with pytest.raises(ConfigError):
        FiniteLife({0: 1.0})
    with pytest.raises(ConfigError):
        FiniteLife({1: 0.7, 2: 0.2})


def test_tabulated_validation():
    with pytest.raises(ConfigError):
        Tabulated([(1.0, [1, 4], 3)])  # birth after death
    with pytest.raises(ConfigError):
        Tabulated([(1.0, [2, 1], 3)])  # unsorted ages
    with pytest.raises(ConfigError):
        Tabulated([(0.5, [1], 1)])  # mass missing


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

SAMPLING_MODELS = [
    gw_binary(),
    BellmanHarris(QuadraticTailLife(d=1.0, t_min=2), OffspringPMF([0.75, 0, 0, 0, 0.25])),
    Tabulated([(0.5, [1, 2], 3), (0.5, [], 2)]),
    DelayedDeath([(0.5, [1, 2]), (0.5, [])], QuadraticTailLife(d=1.125, t_min=2)),
    Sevastyanov(FiniteLife({1: 0.25, 2: 0.25, 5: 0.5}), _bounded_rule),
]


@pytest.mark.parametrize("model", SAMPLING_MODELS, ids=lambda m: type(m).__name__)
def test_sample_ordering_invariant(model):
    rng = np.random.default_rng(11)
    for _ in range(4000):
        life, ages = sample_individual(model, rng)
        assert life >= 1
        assert all(1 <= t <= life for t in ages)
        assert list(ages) == sorted(ages)


def test_quadratic_tail_sampling_frequency():
    life = QuadraticTailLife(d=4.0, t_min=2)
    rng = np.random.default_rng(5)
    n = 200_000
    u = rng.random(n)
    hits = sum(life.sample_from_uniform(float(x)) > 10 for x in u)
    p = 0.04
    assert abs(hits / n - p) <= 3.0 * math.sqrt(p * (1 - p) / n)


def test_monte_carlo_moments_match_summary():
    model = BellmanHarris(QuadraticTailLife(d=1.0, t_min=2), OffspringPMF([0.3, 0.4, 0.3]))
    s = summarize(model)
    rng = np.random.default_rng(20240817)
    n = 1_000_000
    ns = np.empty(n)
    ls = np.empty(n)
    taus = np.empty(n)
    for i in range(n):
        life, ages = sample_individual(model, rng)
        ns[i] = len(ages)
        ls[i] = life
        taus[i] = sum(ages)
    for sample, target in ((ns, s.mean_offspring), (ls, model.life.mean), (taus, s.a)):
        err = abs(sample.mean() - target)
        band = 4.0 * sample.std() / math.sqrt(n)
        assert err <= band, (sample.mean(), target, band)


def test_delayed_death_life_extends_schedule():
    model = DelayedDeath([(1.0, [2, 3])], QuadraticTailLife(d=1.0, t_min=1))
    rng = np.random.default_rng(3)
    for _ in range(200):
        life, ages = sample_individual(model, rng)
        assert ages == (2, 3)
        assert life >= 4  # last birth age + residual >= 1
