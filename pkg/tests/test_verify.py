"""Checks of the cross-validation harness itself: the enumeration
oracle against hand-computable cases, the extrapolation helper against
synthetic decay, and the report plumbing."""

import io
import json
import math

import pytest

from gwolab.errors import ConfigError, OracleBlowup
from gwolab.lifelaw import (
    BellmanHarris,
    DelayedDeath,
    FiniteLife,
    OffspringPMF,
    QuadraticTailLife,
    Tabulated,
)
from gwolab.limitlaw import LimitParams, dichotomy_fraction, eta_marginal_pmf
from gwolab.verify import (
    CheckRow,
    enumerate_joint,
    fdd_limit_check,
    limit_convergence,
    oracle_equivalence,
    report_json,
    richardson,
    run_battery,
    tree_pgf,
    tv_to_limit,
)


def gw_binary():
    return BellmanHarris(FiniteLife({1: 1.0}), OffspringPMF([0.5, 0.0, 0.5]))


def delayed_c1():
    return DelayedDeath([(0.5, (1, 2)), (0.5, ())], QuadraticTailLife(d=1.125, t_min=2))


class TestEnumerationOracle:
    def test_gw_binary_by_hand(self):
        # founder dies at 1 leaving 0 or 2; P(Z(2)=0) = 1/2 + 1/2 * (1/2)^2
        dist = enumerate_joint(gw_binary(), (1, 2))
        assert dist[(0, 0)] == pytest.approx(0.5, abs=1e-15)
        assert dist[(2, 0)] == pytest.approx(0.5 * 0.25, abs=1e-15)
        assert dist[(2, 4)] == pytest.approx(0.5 * 0.25, abs=1e-15)
        assert dist[(2, 2)] == pytest.approx(0.5 * 0.5, abs=1e-15)
        dead_by_2 = sum(p for v, p in dist.items() if v[1] == 0)
        assert dead_by_2 == pytest.approx(0.625, abs=1e-15)

    def test_no_birth_model_survival_indicator(self):
        # lone individual with fixed life: survival at t is exactly 1{t < L}
        model = Tabulated([(1.0, (), 4)])
        for t in range(1, 7):
            dist = enumerate_joint(model, (t,))
            alive = sum(p for v, p in dist.items() if v[0] > 0)
            assert alive == (1.0 if t < 4 else 0.0)

    def test_early_birth_model(self):
        model = Tabulated([(1.0, (1, 2), 3)])
        dist = enumerate_joint(model, (4,))
        # births per time follow the two-step recurrence 1,1,2,3,5; lives
        # span three slots, so Z(4) = 2 + 3 + 5
        assert set(dist) == {(10,)}

    def test_total_mass_one(self):
        for model in (gw_binary(), delayed_c1(), Tabulated([(0.5, (1, 2), 3), (0.5, (), 2)])):
            dist = enumerate_joint(model, (2, 4))
            assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)

    def test_saturation_exact_below_clamp(self):
        model = gw_binary()
        full = enumerate_joint(model, (2, 4))
        sat = enumerate_joint(model, (2, 4), saturate=3)
        for v, p in sat.items():
            if all(x < 3 for x in v):
                assert p == pytest.approx(full[v], abs=1e-15)
        lump = sum(p for v, p in sat.items() if any(x == 3 for x in v))
        lump_full = sum(p for v, p in full.items() if any(x >= 3 for x in v))
        assert lump == pytest.approx(lump_full, abs=1e-14)

    def test_tree_pgf_matches_full_enumeration(self):
        model = gw_binary()
        dist = enumerate_joint(model, (2, 4))
        z = (0.4, 0.7)
        direct = sum(p * z[0] ** v[0] * z[1] ** v[1] for v, p in dist.items())
        assert tree_pgf(model, (2, 4), z) == pytest.approx(direct, abs=1e-14)

    def test_budget_blowup(self):
        heavy = BellmanHarris(FiniteLife({1: 1.0}), OffspringPMF([0.5, 0, 0, 0, 0.5]))
        with pytest.raises(OracleBlowup):
            enumerate_joint(heavy, (1, 2, 3, 4, 5, 6), budget=50)

    def test_rejects_bad_times(self):
        with pytest.raises(ConfigError):
            enumerate_joint(gw_binary(), ())


class TestOracleEquivalence:
    @pytest.mark.parametrize(
        "model",
        [gw_binary(), Tabulated([(0.5, (1, 2), 3), (0.5, (), 2)]), delayed_c1()],
        ids=["gw", "tabulated", "delayed"],
    )
    def test_engine_matches_enumeration(self, model):
        report = oracle_equivalence(model, t_small=5)
        assert report.all_passed
        assert all(row.tolerance == 1e-12 for row in report.rows)
        assert {row.name for row in report.rows} == {
            "extinction profile vs enumeration",
            "joint pgf vs tree recursion",
            "conditional pmf vs enumeration",
        }

    def test_t_small_bounds(self):
        with pytest.raises(ConfigError):
            oracle_equivalence(gw_binary(), t_small=7)
        with pytest.raises(ConfigError):
            oracle_equivalence(gw_binary(), t_small=0)

    def test_t_small_one(self):
        assert oracle_equivalence(gw_binary(), t_small=1).all_passed


class TestRichardson:
    def test_recovers_pure_power_decay(self):
        for p in (0.5, 1.0, 2.0):
            x = [5.0 + 3.0 * (t ** -p) for t in (64, 128, 256)]
            assert richardson(*x) == pytest.approx(5.0, rel=1e-12)

    def test_constant_sequence(self):
        assert richardson(2.0, 2.0, 2.0) == 2.0

    def test_non_decaying_falls_back_to_last(self):
        assert richardson(1.0, 3.0, 2.0) == 2.0


class TestLimitConvergence:
    def test_gw_binary(self):
        report = limit_convergence(gw_binary(), (1.0, 2.0), (0.25, 0.5), (64, 128, 256, 512))
        assert report.all_passed
        extrap = {r.name: r for r in report.rows}["tQ extrapolation"]
        assert extrap.reference == 2.0
        assert abs(extrap.statistic - 2.0) < 0.01

    def test_zero_tail_weight_invariance(self):
        # d = 0: the weighted limit equals the plain one for any weights
        model = Tabulated([(0.5, (1, 2), 3), (0.5, (), 2)])
        for z in ((0.25, 0.5), (0.9, 0.1)):
            report = limit_convergence(model, (1.0, 2.0), z, (64, 128, 256))
            by = {r.name: r for r in report.rows}
            assert by["weighted tQ extrapolation"].reference == by["tQ extrapolation"].reference

    def test_requires_dyadic_grid(self):
        with pytest.raises(ConfigError):
            limit_convergence(gw_binary(), (1.0,), (0.5,), (64, 100, 200))
        with pytest.raises(ConfigError):
            limit_convergence(gw_binary(), (1.0,), (0.5,), (64, 128))

    def test_rejects_noncritical(self):
        skewed = BellmanHarris(FiniteLife({1: 1.0}), OffspringPMF([0.25, 0.25, 0.5]))
        with pytest.raises(ConfigError):
            limit_convergence(skewed, (1.0,), (0.5,), (64, 128, 256))


class TestFddLimit:
    def test_delayed_c1_marginal_trend(self):
        model = delayed_c1()
        report = fdd_limit_check(model, (1.0,), (16, 32, 64), K=10, replicates=8000)
        assert report.all_passed
        tv_rows = [r for r in report.rows if r.name.startswith("tv")]
        assert [r.statistic for r in tv_rows] == sorted(
            (r.statistic for r in tv_rows), reverse=True
        )

    def test_tv_within_unit_interval(self):
        model = delayed_c1()
        tv = tv_to_limit(model, (1.0, 2.0), 32, 8, c=1.0)
        assert 0.0 <= tv <= 1.0

    def test_conditioned_count_trend_matches_limit_value(self):
        # P(Z=1 | survival) at growing t vs the limit mass at one
        model = delayed_c1()
        target = eta_marginal_pmf(LimitParams(1.0), 1.0, 1).probs[1]
        assert target == pytest.approx((2.0 - math.sqrt(2.0)) / 4.0, abs=1e-12)
        from gwolab.exact_engine import FddSpec, conditional_pmf

        errs = []
        for t in (32, 64, 128):
            pm = conditional_pmf(model, FddSpec((t,), (0.0,), t_obs=t), K=2)
            errs.append(abs(float(pm.probs[1]) - target))
        assert errs[0] > errs[1] > errs[2]

    def test_dichotomy_target_from_hitting_time(self):
        assert dichotomy_fraction(1.0) == pytest.approx(3.0 - 2.0 * math.sqrt(2.0), abs=1e-14)

    def test_requires_scale_one_first(self):
        with pytest.raises(ConfigError):
            fdd_limit_check(delayed_c1(), (2.0,), (16, 32))


class TestReporting:
    def test_json_roundtrip(self):
        reports = [oracle_equivalence(gw_binary(), t_small=3)]
        buf = io.StringIO()
        report_json(reports, buf)
        payload = json.loads(buf.getvalue())
        assert payload["all_passed"] is True
        assert payload["reports"][0]["rows"][0]["tolerance"] == 1e-12
        assert {"statistic", "reference", "passed", "source", "runtime"} <= set(
            payload["reports"][0]["rows"][0]
        )

    def test_failed_row_propagates(self):
        row = CheckRow("x", 1.0, 0.0, 0.5, False, "none", 0.0)
        from gwolab.verify import RunReport

        rep = RunReport(name="r", rows=[row])
        assert not rep.all_passed
        buf = io.StringIO()
        report_json([rep], buf)
        assert json.loads(buf.getvalue())["all_passed"] is False

    def test_battery_thread_invariance(self):
        seq = run_battery(threads=1)
        par = run_battery(threads=4)
        assert [r.name for r in seq] == [r.name for r in par]
        for a, b in zip(seq, par):
            for ra, rb in zip(a.rows, b.rows):
                assert ra.statistic == rb.statistic and ra.passed == rb.passed
        assert all(r.all_passed for r in seq)
