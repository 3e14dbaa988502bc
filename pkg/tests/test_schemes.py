import math

import numpy as np
import pytest

from helpers import C, evs_candidate, mixed_law, strong_law, uw_passing_law, weak_law
from ergodic_hk.channel import StateClass, Structural, classify_channel, make_law
from ergodic_hk.optimize import (
    Method,
    OptimizerOptions,
    brute_force_oracle,
    maximize_joint,
    maximize_separable,
    waterfill,
)
from ergodic_hk.rates import sum_rate_bounds
from ergodic_hk.schemes import (
    SchemeError,
    check_evs,
    compare_joint_vs_separable,
    evs_sum_capacity,
    subclass_report,
    um_split,
    um_sum_capacity,
    us_sum_capacity,
    uw_condition_check,
    uw_sum_rate,
)

QUICK = OptimizerOptions(restarts=2, iters=400, patience=50)

STRONG = (1, 2, 2, 1)
WEAK = (1, 0.5, 0.5, 1)
MIXED = (1, 0.25, 4, 1)
MIXED_OTHER = (1, 4, 0.25, 1)


class TestEVS:
    def test_very_strong_single_state(self):
        ok, w = check_evs(make_law([(1, 100, 100, 1)]))
        assert ok and w.full
        assert w.sum_rates[0] == pytest.approx(2.0, abs=1e-12)
        assert w.sum_rates[1] == pytest.approx(math.log2(102), abs=1e-12)
        assert w.sum_rates[2] == pytest.approx(math.log2(102), abs=1e-12)

    def test_weak_single_state(self):
        ok, w = check_evs(make_law([WEAK]))
        assert not ok
        assert w.sum_rates[1] == pytest.approx(C(1.5), abs=1e-12)
        assert w.sum_rates[1] == pytest.approx(1.3219, abs=1e-4)
        assert w.sum_rates[0] == pytest.approx(2.0, abs=1e-12)

    def test_zero_budget(self):
        ok, w = check_evs(make_law([(1, 100, 100, 1)], budgets=(0, 0)))
        assert not ok and w.sum_rates[:3] == (0.0, 0.0, 0.0)

    def test_closed_form(self):
        r = evs_sum_capacity(make_law([(1, 100, 100, 1)]))
        assert r.value == 2.0 and r.split.tolist() == [[0, 0]]
        assert r.method is Method.CLOSED_FORM

    def test_two_state_strong_plus_weak(self):
        # a weak state plus a very strong one: scale the strong state's cross gains up
        scale = 1.0
        while True:
            law = make_law([(1, 0.5, 0.5, 1), (1, 2 * scale, 2 * scale, 1)], budgets=(1, 1))
            if check_evs(law)[0]:
                break
            scale *= 2
        assert set(classify_channel(law).state_classes) == {StateClass.WEAK, StateClass.STRONG}
        r = evs_sum_capacity(law)
        p1, p2 = waterfill(law, 1).power, waterfill(law, 2).power
        expected = sum(p * (C(s.g11 * a) + C(s.g22 * b)) for p, s, a, b in zip(law.probs, law.states, p1, p2))
        assert r.value == pytest.approx(expected, abs=1e-12)

    def test_guard(self):
        with pytest.raises(SchemeError, match="NotEVS"):
            evs_sum_capacity(make_law([WEAK]))

    @pytest.mark.parametrize("seed", range(5))
    def test_reduced_implies_full(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(20):
            ok, w = check_evs(evs_candidate(rng, int(rng.integers(1, 4)), True))
            if ok:
                assert w.full


class TestUniformlyStrong:
    def test_symmetric_example(self):
        law = make_law([STRONG])
        r = us_sum_capacity(law, QUICK)
        assert r.value == pytest.approx(2.0, abs=1e-9)
        assert r.split.tolist() == [[0, 0]]
        s = sum_rate_bounds(law, r.split, r.power).as_array()
        assert min(s) == pytest.approx(min(s[:3]), abs=1e-12)
        assert brute_force_oracle(law, 5, 11).value <= r.value + 1e-9

    @pytest.mark.parametrize("seed", range(3))
    def test_remaining_bounds_inactive(self, seed):
        law = strong_law(np.random.default_rng(seed), 2)
        r = us_sum_capacity(law, QUICK)
        s = sum_rate_bounds(law, r.split, r.power).as_array()
        assert min(s) == pytest.approx(r.value, abs=1e-9)

    @pytest.mark.parametrize("g", [WEAK, MIXED])
    def test_guard(self, g):
        with pytest.raises(SchemeError, match="NotUniformlyStrong"):
            us_sum_capacity(make_law([g]))

    def test_s2_nonincreasing_in_split(self):
        law = strong_law(np.random.default_rng(7), 2)
        p = np.ones((2, 2))
        prev = None
        for a in np.linspace(0, 1, 6):
            s2 = sum_rate_bounds(law, np.full((2, 2), a), p).S2
            if prev is not None:
                assert s2 <= prev + 1e-12
            prev = s2


class TestUniformlyMixed:
    def test_example(self):
        law = make_law([MIXED])
        r = um_sum_capacity(law, QUICK)
        assert r.split.tolist() == [[0, 1]]
        orc = brute_force_oracle(law, 1, 41, split=[[0, 1]], bounds=(2, 3))
        assert r.value >= orc.value - 1e-9
        assert r.value - orc.value <= 1e-3
        s = sum_rate_bounds(law, r.split, r.power).as_array()
        assert s[0] == pytest.approx(s[1], abs=1e-9)
        assert s[3] == pytest.approx(s[2], abs=1e-9)
        assert min(s[4], s[5]) > min(s[1], s[2])

    def test_split_orientation(self):
        assert um_split(StateClass.MIXED_RX1_WEAK_RX2_STRONG, 2).tolist() == [[0, 1], [0, 1]]
        assert um_split(StateClass.MIXED_RX1_STRONG_RX2_WEAK, 1).tolist() == [[1, 0]]
        with pytest.raises(SchemeError):
            um_split(StateClass.STRONG, 1)

    def test_swap_equivariance(self):
        law = mixed_law(np.random.default_rng(3), 2)
        a = um_sum_capacity(law, QUICK)
        b = um_sum_capacity(law.swapped(), QUICK)
        assert a.value == pytest.approx(b.value, abs=1e-6)

    @pytest.mark.parametrize("states", [[STRONG], [WEAK], [MIXED, MIXED_OTHER]])
    def test_guard(self, states):
        with pytest.raises(SchemeError, match="NotUniformlyMixed"):
            um_sum_capacity(make_law(states))


class TestUniformlyWeak:
    def test_conditions_per_state(self):
        ok, m = uw_condition_check(make_law([(1, 0.2, 0.1, 1)], budgets=(2, 2), mode="per_state"))
        assert ok
        assert m.c1[0] == pytest.approx(1 - 0.24, abs=1e-12)
        assert m.c2[0] == pytest.approx(1 - 0.14, abs=1e-12)

    def test_conditions_average(self):
        ok, m = uw_condition_check(make_law([(1, 0.2, 0.1, 1)], budgets=(2, 2)))
        assert ok and m.c1[0] == pytest.approx(0.76, abs=1e-12)

    def test_conditions_fail(self):
        ok, m = uw_condition_check(make_law([(1, 0.9, 0.9, 1)], budgets=(2, 2), mode="per_state"))
        assert not ok
        assert m.c1[0] == pytest.approx(1 - 2.52, abs=1e-12)

    def test_average_mode_worst_case_uses_prob(self):
        law = make_law([(1, 0.2, 0.1, 1), (1, 0.2, 0.1, 1)], budgets=(2, 2))
        ok, m = uw_condition_check(law)
        assert m.worst_power.tolist() == [[4, 4], [4, 4]]
        assert m.c1[0] == pytest.approx(1 - (1 + 0.4) * 0.2, abs=1e-12)

    def test_sum_rate_example(self):
        law = make_law([(1, 0.2, 0.1, 1)], budgets=(2, 2), mode="per_state")
        r = uw_sum_rate(law, QUICK)
        expected = math.log2(17 / 7) + math.log2(8 / 3)
        assert r.value == pytest.approx(expected, abs=1e-9)
        assert r.value == pytest.approx(2.695, abs=1e-3)
        assert r.split.tolist() == [[1, 1]]
        assert brute_force_oracle(law, 5, 9).value <= r.value + 1e-9
        assert r.value == pytest.approx(maximize_separable(law, QUICK).value, abs=1e-6)

    def test_failing_conditions(self):
        with pytest.raises(SchemeError, match="UWConditionsFail"):
            uw_sum_rate(make_law([(1, 0.9, 0.9, 1)], budgets=(2, 2), mode="per_state"))

    @pytest.mark.parametrize("g", [STRONG, MIXED])
    def test_guard(self, g):
        with pytest.raises(SchemeError, match="NotUniformlyWeak"):
            uw_condition_check(make_law([g]))

    def test_generated_laws_pass(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert uw_condition_check(uw_passing_law(rng, 3, True))[0]


class TestCompare:
    def test_single_state_gap_zero(self):
        rep = compare_joint_vs_separable(make_law([(1, 0.4, 0.7, 1.2)]), QUICK)
        assert abs(rep.gap) <= 1e-6

    def test_interference_free(self):
        law = make_law([(1, 0, 0, 2), (3, 0, 0, 0.5)], budgets=(1, 1))
        rep = compare_joint_vs_separable(law, QUICK)
        p1, p2 = waterfill(law, 1).power, waterfill(law, 2).power
        wf = sum(p * (C(s.g11 * a) + C(s.g22 * b)) for p, s, a, b in zip(law.probs, law.states, p1, p2))
        assert rep.joint.value == pytest.approx(wf, abs=1e-6)
        assert rep.separable.value == pytest.approx(wf, abs=1e-6)
        assert abs(rep.gap) <= 1e-6

    def test_hybrid(self):
        law = make_law([STRONG, WEAK], budgets=(2, 2))
        rep = compare_joint_vs_separable(law, QUICK)
        assert rep.channel.structural is Structural.HYBRID
        assert rep.gap >= -1e-6
        rows = rep.split_structure()
        assert [r["class"] for r in rows] == ["Strong", "Weak"]

    def test_hybrid_strong_state_split(self):
        law = make_law([(1, 3, 3, 1), (1, 0.2, 0.2, 1)], budgets=(2, 2))
        rep = compare_joint_vs_separable(law, QUICK)
        assert rep.joint.split[0] == pytest.approx([0, 0], abs=1e-6)
        assert np.all(rep.joint.split[1] > 0)


class TestSubclassReport:
    def test_evs(self):
        rep = subclass_report(make_law([(1, 100, 100, 1)]), QUICK)
        assert rep.scheme == "evs" and rep.capacity_certified and rep.evs
        assert rep.channel.evs

    def test_strong(self):
        rep = subclass_report(make_law([STRONG]), QUICK)
        assert rep.scheme == "uniformly_strong" and rep.capacity_certified

    def test_mixed(self):
        rep = subclass_report(make_law([MIXED]), QUICK)
        assert rep.scheme == "uniformly_mixed" and rep.capacity_certified
        assert rep.recommended_split.tolist() == [[0, 1]]

    def test_weak_tin(self):
        rep = subclass_report(make_law([(1, 0.2, 0.1, 1)], budgets=(2, 2)), QUICK)
        assert rep.scheme == "uniformly_weak_tin" and not rep.capacity_certified
        assert rep.uw_conditions is True

    def test_weak_failing(self):
        rep = subclass_report(make_law([(1, 0.9, 0.9, 1)], budgets=(2, 2)), QUICK)
        assert rep.scheme == "joint_search" and rep.uw_conditions is False
        assert not rep.capacity_certified and rep.notes

    def test_hybrid(self):
        rep = subclass_report(make_law([STRONG, WEAK]), QUICK)
        assert rep.channel.structural is Structural.HYBRID
        assert rep.scheme == "joint_search" and not rep.capacity_certified

    @pytest.mark.parametrize("seed", range(4))
    def test_certified_only_for_known_classes(self, seed):
        rng = np.random.default_rng(seed)
        law = [strong_law, weak_law, mixed_law, evs_candidate][seed](rng, 2)
        rep = subclass_report(law, QUICK)
        if rep.capacity_certified:
            assert rep.evs or rep.channel.structural in (
                Structural.UNIFORMLY_STRONG,
                Structural.UNIFORMLY_MIXED,
            )
