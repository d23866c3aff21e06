"""LinUCB, Thompson sampling, epsilon-greedy, and Whittle indices."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nudgeforge.bandits import (
    Decision,
    LinUcbState,
    RestlessArmModel,
    TsState,
    allocate_topk,
    egreedy_choose,
    whittle_index,
)
from nudgeforge.errors import DimensionMismatch, NoIndifference

from helpers import oracle_whittle_index


class TestLinUcb:
    def test_fresh_tie_goes_low(self):
        state = LinUcbState(d=1, arm_ids=[0, 1])
        assert state.choose([1.0]).arm_id == 0

    def test_reward_one_keeps_arm(self):
        # A0 = 2, b0 = 1: UCB0 = 0.5 + sqrt(0.5) ~ 1.2071 > UCB1 = 1
        state = LinUcbState(d=1, arm_ids=[0, 1])
        state.update(Decision(0, 1.0, (1.0,)), reward=1.0)
        assert state.score(0, [1.0]) == pytest.approx(0.5 + math.sqrt(0.5))
        assert state.choose([1.0]).arm_id == 0

    def test_reward_zero_moves_on(self):
        # UCB0 = sqrt(0.5) ~ 0.7071 < 1
        state = LinUcbState(d=1, arm_ids=[0, 1])
        state.update(Decision(0, 1.0, (1.0,)), reward=0.0)
        assert state.score(0, [1.0]) == pytest.approx(math.sqrt(0.5))
        assert state.choose([1.0]).arm_id == 1

    def test_update_arithmetic(self):
        state = LinUcbState(d=1, arm_ids=[0, 1])
        state.update(Decision(0, 1.0, (1.0,)), reward=1.0)
        assert state.A[0] == pytest.approx(np.array([[2.0]]))
        assert state.b[0] == pytest.approx(np.array([1.0]))
        assert state.A[1] == pytest.approx(np.eye(1))
        assert state.b[1] == pytest.approx(np.zeros(1))

    def test_updates_commute(self):
        pairs = [((1.0, 0.0), 1.0), ((0.5, 0.5), -0.5), ((0.0, 1.0), 2.0)]
        a = LinUcbState(d=2, arm_ids=[0])
        b = LinUcbState(d=2, arm_ids=[0])
        for x, r in pairs:
            a.update(Decision(0, 1.0, x), r)
        for x, r in reversed(pairs):
            b.update(Decision(0, 1.0, x), r)
        assert a.A[0] == pytest.approx(b.A[0])
        assert a.b[0] == pytest.approx(b.b[0])

    def test_argmax_invariant_under_shared_shifted_stream(self):
        x = (1.0, -0.5)
        stream = [((1.0, 0.2), 0.4), ((0.1, 1.0), -0.2), ((0.7, 0.7), 1.1)]
        plain = LinUcbState(d=2, arm_ids=[0, 1, 2])
        shifted = LinUcbState(d=2, arm_ids=[0, 1, 2])
        for ctx, r in stream:
            for arm in (0, 1, 2):
                plain.update(Decision(arm, 1.0, ctx), r)
                shifted.update(Decision(arm, 1.0, ctx), r + 3.0)
        assert plain.choose(x).arm_id == shifted.choose(x).arm_id

    def test_width_shrinks_with_updates(self):
        state = LinUcbState(d=2, arm_ids=[0])
        x = (0.8, 0.6)
        rng = np.random.default_rng(0)
        widths = [state.width(0, x)]
        for _ in range(20):
            ctx = tuple(rng.normal(size=2))
            state.update(Decision(0, 1.0, ctx), rng.normal())
            widths.append(state.width(0, x))
        assert all(b <= a + 1e-12 for a, b in zip(widths, widths[1:]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_design_matrix_stays_cholesky_factorable(self, seed):
        rng = np.random.default_rng(seed)
        state = LinUcbState(d=3, arm_ids=[0])
        for _ in range(15):
            ctx = tuple(rng.normal(size=3))
            state.update(Decision(0, 1.0, ctx), rng.normal())
        assert np.allclose(state.A[0], state.A[0].T)
        np.linalg.cholesky(state.A[0])  # raises if not PD

    def test_dimension_mismatch(self):
        state = LinUcbState(d=2, arm_ids=[0])
        with pytest.raises(DimensionMismatch):
            state.choose([1.0, 2.0, 3.0])
        with pytest.raises(DimensionMismatch):
            state.choose([1.0, float("nan")])

    def test_eligible_subset(self):
        state = LinUcbState(d=1, arm_ids=[0, 1, 2])
        state.update(Decision(0, 1.0, (1.0,)), reward=5.0)
        assert state.choose([1.0], eligible={1, 2}).arm_id == 1

    def test_kv_round_trip_exact(self):
        state = LinUcbState(d=2, arm_ids=[0, 3], alpha=0.7, ridge=2.0)
        state.update(Decision(0, 1.0, (0.3, -1.7)), reward=0.123456789)
        restored = LinUcbState.from_kv(state.to_kv())
        assert restored.alpha == state.alpha
        for arm in state.arm_ids:
            assert np.array_equal(restored.A[arm], state.A[arm])
            assert np.array_equal(restored.b[arm], state.b[arm])


class TestThompson:
    def test_symmetric_arms_split_evenly(self):
        state = TsState(d=1, arm_ids=[0, 1], seed=42)
        picks = sum(state.choose([1.0]).arm_id for _ in range(10_000))
        assert abs(picks / 10_000 - 0.5) < 0.02

    def test_seed_reproduces_sequence(self):
        a = TsState(d=2, arm_ids=[0, 1], seed=7)
        b = TsState(d=2, arm_ids=[0, 1], seed=7)
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = tuple(rng.normal(size=2))
            da, db = a.choose(x), b.choose(x)
            assert da.arm_id == db.arm_id
            reward = float(rng.normal())
            a.update(da, reward)
            b.update(db, reward)

    def test_converged_posterior_dominates(self):
        state = TsState(d=1, arm_ids=[0, 1], seed=3)
        for _ in range(200):
            state.update(Decision(0, None, (1.0,)), 1.0)
            state.update(Decision(1, None, (1.0,)), 0.0)
        wins = sum(state.choose([1.0]).arm_id == 0 for _ in range(1000))
        assert wins > 950

    def test_propensity_estimate_leaves_main_stream_alone(self):
        plain = TsState(d=1, arm_ids=[0, 1], seed=11)
        with_prop = TsState(d=1, arm_ids=[0, 1], seed=11)
        seq_plain = [plain.choose([1.0]).arm_id for _ in range(30)]
        seq_prop = []
        for i in range(30):
            decision = with_prop.choose([1.0], estimate_propensity=(i % 5 == 0))
            seq_prop.append(decision.arm_id)
            if i % 5 == 0:
                assert decision.propensity is not None
                assert 0.0 < decision.propensity <= 1.0
            else:
                assert decision.propensity is None
        assert seq_plain == seq_prop

    def test_propensity_near_one_when_posterior_converged(self):
        state = TsState(d=1, arm_ids=[0, 1], seed=5)
        for _ in range(300):
            state.update(Decision(0, None, (1.0,)), 1.0)
            state.update(Decision(1, None, (1.0,)), 0.0)
        decision = state.choose([1.0], estimate_propensity=True)
        assert decision.arm_id == 0
        assert decision.propensity > 0.95

    def test_kv_round_trip_continues_stream(self):
        state = TsState(d=1, arm_ids=[0, 1], seed=9)
        for _ in range(10):
            state.choose([1.0])
        state.update(Decision(0, None, (1.0,)), 0.5)
        clone = TsState.from_kv(state.to_kv())
        for _ in range(20):
            assert clone.choose([1.0]).arm_id == state.choose([1.0]).arm_id

    def test_dimension_mismatch(self):
        state = TsState(d=2, arm_ids=[0], seed=0)
        with pytest.raises(DimensionMismatch):
            state.choose([1.0])


class TestEGreedy:
    MEANS = {0: 0.3, 1: 0.9, 2: 0.1}

    def test_zero_epsilon_is_greedy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            decision = egreedy_choose(self.MEANS, 0.0, rng)
            assert decision.arm_id == 1
            assert decision.propensity == 1.0

    def test_tie_break_lowest(self):
        rng = np.random.default_rng(0)
        assert egreedy_choose({0: 0.5, 1: 0.5}, 0.0, rng).arm_id == 0

    def test_full_epsilon_uniform(self):
        rng = np.random.default_rng(123)
        counts = {0: 0, 1: 0, 2: 0}
        for _ in range(10_000):
            counts[egreedy_choose(self.MEANS, 1.0, rng).arm_id] += 1
        for arm in counts:
            assert abs(counts[arm] / 10_000 - 1 / 3) < 0.02

    def test_exact_propensities(self):
        rng = np.random.default_rng(7)
        seen = set()
        for _ in range(200):
            decision = egreedy_choose(self.MEANS, 0.3, rng)
            seen.add(decision.arm_id)
            if decision.arm_id == 1:
                assert decision.propensity == pytest.approx(0.7 + 0.1)
            else:
                assert decision.propensity == pytest.approx(0.1)
        assert seen == {0, 1, 2}


NEUTRAL = ((0.5, 0.5), (0.5, 0.5))


class TestWhittle:
    def test_no_action_effect_means_zero_index(self):
        arm = RestlessArmModel(p_active=NEUTRAL, p_passive=NEUTRAL)
        for state in (0, 1):
            assert abs(whittle_index(arm, state)) <= 1e-6

    def test_matches_exact_solve_oracle(self):
        arm = RestlessArmModel(
            p_active=((0.2, 0.8), (0.1, 0.9)),
            p_passive=((0.9, 0.1), (0.4, 0.6)),
            discount=0.95,
        )
        for state in (0, 1):
            assert whittle_index(arm, state) == pytest.approx(
                oracle_whittle_index(arm, state), abs=1e-4
            )

    def test_near_myopic_limit(self):
        arm = RestlessArmModel(
            p_active=((0.2, 0.8), (0.1, 0.9)),
            p_passive=((0.9, 0.1), (0.4, 0.6)),
            discount=0.01,
        )
        for state in (0, 1):
            assert whittle_index(arm, state) == pytest.approx(
                oracle_whittle_index(arm, state), abs=1e-3
            )

    def test_no_indifference_reported(self):
        # acting always flips to engaged while resting freezes the state;
        # at discount 0.995 the state-0 indifference subsidy exceeds 10
        arm = RestlessArmModel(
            p_active=((0.0, 1.0), (0.0, 1.0)),
            p_passive=((1.0, 0.0), (0.0, 1.0)),
            discount=0.995,
        )
        with pytest.raises(NoIndifference):
            whittle_index(arm, 0)

    def test_transition_validation(self):
        with pytest.raises(ValueError):
            RestlessArmModel(p_active=((0.5, 0.6), (0.5, 0.5)), p_passive=NEUTRAL)


class TestAllocateTopK:
    def test_sort(self):
        assert allocate_topk({0: 0.5, 1: 0.2, 2: 0.9}, 2) == {2, 0}

    def test_tie_break(self):
        assert allocate_topk({0: 0.5, 1: 0.5}, 1) == {0}

    def test_k_truncates(self):
        assert allocate_topk({0: 0.1, 1: 0.2}, 5) == {0, 1}
        assert allocate_topk({0: 0.1, 1: 0.2}, 0) == set()
