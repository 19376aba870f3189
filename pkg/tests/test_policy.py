import json

import numpy as np
import pytest

from synrl.errors import ConfigError
from synrl.policy import (ENCODING_ID, N_STATES, ActionSign, QTable, RewardSign,
                          SynapseHistory, apply_action, decode_state, encode_state,
                          reward_from_losses, select_action, select_actions, td_update)


class TestEncoding:
    def test_all_minimal(self):
        h = SynapseHistory(ActionSign.DEC, ActionSign.DEC, RewardSign.NEG, RewardSign.NEG)
        assert encode_state(h) == 0

    def test_all_maximal(self):
        h = SynapseHistory(ActionSign.INC, ActionSign.INC, RewardSign.POS, RewardSign.POS)
        assert encode_state(h) == 35

    def test_mixed(self):
        h = SynapseHistory(ActionSign.NULL, ActionSign.INC, RewardSign.POS, RewardSign.NEG)
        assert encode_state(h) == ((1 * 3 + 2) * 2 + 1) * 2 + 0

    def test_bijection(self):
        seen = set()
        for a1 in ActionSign:
            for a2 in ActionSign:
                for r1 in RewardSign:
                    for r2 in RewardSign:
                        h = SynapseHistory(a1, a2, r1, r2)
                        idx = encode_state(h)
                        assert 0 <= idx < N_STATES
                        assert decode_state(idx) == h
                        seen.add(idx)
        assert seen == set(range(N_STATES))

    def test_decode_range_check(self):
        with pytest.raises(ConfigError):
            decode_state(36)


class TestSelectAction:
    def test_greedy_unique_argmax(self):
        q = QTable(0.9, 0.01)
        q.values[5] = [0.2, -0.1, 0.05]
        rng = np.random.default_rng(0)
        for _ in range(50):
            assert select_action(q, 5, 0.0, rng) == ActionSign.DEC

    def test_full_exploration_uniform(self):
        q = QTable(0.9, 0.01)
        q.values[3] = [5.0, 0.0, -5.0]
        rng = np.random.default_rng(1)
        actions = select_actions(q, np.full(30000, 3), 1.0, rng)
        for a in range(3):
            assert abs(np.mean(actions == a) - 1 / 3) < 0.02

    def test_zero_row_ties_uniform(self):
        q = QTable(0.9, 0.01)
        rng = np.random.default_rng(2)
        actions = select_actions(q, np.full(30000, 0), 0.0, rng)
        for a in range(3):
            assert abs(np.mean(actions == a) - 1 / 3) < 0.02

    def test_greedy_invariant_under_affine_row_scaling(self):
        q = QTable(0.9, 0.01)
        q.values[7] = [0.1, 0.4, -0.2]
        scaled = QTable(0.9, 0.01)
        scaled.values[7] = 3.0 * q.values[7] + 10.0
        a = select_actions(q, np.full(200, 7), 0.0, np.random.default_rng(3))
        b = select_actions(scaled, np.full(200, 7), 0.0, np.random.default_rng(3))
        assert np.array_equal(a, b)
        assert np.all(a == 1)

    def test_seeded_determinism(self):
        q = QTable(0.9, 0.01)
        states = np.random.default_rng(4).integers(0, 36, size=500)
        a = select_actions(q, states, 0.3, np.random.default_rng(5))
        b = select_actions(q, states, 0.3, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_state_range_checked(self):
        q = QTable(0.9, 0.01)
        with pytest.raises(ConfigError):
            select_action(q, 40, 0.1, np.random.default_rng(0))


class TestTdUpdate:
    def test_first_update_from_zeros(self):
        q = QTable(0.9, 0.01)
        td_update(q, 4, ActionSign.INC, RewardSign.POS, 9)
        assert q.values[4, 2] == 0.01  # 0 + 0.01 * (1 + 0 - 0)
        assert np.count_nonzero(q.values) == 1

    def test_zero_learning_rate_is_noop(self):
        q = QTable(0.9, 0.0)
        q.values[:] = np.random.default_rng(6).normal(size=(36, 3))
        before = q.values.copy()
        td_update(q, 10, ActionSign.DEC, RewardSign.NEG, 20)
        assert np.array_equal(q.values, before)

    def test_hand_arithmetic(self):
        q = QTable(0.9, 0.1)
        q.values[2, 1] = 0.5
        q.values[8] = [0.1, 0.2, -0.3]
        td_update(q, 2, ActionSign.NULL, RewardSign.NEG, 8)
        # 0.5 + 0.1 * (-1 + 0.9 * 0.2 - 0.5)
        assert q.values[2, 1] == pytest.approx(0.368, abs=1e-15)

    def test_update_locality(self):
        q = QTable(0.9, 0.05)
        q.values[:] = np.random.default_rng(7).normal(size=(36, 3))
        before = q.values.copy()
        td_update(q, 12, ActionSign.INC, RewardSign.POS, 30)
        changed = np.argwhere(q.values != before)
        assert changed.shape == (1, 2)
        assert tuple(changed[0]) == (12, 2)

    def test_boundedness_fuzz(self):
        # from zeros, with |R| = 1 and gamma < 1, entries stay within
        # 1 / (1 - gamma) + 1
        gamma = 0.9
        q = QTable(gamma, 0.3)
        rng = np.random.default_rng(8)
        s = rng.integers(0, 36, size=1_000_000)
        a = rng.integers(0, 3, size=1_000_000)
        r = rng.choice([-1.0, 1.0], size=1_000_000)
        s2 = rng.integers(0, 36, size=1_000_000)
        qv = q.values
        for i in range(1_000_000):
            si, ai, s2i = s[i], a[i], s2[i]
            qsa = qv[si, ai]
            qv[si, ai] = qsa + 0.3 * (r[i] + gamma * max(qv[s2i, 0], qv[s2i, 1], qv[s2i, 2]) - qsa)
        bound = 1.0 / (1.0 - gamma) + 1.0
        assert np.all(np.abs(q.values) <= bound)


class TestRewardAndAction:
    def test_decrease_rewarded(self):
        assert reward_from_losses(0.5, 0.4) == RewardSign.POS

    def test_equality_penalized(self):
        assert reward_from_losses(0.4, 0.4) == RewardSign.NEG

    def test_increase_penalized(self):
        assert reward_from_losses(0.0, 1.0) == RewardSign.NEG

    def test_nan_rejected(self):
        with pytest.raises(ConfigError):
            reward_from_losses(float("nan"), 0.1)

    def test_apply_increment(self):
        assert apply_action(0.5, ActionSign.INC, 0.001) == 0.501

    def test_apply_null_bit_identical(self):
        assert apply_action(0.5, ActionSign.NULL, 0.001) == 0.5

    def test_apply_decrement_crosses_zero(self):
        assert apply_action(-0.0005, ActionSign.DEC, 0.001) == pytest.approx(-0.0015, abs=1e-18)


class TestPolicyFile:
    def test_round_trip(self, tmp_path):
        q = QTable(0.9, 0.01)
        q.values[:] = np.random.default_rng(9).normal(size=(36, 3))
        q.save(tmp_path / "policy.json")
        restored = QTable.load(tmp_path / "policy.json")
        assert restored.gamma == q.gamma
        assert restored.alpha_q == q.alpha_q
        assert np.array_equal(restored.values, q.values)

    def test_encoding_id_guard(self, tmp_path):
        q = QTable(0.9, 0.01)
        d = q.to_json_dict()
        d["encoding_id"] = "some-other-order-v9"
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d))
        with pytest.raises(ConfigError, match=ENCODING_ID):
            QTable.load(path)

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "corrupt.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            QTable.load(path)
