"""Shared tabular Q-policy over the 36-state synapse history space.

Each synapse observes only its own last two action signs and the last two
global reward signs; all synapses share one 36x3 Q-table.
"""

import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1
ENCODING_ID = "a1a2r1r2-v1"

N_STATES = 36
N_ACTIONS = 3


class ActionSign(IntEnum):
    """Canonical indices 0/1/2; sign is index - 1."""

    DEC = 0
    NULL = 1
    INC = 2

    @property
    def sign(self):
        return int(self) - 1


class RewardSign(IntEnum):
    NEG = 0
    POS = 1

    @property
    def sign(self):
        return 2 * int(self) - 1


@dataclass(frozen=True)
class SynapseHistory:
    """Last two own actions and last two global rewards, most recent first."""

    a_prev1: ActionSign
    a_prev2: ActionSign
    r_prev1: RewardSign
    r_prev2: RewardSign


def encode_state(h):
    """Bijection SynapseHistory -> [0, 35]."""
    return ((int(h.a_prev1) * 3 + int(h.a_prev2)) * 2 + int(h.r_prev1)) * 2 + int(h.r_prev2)


def decode_state(index):
    if not 0 <= index < N_STATES:
        raise ConfigError(f"state index out of range: {index}")
    index, r2 = divmod(index, 2)
    index, r1 = divmod(index, 2)
    a1, a2 = divmod(index, 3)
    return SynapseHistory(ActionSign(a1), ActionSign(a2), RewardSign(r1), RewardSign(r2))


def encode_states(a1, a2, r1, r2):
    """Vectorized encode over parallel index arrays."""
    return ((a1 * 3 + a2) * 2 + r1) * 2 + r2


class QTable:
    """36x3 expected-reward table with its TD hyperparameters."""

    def __init__(self, gamma, alpha_q, values=None):
        if not 0.0 <= gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0,1], got {gamma}")
        if alpha_q < 0.0:
            raise ConfigError(f"alpha_q must be nonnegative, got {alpha_q}")
        self.gamma = float(gamma)
        self.alpha_q = float(alpha_q)
        if values is None:
            values = np.zeros((N_STATES, N_ACTIONS))
        self.values = np.array(values, dtype=np.float64)
        if self.values.shape != (N_STATES, N_ACTIONS):
            raise ConfigError(f"Q-table must be {N_STATES}x{N_ACTIONS}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("Q-table entries must be finite")

    def copy(self):
        return QTable(self.gamma, self.alpha_q, self.values.copy())

    def to_json_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "encoding_id": ENCODING_ID,
            "gamma": self.gamma,
            "alpha_q": self.alpha_q,
            "values": self.values.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported policy format_version: {d.get('format_version')}")
        if d.get("encoding_id") != ENCODING_ID:
            raise ConfigError(
                f"policy encoding mismatch: file has {d.get('encoding_id')!r}, "
                f"reader expects {ENCODING_ID!r}"
            )
        return cls(d["gamma"], d["alpha_q"], np.array(d["values"]))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"policy file is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("policy file must hold a JSON object")
        try:
            return cls.from_json_dict(d)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed policy file: {e}") from e


def select_actions(q, states, epsilon, rng):
    """Epsilon-greedy action for each state in `states` (vectorized).

    With probability epsilon a uniform-random action is taken; otherwise an
    argmax of the state's Q-row, ties broken uniformly at random. The rng is
    consumed in a fixed order (explore mask, random actions, tie-break noise)
    so a given seed yields one reproducible action sequence.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must be in [0,1], got {epsilon}")
    states = np.asarray(states)
    rows = q.values[states]
    explore = rng.random(states.shape[0]) < epsilon
    random_actions = rng.integers(0, N_ACTIONS, size=states.shape[0])
    tie_noise = rng.random((states.shape[0], N_ACTIONS))
    is_max = rows == rows.max(axis=1, keepdims=True)
    greedy = np.argmax(np.where(is_max, tie_noise, -1.0), axis=1)
    return np.where(explore, random_actions, greedy)


def select_action(q, state, policy_epsilon, rng):
    """Single-state epsilon-greedy selection; returns an ActionSign."""
    if not 0 <= state < N_STATES:
        raise ConfigError(f"state index out of range: {state}")
    return ActionSign(int(select_actions(q, np.array([state]), policy_epsilon, rng)[0]))


def td_update(q, s_prev, a_prev, reward, s_next):
    """One Q-learning step: Q(s,a) += alpha_q * (R + gamma * max Q(s') - Q(s,a)).

    Mutates exactly one entry of the table in place.
    """
    a = int(a_prev)
    qsa = q.values[s_prev, a]
    best_next = q.values[s_next].max()
    r = reward.sign if isinstance(reward, RewardSign) else float(reward)
    q.values[s_prev, a] = qsa + q.alpha_q * (r + q.gamma * best_next - qsa)


def td_update_variant(q, s_prev, a_prev, reward, s_next):
    """Variant with the discount applied to the whole bracketed difference,
    kept behind a config flag for comparison runs."""
    a = int(a_prev)
    qsa = q.values[s_prev, a]
    best_next = q.values[s_next].max()
    r = reward.sign if isinstance(reward, RewardSign) else float(reward)
    q.values[s_prev, a] = qsa + q.alpha_q * (r + q.gamma * (best_next - qsa))


def reward_from_losses(loss_prev, loss_curr):
    """Sign of the loss change: positive only for a strict decrease."""
    if not (np.isfinite(loss_prev) and np.isfinite(loss_curr)):
        raise ConfigError(f"losses must be finite, got {loss_prev}, {loss_curr}")
    return RewardSign.POS if loss_prev > loss_curr else RewardSign.NEG


def apply_action(weight, action, alpha_s):
    """New weight after the action: weight + sign * alpha_s (NULL is a no-op)."""
    return weight + action.sign * alpha_s
