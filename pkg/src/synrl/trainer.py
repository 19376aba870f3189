"""The synchronized per-iteration training loop.

Every synapse picks an action from the shared policy, the global reward is
the sign of the resulting loss change, and (optionally) the shared Q-table
is updated from each synapse's transition. Includes the minibatch
re-selection and step-size scheduling used for the larger image runs.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mlp as mlp_mod
from .errors import ConfigError, DivergenceError
from .policy import ActionSign, RewardSign, encode_states, reward_from_losses, select_actions

CSV_HEADER = ["iteration", "train_loss", "reward", "train_acc", "val_loss", "val_acc", "alpha_s", "batch_boundary"]


@dataclass
class TrainerConfig:
    iterations: int
    epsilon: float
    alpha_s: float
    alpha_q: float
    gamma: float
    train_policy: bool
    seed: int = 0
    metrics_every: int = 100
    minibatch: Optional[dict] = None  # {"size": int, "reselect_every": int}
    alpha_s_schedule: Optional[list] = None  # [{"at_iteration": int, "new_alpha_s": float}]

    def validate(self, dataset_n=None):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0,1], got {self.epsilon}")
        if self.alpha_s < 0.0:
            raise ConfigError(f"alpha_s must be nonnegative, got {self.alpha_s}")
        if self.alpha_q < 0.0:
            raise ConfigError(f"alpha_q must be nonnegative, got {self.alpha_q}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0,1], got {self.gamma}")
        if self.metrics_every < 1:
            raise ConfigError("metrics_every must be positive")
        if self.minibatch is not None:
            size = self.minibatch.get("size", 0)
            every = self.minibatch.get("reselect_every", 0)
            if size < 1 or every < 1:
                raise ConfigError(f"bad minibatch config: {self.minibatch}")
            if dataset_n is not None and size > dataset_n:
                raise ConfigError(f"minibatch size {size} exceeds dataset size {dataset_n}")
        if self.alpha_s_schedule:
            its = [e["at_iteration"] for e in self.alpha_s_schedule]
            if its != sorted(its) or len(set(its)) != len(its):
                raise ConfigError("alpha_s_schedule iterations must be strictly increasing")
            if any(e["new_alpha_s"] < 0.0 for e in self.alpha_s_schedule):
                raise ConfigError("scheduled alpha_s must be nonnegative")


@dataclass
class MetricsRow:
    iteration: int
    train_loss: float
    reward: Optional[int]  # +1/-1; None for methods without a reward signal
    train_acc: Optional[float]
    val_loss: Optional[float]
    val_acc: Optional[float]
    alpha_s: Optional[float]
    batch_boundary: bool = False


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    def append(self, row):
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ConfigError("metrics iterations must be strictly increasing")
        self.rows.append(row)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([
                r.iteration,
                repr(r.train_loss),
                "" if r.reward is None else r.reward,
                "" if r.train_acc is None else repr(r.train_acc),
                "" if r.val_loss is None else repr(r.val_loss),
                "" if r.val_acc is None else repr(r.val_acc),
                "" if r.alpha_s is None else repr(r.alpha_s),
                int(r.batch_boundary),
            ])
        return buf.getvalue()

    def save_csv(self, path):
        with open(path, "w") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected metrics header: {header}")
        log = cls()
        for row in reader:
            log.append(MetricsRow(
                iteration=int(row[0]),
                train_loss=float(row[1]),
                reward=int(row[2]) if row[2] else None,
                train_acc=float(row[3]) if row[3] else None,
                val_loss=float(row[4]) if row[4] else None,
                val_acc=float(row[5]) if row[5] else None,
                alpha_s=float(row[6]) if row[6] else None,
                batch_boundary=bool(int(row[7])),
            ))
        return log

    def final(self):
        return self.rows[-1] if self.rows else None


@dataclass
class SynapseAgentField:
    """Per-synapse history as parallel index arrays, canonical synapse order.

    At t=0 every synapse starts at (NULL, NULL, NEG, NEG): no action taken
    yet and no improvement observed.
    """

    a1: np.ndarray
    a2: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    @classmethod
    def initial(cls, n):
        return cls(
            a1=np.full(n, int(ActionSign.NULL), dtype=np.int64),
            a2=np.full(n, int(ActionSign.NULL), dtype=np.int64),
            r1=np.full(n, int(RewardSign.NEG), dtype=np.int64),
            r2=np.full(n, int(RewardSign.NEG), dtype=np.int64),
        )

    def states(self):
        return encode_states(self.a1, self.a2, self.r1, self.r2)

    def shift(self, actions, reward):
        self.a2 = self.a1
        self.a1 = actions
        self.r2 = self.r1
        self.r1 = np.full(len(actions), int(reward), dtype=np.int64)


def apply_alpha_s_schedule(cfg, iteration):
    """Piecewise-constant step size: last schedule entry at or before `iteration`."""
    current = cfg.alpha_s
    for entry in cfg.alpha_s_schedule or []:
        if entry["at_iteration"] <= iteration:
            current = entry["new_alpha_s"]
    return current


def reselect_minibatch(data, size, rng):
    """Uniform sample without replacement, as a new Dataset view."""
    if size > data.n:
        raise ConfigError(f"minibatch size {size} exceeds dataset size {data.n}")
    idx = rng.choice(data.n, size=size, replace=False)
    return data.subset(idx)


def _check_finite(net, value, iteration):
    if np.isfinite(value):
        return
    layer_index = None
    for k, w in enumerate(net.weights):
        if not np.all(np.isfinite(w)):
            layer_index = k
            break
    raise DivergenceError(
        f"non-finite loss at iteration {iteration}"
        + (f" (first non-finite layer: {layer_index})" if layer_index is not None else ""),
        iteration=iteration,
        layer_index=layer_index,
    )


def train(net, q, data, val, cfg):
    """Run the synaptic training loop for cfg.iterations iterations.

    Per iteration: every synapse selects an action from its history via the
    shared epsilon-greedy Q-policy and applies it; the loss on the current
    (mini)batch yields one global reward sign; histories shift; and if
    cfg.train_policy, every synapse's completed transition feeds a TD update
    (sequential, canonical synapse order; the first iteration has no complete
    transition and performs no update). Returns (q, net, MetricsLog); both q
    and net are mutated in place. With train_policy=False the Q-table is
    never touched.
    """
    cfg.validate(dataset_n=data.n)
    rng = np.random.default_rng(cfg.seed)
    n_syn = net.synapse_count
    agents = SynapseAgentField.initial(n_syn)
    log = MetricsLog()

    if cfg.minibatch is not None:
        batch = reselect_minibatch(data, cfg.minibatch["size"], rng)
    else:
        batch = data
    old_loss = mlp_mod.loss(net, batch)
    _check_finite(net, old_loss, 0)

    qv = q.values
    alpha_q = q.alpha_q
    gamma = q.gamma
    prev_alpha_s = apply_alpha_s_schedule(cfg, 1)

    for t in range(1, cfg.iterations + 1):
        alpha_s = apply_alpha_s_schedule(cfg, t)
        schedule_boundary = alpha_s != prev_alpha_s
        prev_alpha_s = alpha_s

        batch_boundary = False
        if cfg.minibatch is not None and t > 1 and (t - 1) % cfg.minibatch["reselect_every"] == 0:
            batch = reselect_minibatch(data, cfg.minibatch["size"], rng)
            # re-base so the first reward on the new batch reflects the
            # parameter change, not the data change
            old_loss = mlp_mod.loss(net, batch)
            batch_boundary = True

        states_pre = agents.states()
        actions = select_actions(q, states_pre, cfg.epsilon, rng)

        flat = net.get_flat_weights()
        flat += (actions - 1) * alpha_s
        net.set_flat_weights(flat)

        new_loss = mlp_mod.loss(net, batch)
        _check_finite(net, new_loss, t)
        reward = reward_from_losses(old_loss, new_loss)
        old_loss = new_loss

        agents.shift(actions, reward)

        if cfg.train_policy and t > 1:
            states_post = agents.states()
            r = float(reward.sign)
            sp = states_pre.tolist()
            ac = actions.tolist()
            sn = states_post.tolist()
            for i in range(n_syn):
                s, a, s2 = sp[i], ac[i], sn[i]
                qsa = qv[s, a]
                best_next = max(qv[s2, 0], qv[s2, 1], qv[s2, 2])
                qv[s, a] = qsa + alpha_q * (r + gamma * best_next - qsa)

        periodic = t % cfg.metrics_every == 0 or t == cfg.iterations
        if periodic or batch_boundary or schedule_boundary:
            train_acc = val_loss = val_acc = None
            if periodic:
                train_acc = mlp_mod.accuracy(net, batch)
                if val is not None:
                    val_loss = mlp_mod.loss(net, val)
                    val_acc = mlp_mod.accuracy(net, val)
            log.append(MetricsRow(
                iteration=t,
                train_loss=new_loss,
                reward=reward.sign,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
                alpha_s=alpha_s,
                batch_boundary=batch_boundary,
            ))

    return q, net, log
