"""Experiment orchestration: manifest parsing, repeat execution, summaries.

A manifest is a small JSON document describing one experiment arm (task,
network shape, training configuration, dataset source, output layout).
Each repeat runs with seed = base seed + repeat index and writes its
artifacts under <out>/<experiment_id>/<repeat>/.
"""

import hashlib
import json
import shutil
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mlp as mlp_mod
from .data import BoundaryTaskSpec, ImageDatasetSpec, generate_boundary_task, load_image_dataset
from .errors import ConfigError
from .gd import GdConfig, train_gd
from .mlp import ActivationKind, InitScheme, LayerSpec, LossKind, init_weights
from .policy import QTable
from .trainer import TrainerConfig, train

SCHEMA_VERSION = 1


@dataclass
class ExperimentManifest:
    experiment_id: str
    task: str  # "boundary" | "ocr"
    net: dict
    dataset: dict
    trainer: dict = None
    gd: dict = None
    policy: object = "fresh"  # "fresh" | {"path": ...}
    repeats: int = 1
    seed: int = 0
    out: str = "runs"
    raw: dict = None

    @classmethod
    def load(cls, path, validate=True):
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"manifest is not valid JSON: {e}") from e
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported manifest schema_version: {d.get('schema_version')}")
        try:
            m = cls(
                experiment_id=d["experiment_id"],
                task=d["task"],
                net=d["net"],
                dataset=d["dataset"],
                trainer=d.get("trainer"),
                gd=d.get("gd"),
                policy=d.get("policy", "fresh"),
                repeats=int(d.get("repeats", 1)),
                seed=int(d.get("seed", 0)),
                out=d.get("out", "runs"),
                raw=d,
            )
        except KeyError as e:
            raise ConfigError(f"manifest missing required field: {e}") from e
        if validate:
            m.validate()
        return m

    def validate(self):
        if self.task not in ("boundary", "ocr"):
            raise ConfigError(f"unknown task kind: {self.task}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.experiment_id:
            raise ConfigError("experiment_id must be non-empty")
        if self.task == "ocr":
            src = self.dataset.get("source_path")
            if not src or not Path(src).exists():
                raise ConfigError(f"ocr dataset source does not exist: {src}")
        if isinstance(self.policy, dict):
            p = self.policy.get("path")
            if not p or not Path(p).exists():
                raise ConfigError(f"policy file does not exist: {p}")

    def sha256(self):
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()
        ).hexdigest()

    def trainer_config(self, repeat_seed):
        if self.trainer is None:
            raise ConfigError("manifest has no trainer section")
        d = dict(self.trainer)
        d.setdefault("seed", repeat_seed)
        return TrainerConfig(**d)

    def gd_config(self, repeat_seed):
        if self.gd is None:
            raise ConfigError("manifest has no gd section")
        d = dict(self.gd)
        d.setdefault("seed", repeat_seed)
        return GdConfig(**d)


def build_dataset(manifest, repeat_seed):
    """Returns (train, val, target_net_or_None) for the manifest's task."""
    d = manifest.dataset
    if manifest.task == "boundary":
        spec = BoundaryTaskSpec(
            hidden_units=d.get("hidden_units", 100),
            n_points=d.get("n_points", 2000),
            seed=d.get("seed", repeat_seed),
        )
        target, data = generate_boundary_task(spec)
        return data, None, target
    spec = ImageDatasetSpec(
        source_path=d["source_path"],
        image_side=d.get("image_side", 28),
        classes=d.get("classes", 10),
        split_fraction=d.get("split_fraction", 0.75),
        seed=d.get("seed", manifest.seed),
    )
    train_set, val_set = load_image_dataset(spec)
    return train_set, val_set, None


def build_net(manifest, input_dim, output_dim, repeat_seed):
    cfg = manifest.net
    hidden = cfg.get("hidden_units", [])
    activation = ActivationKind(cfg.get("activation", "tanh"))
    loss_kind = LossKind(cfg.get("loss", "mean_squared_euclidean"))
    init = cfg.get("init", {"kind": "uniform", "low": -0.1, "high": 0.1})
    dims = [input_dim] + list(hidden) + [output_dim]
    layers = []
    for k in range(len(dims) - 1):
        act = activation if k < len(dims) - 2 else ActivationKind.IDENTITY
        layers.append(LayerSpec(dims[k], dims[k + 1], act))
    scheme = InitScheme(init["kind"], init.get("low", 0.0), init.get("high", 0.0))
    return init_weights(layers, scheme, np.random.SeedSequence([repeat_seed & 0xFFFFFFFF, 1]), loss_kind)


def build_policy(manifest, trainer_cfg):
    if manifest.policy == "fresh":
        return QTable(gamma=trainer_cfg.gamma, alpha_q=trainer_cfg.alpha_q)
    return QTable.load(manifest.policy["path"])


def prepare_out_dir(manifest, force=False):
    out_dir = Path(manifest.out) / manifest.experiment_id
    if out_dir.exists():
        if not force:
            raise ConfigError(f"output directory exists (use --force to overwrite): {out_dir}")
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest.raw, f, indent=2)
    return out_dir


def _aggregate(values):
    return {
        "min": min(values),
        "max": max(values),
        "mean": statistics.fmean(values),
        "stdev": statistics.stdev(values) if len(values) > 1 else 0.0,
    }


def write_summary(manifest, out_dir, repeat_records):
    summary = {
        "experiment_id": manifest.experiment_id,
        "manifest_sha256": manifest.sha256(),
        "repeats": repeat_records,
        "aggregate": {},
    }
    for key in ("final_train_loss", "final_train_acc", "final_val_loss", "final_val_acc"):
        values = [r[key] for r in repeat_records if r.get(key) is not None]
        if values:
            summary["aggregate"][key] = _aggregate(values)
    with open(out_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    return summary


def _finals(log, net, train_set, val_set):
    final = log.final()
    rec = {
        "final_train_loss": final.train_loss if final else None,
        "final_train_acc": final.train_acc if final else None,
        "final_val_loss": final.val_loss if final else None,
        "final_val_acc": final.val_acc if final else None,
    }
    # fill periodic metrics if the last logged row happened to skip them
    if rec["final_train_acc"] is None:
        rec["final_train_acc"] = mlp_mod.accuracy(net, train_set)
    if val_set is not None and rec["final_val_acc"] is None:
        rec["final_val_loss"] = mlp_mod.loss(net, val_set)
        rec["final_val_acc"] = mlp_mod.accuracy(net, val_set)
    return rec


def run_synaptic(manifest, train_policy, force=False):
    """Execute a train-policy or apply-policy experiment over all repeats."""
    if manifest.trainer is None:
        raise ConfigError("synaptic run requires a trainer section in the manifest")
    if train_policy and not manifest.trainer.get("train_policy", False):
        raise ConfigError("train-policy command requires trainer.train_policy=true in the manifest")
    if not train_policy and manifest.policy == "fresh":
        raise ConfigError("apply-policy requires a policy file in the manifest")
    # fail on a bad policy file before any repeat executes
    if isinstance(manifest.policy, dict):
        QTable.load(manifest.policy["path"])

    out_dir = prepare_out_dir(manifest, force)
    records = []
    for repeat in range(manifest.repeats):
        repeat_seed = manifest.seed + repeat
        cfg = manifest.trainer_config(repeat_seed)
        if not train_policy:
            cfg.train_policy = False
        train_set, val_set, target = build_dataset(manifest, repeat_seed)
        net = build_net(manifest, train_set.X.shape[1], train_set.Y.shape[1], repeat_seed)
        q = build_policy(manifest, cfg)

        rdir = out_dir / str(repeat)
        rdir.mkdir()
        started = time.monotonic()
        q, net, log = train(net, q, train_set, val_set, cfg)
        elapsed = time.monotonic() - started

        net.save(rdir / "net.json")
        log.save_csv(rdir / "metrics.csv")
        if train_policy:
            q.save(rdir / "policy.json")
        if target is not None:
            target.save(rdir / "target_net.json")

        rec = {"repeat": repeat, "seed": repeat_seed, "wall_clock_s": elapsed,
               "manifest_sha256": manifest.sha256(), **_finals(log, net, train_set, val_set)}
        with open(rdir / "run.json", "w") as f:
            json.dump(rec, f, indent=2)
        records.append(rec)
    return write_summary(manifest, out_dir, records)


def run_gd(manifest, force=False):
    """Execute a gradient-descent experiment arm over all repeats."""
    if manifest.gd is None:
        raise ConfigError("gd run requires a gd section in the manifest")
    out_dir = prepare_out_dir(manifest, force)
    records = []
    for repeat in range(manifest.repeats):
        repeat_seed = manifest.seed + repeat
        cfg = manifest.gd_config(repeat_seed)
        cfg.validate()
        train_set, val_set, target = build_dataset(manifest, repeat_seed)
        net = build_net(manifest, train_set.X.shape[1], train_set.Y.shape[1], repeat_seed)

        rdir = out_dir / str(repeat)
        rdir.mkdir()
        started = time.monotonic()
        net, log = train_gd(net, train_set, val_set, cfg)
        elapsed = time.monotonic() - started

        net.save(rdir / "net.json")
        log.save_csv(rdir / "metrics.csv")
        if target is not None:
            target.save(rdir / "target_net.json")

        rec = {"repeat": repeat, "seed": repeat_seed, "wall_clock_s": elapsed,
               "manifest_sha256": manifest.sha256(), **_finals(log, net, train_set, val_set)}
        with open(rdir / "run.json", "w") as f:
            json.dump(rec, f, indent=2)
        records.append(rec)
    return write_summary(manifest, out_dir, records)


def compare_summaries(summary_a, summary_b, key="final_val_acc"):
    """Mean difference (a - b) with root-sum-square combined stdev."""
    def stats_for(s):
        agg = s.get("aggregate", {})
        if key in agg:
            return agg[key]
        if "final_train_acc" in agg:
            return agg["final_train_acc"]
        raise ConfigError(f"summary has no {key} aggregate")
    a, b = stats_for(summary_a), stats_for(summary_b)
    delta = a["mean"] - b["mean"]
    sigma = (a["stdev"] ** 2 + b["stdev"] ** 2) ** 0.5
    return {"delta": delta, "sigma": sigma,
            "a_mean": a["mean"], "b_mean": b["mean"],
            "formatted": f"{delta:+.4f} ± {sigma:.4f}"}
