"""Command-line entry points.

Subcommands: train-policy, apply-policy, gd, gen-boundary, eval, compare.
Exit codes: 0 success, 2 validation error, 3 runtime divergence.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mlp as mlp_mod
from .data import BoundaryTaskSpec, generate_boundary_task
from .errors import ConfigError, DivergenceError, SynrlError
from .mlp import Mlp
from .runner import ExperimentManifest, compare_summaries, run_gd, run_synaptic

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


def _load_manifest(args):
    # apply overrides before validation so e.g. --policy can replace a
    # placeholder path in the manifest
    m = ExperimentManifest.load(args.manifest, validate=False)
    if getattr(args, "policy", None) is not None:
        m.policy = {"path": args.policy}
        m.raw["policy"] = {"path": args.policy}
    if args.seed is not None:
        m.seed = args.seed
        m.raw["seed"] = args.seed
    if args.out is not None:
        m.out = args.out
        m.raw["out"] = args.out
    if args.repeats is not None:
        m.repeats = args.repeats
        m.raw["repeats"] = args.repeats
    m.validate()
    return m


def _add_manifest_args(p):
    p.add_argument("--manifest", required=True, help="path to the experiment manifest (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the manifest base seed")
    p.add_argument("--out", default=None, help="override the manifest output directory")
    p.add_argument("--repeats", type=int, default=None, help="override the repeat count")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (1 = reproducibility mode; currently always sequential)")
    p.add_argument("--force", action="store_true", help="overwrite an existing output directory")


def cmd_train_policy(args):
    summary = run_synaptic(_load_manifest(args), train_policy=True, force=args.force)
    print(json.dumps(summary["aggregate"], indent=2))


def cmd_apply_policy(args):
    summary = run_synaptic(_load_manifest(args), train_policy=False, force=args.force)
    print(json.dumps(summary["aggregate"], indent=2))


def cmd_gd(args):
    summary = run_gd(_load_manifest(args), force=args.force)
    print(json.dumps(summary["aggregate"], indent=2))


def cmd_gen_boundary(args):
    spec = BoundaryTaskSpec(hidden_units=args.hidden_units, n_points=args.n_points, seed=args.seed)
    target, data = generate_boundary_task(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target.save(out / "target_net.json")
    with open(out / "data.csv", "w") as f:
        f.write("x1,x2,label\n")
        for (x1, x2), y in zip(data.X, data.Y[:, 0]):
            f.write(f"{x1!r},{x2!r},{int(y)}\n")
    print(f"wrote {data.n} points to {out}")


def cmd_eval(args):
    net = Mlp.load(args.net)
    m = ExperimentManifest.load(args.manifest)
    from .runner import build_dataset
    train_set, val_set, _ = build_dataset(m, m.seed)
    report = {
        "train_loss": mlp_mod.loss(net, train_set),
        "train_acc": mlp_mod.accuracy(net, train_set),
    }
    if val_set is not None:
        report["val_loss"] = mlp_mod.loss(net, val_set)
        report["val_acc"] = mlp_mod.accuracy(net, val_set)
    print(json.dumps(report, indent=2))


def cmd_compare(args):
    with open(args.summary_a) as f:
        a = json.load(f)
    with open(args.summary_b) as f:
        b = json.load(f)
    result = compare_summaries(a, b)
    print(result["formatted"])


def build_parser():
    parser = argparse.ArgumentParser(prog="synrl", description="Synaptic RL and gradient-descent MLP training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-policy", help="train network and Q-policy simultaneously")
    _add_manifest_args(p)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("apply-policy", help="train a network with a frozen Q-policy")
    _add_manifest_args(p)
    p.add_argument("--policy", default=None, help="override the manifest policy file path")
    p.set_defaults(func=cmd_apply_policy)

    p = sub.add_parser("gd", help="train with batch gradient descent")
    _add_manifest_args(p)
    p.set_defaults(func=cmd_gd)

    p = sub.add_parser("gen-boundary", help="generate a decision-boundary task to disk")
    p.add_argument("--hidden-units", type=int, default=100)
    p.add_argument("--n-points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_boundary)

    p = sub.add_parser("eval", help="evaluate a saved net on a manifest's dataset")
    p.add_argument("--net", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="difference between two run summaries")
    p.add_argument("summary_a")
    p.add_argument("summary_b")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, SynrlError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
