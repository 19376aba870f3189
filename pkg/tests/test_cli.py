import json
import math

import numpy as np
import pytest

from synrl.cli import EXIT_DIVERGENCE, EXIT_OK, EXIT_VALIDATION, main
from synrl.data import write_idx_pair
from synrl.runner import compare_summaries


def boundary_manifest(tmp_path, experiment_id="bnd", repeats=1, train_policy=True,
                      policy="fresh", iterations=120, seed=5):
    manifest = {
        "schema_version": 1,
        "experiment_id": experiment_id,
        "task": "boundary",
        "net": {"hidden_units": [4], "activation": "tanh", "loss": "mean_squared_euclidean",
                "init": {"kind": "uniform", "low": -0.1, "high": 0.1}},
        "dataset": {"hidden_units": 4, "n_points": 80},
        "trainer": {"iterations": iterations, "epsilon": 0.25, "alpha_s": 0.001,
                    "alpha_q": 0.01, "gamma": 0.9, "train_policy": train_policy,
                    "metrics_every": 20},
        "policy": policy,
        "repeats": repeats,
        "seed": seed,
        "out": str(tmp_path / "runs"),
    }
    path = tmp_path / f"{experiment_id}.json"
    path.write_text(json.dumps(manifest))
    return path


def ocr_manifest(tmp_path, source, experiment_id="ocr", gd=True):
    manifest = {
        "schema_version": 1,
        "experiment_id": experiment_id,
        "task": "ocr",
        "net": {"hidden_units": [], "activation": "relu", "loss": "softmax_cross_entropy",
                "init": {"kind": "uniform", "low": -0.1, "high": 0.1}},
        "dataset": {"source_path": str(source), "split_fraction": 0.75, "seed": 0},
        "repeats": 1,
        "seed": 3,
        "out": str(tmp_path / "runs"),
    }
    if gd:
        manifest["gd"] = {"learning_rate": 0.1, "epochs": 5, "metrics_every": 1}
    else:
        manifest["trainer"] = {"iterations": 50, "epsilon": 0.1, "alpha_s": 0.0001,
                               "alpha_q": 0.01, "gamma": 0.9, "train_policy": False,
                               "metrics_every": 10, "minibatch": {"size": 20, "reselect_every": 25}}
    path = tmp_path / f"{experiment_id}.json"
    path.write_text(json.dumps(manifest))
    return path


class TestTrainPolicyCommand:
    def test_artifacts_written(self, tmp_path):
        mpath = boundary_manifest(tmp_path)
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_OK
        run_dir = tmp_path / "runs" / "bnd"
        assert (run_dir / "summary.json").exists()
        assert (run_dir / "manifest.json").exists()
        for name in ("net.json", "policy.json", "metrics.csv", "target_net.json", "run.json"):
            assert (run_dir / "0" / name).exists()
        summary = json.loads((run_dir / "summary.json").read_text())
        assert summary["manifest_sha256"]
        assert "final_train_acc" in summary["aggregate"]

    def test_repeats_and_aggregates(self, tmp_path):
        mpath = boundary_manifest(tmp_path, experiment_id="rep", repeats=3)
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_OK
        summary = json.loads((tmp_path / "runs" / "rep" / "summary.json").read_text())
        assert len(summary["repeats"]) == 3
        seeds = [r["seed"] for r in summary["repeats"]]
        assert seeds == [5, 6, 7]  # base seed + repeat index
        accs = [r["final_train_acc"] for r in summary["repeats"]]
        agg = summary["aggregate"]["final_train_acc"]
        assert agg["mean"] == pytest.approx(sum(accs) / 3, rel=1e-12)
        mean = sum(accs) / 3
        stdev = math.sqrt(sum((a - mean) ** 2 for a in accs) / 2)
        assert agg["stdev"] == pytest.approx(stdev, rel=1e-12)
        assert agg["min"] == min(accs) and agg["max"] == max(accs)

    def test_no_clobber(self, tmp_path):
        mpath = boundary_manifest(tmp_path, experiment_id="clob")
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_OK
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_VALIDATION
        assert main(["train-policy", "--manifest", str(mpath), "--force"]) == EXIT_OK

    def test_same_seed_reproduces_summary(self, tmp_path):
        m1 = boundary_manifest(tmp_path, experiment_id="det1")
        assert main(["train-policy", "--manifest", str(m1)]) == EXIT_OK
        s1 = json.loads((tmp_path / "runs" / "det1" / "summary.json").read_text())
        c1 = (tmp_path / "runs" / "det1" / "0" / "metrics.csv").read_bytes()
        assert main(["train-policy", "--manifest", str(m1), "--force"]) == EXIT_OK
        s2 = json.loads((tmp_path / "runs" / "det1" / "summary.json").read_text())
        c2 = (tmp_path / "runs" / "det1" / "0" / "metrics.csv").read_bytes()
        assert c1 == c2
        assert s1["aggregate"] == s2["aggregate"]

    def test_requires_train_policy_flag(self, tmp_path):
        mpath = boundary_manifest(tmp_path, experiment_id="nopol", train_policy=False)
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_VALIDATION


class TestApplyPolicyCommand:
    def trained_policy(self, tmp_path):
        mpath = boundary_manifest(tmp_path, experiment_id="src")
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_OK
        return tmp_path / "runs" / "src" / "0" / "policy.json"

    def test_policy_file_unchanged(self, tmp_path):
        ppath = self.trained_policy(tmp_path)
        before = ppath.read_bytes()
        mpath = boundary_manifest(tmp_path, experiment_id="apply", train_policy=False,
                                  policy={"path": str(ppath)}, seed=99)
        assert main(["apply-policy", "--manifest", str(mpath)]) == EXIT_OK
        assert ppath.read_bytes() == before
        run_dir = tmp_path / "runs" / "apply" / "0"
        assert (run_dir / "metrics.csv").exists()
        assert not (run_dir / "policy.json").exists()

    def test_encoding_mismatch_rejected(self, tmp_path):
        ppath = self.trained_policy(tmp_path)
        d = json.loads(ppath.read_text())
        d["encoding_id"] = "r1r2a1a2-v0"
        bad = tmp_path / "bad_policy.json"
        bad.write_text(json.dumps(d))
        mpath = boundary_manifest(tmp_path, experiment_id="badpol", train_policy=False,
                                  policy={"path": str(bad)})
        assert main(["apply-policy", "--manifest", str(mpath)]) == EXIT_VALIDATION
        assert not (tmp_path / "runs" / "badpol").exists()  # no partial outputs

    def test_corrupted_policy_rejected_cleanly(self, tmp_path):
        bad = tmp_path / "corrupt.json"
        bad.write_text("{broken")
        mpath = boundary_manifest(tmp_path, experiment_id="corr", train_policy=False,
                                  policy={"path": str(bad)})
        assert main(["apply-policy", "--manifest", str(mpath)]) == EXIT_VALIDATION
        assert not (tmp_path / "runs" / "corr").exists()

    def test_policy_override_flag(self, tmp_path):
        ppath = self.trained_policy(tmp_path)
        mpath = boundary_manifest(tmp_path, experiment_id="ovr", train_policy=False)
        assert main(["apply-policy", "--manifest", str(mpath), "--policy", str(ppath)]) == EXIT_OK


class TestGdCommand:
    def test_ocr_arm_runs(self, tmp_path):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 10, size=120, dtype=np.uint8)
        # separable synthetic images: class k lights pixel k
        pixels = np.zeros((120, 784), dtype=np.uint8)
        pixels[np.arange(120), labels] = 255
        source = tmp_path / "idx"
        write_idx_pair(source, pixels, labels)
        mpath = ocr_manifest(tmp_path, source, experiment_id="gdocr")
        assert main(["gd", "--manifest", str(mpath)]) == EXIT_OK
        summary = json.loads((tmp_path / "runs" / "gdocr" / "summary.json").read_text())
        assert "final_val_acc" in summary["aggregate"]

    def test_missing_dataset_rejected(self, tmp_path):
        mpath = ocr_manifest(tmp_path, tmp_path / "nope", experiment_id="gone")
        assert main(["gd", "--manifest", str(mpath)]) == EXIT_VALIDATION


class TestOtherCommands:
    def test_gen_boundary(self, tmp_path):
        out = tmp_path / "task"
        assert main(["gen-boundary", "--hidden-units", "6", "--n-points", "50",
                     "--seed", "4", "--out", str(out)]) == EXIT_OK
        assert (out / "target_net.json").exists()
        lines = (out / "data.csv").read_text().splitlines()
        assert lines[0] == "x1,x2,label"
        assert len(lines) == 51

    def test_eval(self, tmp_path, capsys):
        mpath = boundary_manifest(tmp_path, experiment_id="ev")
        assert main(["train-policy", "--manifest", str(mpath)]) == EXIT_OK
        net = tmp_path / "runs" / "ev" / "0" / "net.json"
        capsys.readouterr()  # drop the train-policy output
        assert main(["eval", "--net", str(net), "--manifest", str(mpath)]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["train_acc"] <= 1.0

    def test_compare_synthetic(self):
        def summary(mean, stdev):
            return {"aggregate": {"final_val_acc": {"mean": mean, "stdev": stdev, "min": mean, "max": mean}}}
        result = compare_summaries(summary(0.5, 0.01), summary(0.4, 0.01))
        assert result["delta"] == pytest.approx(0.10, rel=1e-12)
        assert result["sigma"] == pytest.approx(math.sqrt(2) * 0.01, rel=1e-12)

    def test_compare_identical(self):
        s = {"aggregate": {"final_val_acc": {"mean": 0.7, "stdev": 0.02, "min": 0.7, "max": 0.7}}}
        result = compare_summaries(s, s)
        assert result["delta"] == 0.0
        assert result["sigma"] == pytest.approx(math.sqrt(2) * 0.02, rel=1e-12)

    def test_compare_command(self, tmp_path, capsys):
        for name, mean in (("a", 0.5), ("b", 0.4)):
            (tmp_path / f"{name}.json").write_text(json.dumps(
                {"aggregate": {"final_val_acc": {"mean": mean, "stdev": 0.01, "min": mean, "max": mean}}}))
        assert main(["compare", str(tmp_path / "a.json"), str(tmp_path / "b.json")]) == EXIT_OK
        assert "+0.1000 ± 0.0141" in capsys.readouterr().out

    def test_bad_manifest_exit_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        assert main(["train-policy", "--manifest", str(path)]) == EXIT_VALIDATION
