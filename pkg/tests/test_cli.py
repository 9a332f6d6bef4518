from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from metameta.cli import main
from metameta.cli.checkpoint import load_checkpoint, save_checkpoint
from metameta.cli.runlog import read_run_log
from metameta.config import SEED_ENV_VAR
from metameta.errors import CheckpointError
from metameta.logger import get_logger
from metameta.problems import load_feature_bank
from tests.fakes import TINY_SPEC

TINY_CONFIG = {
    "data": {
        "kind": "modal",
        "spec": {
            "feature_dim": 4,
            "modes": 2,
            "noise_sigma": 0.3,
            "classes_per_mode": 8,
            "meta_test_fraction": 0.5,
            "examples_per_class": 10,
        },
    },
    "episode": {"n_neg_train": 4, "n_pos_test": 4, "n_neg_test": 4, "n_neg_classes": 3},
    "learner": {"hidden_dims": [4], "inner_steps": 1, "inner_lr": 0.1},
    "meta": {"k": 2, "batch_size": 2, "meta_iterations": 2, "meta_lr": 0.01, "log_every": 1},
    "clustering": {"corpus_size": 20, "restarts": 2, "max_iters": 10, "samples_per_class": 2},
    "aggregator": {"hidden_dims": [4], "dropout_input": 0.9, "dropout_hidden": 0.9},
    "eval": {"n_problems": 4, "fiveway_episodes": 4},
    "seed": 3,
}


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    # no stray .env or seed override from the developer's shell
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    yield
    # main() attaches a handler bound to this test's captured stderr
    logger = get_logger()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)


def write_config(tmp_path: Path, name: str = "cfg.json", **overrides) -> str:
    cfg = json.loads(json.dumps(TINY_CONFIG))
    for key, value in overrides.items():
        cfg[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def train(cfg: str, method: str, out: Path, *extra: str) -> int:
    return main(["train", "--config", cfg, "--method", method, "--out", str(out), *extra])


def run_eval(cfg: str, checkpoints, methods: str, out: Path, *extra: str) -> int:
    argv = ["eval", "--config", cfg, "--methods", methods, "--out", str(out), *extra]
    for c in checkpoints:
        argv += ["--checkpoint", str(c)]
    return main(argv)


def read_rows(path: Path):
    with path.open(encoding="utf-8") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# Usage errors
# ---------------------------------------------------------------------------


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert train(str(missing), "single-maml", tmp_path / "m.json") == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_names_the_field(tmp_path, capsys):
    cfg = write_config(tmp_path, meta={"k": 0})
    assert train(cfg, "single-maml", tmp_path / "m.json") == 2
    assert "meta.k" in capsys.readouterr().err


def test_unknown_config_key_is_rejected(tmp_path):
    cfg = write_config(tmp_path, surprise=1)
    assert train(cfg, "single-maml", tmp_path / "m.json") == 2


def test_bad_seed_override_is_a_usage_error(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "-4")
    assert train(write_config(tmp_path), "single-maml", tmp_path / "m.json") == 2


# ---------------------------------------------------------------------------
# make-data
# ---------------------------------------------------------------------------


def test_make_data_writes_loadable_banks(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(TINY_SPEC.model_dump_json(), encoding="utf-8")
    assert main(["make-data", "--spec", str(spec), "--out", str(tmp_path / "a")]) == 0
    assert main(["make-data", "--spec", str(spec), "--out", str(tmp_path / "b")]) == 0

    train_bank = load_feature_bank(tmp_path / "a.train.mmfb")
    test_bank = load_feature_bank(tmp_path / "a.test.mmfb")
    assert (train_bank.num_classes, test_bank.num_classes) == (8, 8)
    modes = json.loads((tmp_path / "a.modes.json").read_text(encoding="utf-8"))
    assert len(modes) == 16 and set(modes.values()) == {0, 1}

    for suffix in ("train.mmfb", "test.mmfb", "modes.json"):
        a = (tmp_path / f"a.{suffix}").read_bytes()
        assert a == (tmp_path / f"b.{suffix}").read_bytes()


def test_make_data_rejects_bad_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"feature_dim": 2, "modes": 3}), encoding="utf-8")
    assert main(["make-data", "--spec", str(spec), "--out", str(tmp_path / "x")]) == 2


def test_file_backed_config_trains_from_mmfb(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(TINY_SPEC.model_dump_json(), encoding="utf-8")
    main(["make-data", "--spec", str(spec), "--out", str(tmp_path / "bank")])
    data = {
        "kind": "mmfb",
        "path": str(tmp_path / "bank.train.mmfb"),
        "test_path": str(tmp_path / "bank.test.mmfb"),
    }
    cfg = write_config(tmp_path, data=data)
    assert train(cfg, "single-maml", tmp_path / "m.json") == 0
    assert run_eval(cfg, [tmp_path / "m.json"], "single_maml", tmp_path / "r.csv") == 0


# ---------------------------------------------------------------------------
# train / eval
# ---------------------------------------------------------------------------


def test_single_maml_checkpoint_and_run_log(tmp_path):
    cfg = write_config(tmp_path)
    assert train(cfg, "single-maml", tmp_path / "a.json") == 0
    assert train(cfg, "single-maml", tmp_path / "b.json") == 0

    ckpt = load_checkpoint(tmp_path / "a.json")
    assert ckpt.k == 1 and ckpt.agg is None and ckpt.centroids is None
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    log = read_run_log(tmp_path / "a.json.runlog.jsonl")
    assert [(r["phase"], r["iteration"]) for r in log] == [("learner0", 0), ("learner0", 1)]
    assert all(np.isfinite(r["meta_loss"]) for r in log)


def test_explicit_run_log_path(tmp_path):
    log = tmp_path / "logs" / "curve.jsonl"
    assert train(write_config(tmp_path), "single-maml", tmp_path / "m.json", "--log", str(log)) == 0
    assert len(read_run_log(log)) == 2


def test_three_step_train_and_eval(tmp_path):
    cfg = write_config(tmp_path)
    ckpt_path = tmp_path / "three.json"
    assert train(cfg, "three-step", ckpt_path) == 0

    ckpt = load_checkpoint(ckpt_path)
    assert ckpt.k == 2 and ckpt.centroids is not None and ckpt.agg is not None
    phases = {r["phase"] for r in read_run_log(tmp_path / "three.json.runlog.jsonl")}
    assert phases == {"learner0", "learner1", "aggregator"}

    methods = "meta_meta,nearest_cluster,hard_bagging,soft_bagging"
    assert run_eval(cfg, [ckpt_path], methods, tmp_path / "r1.csv") == 0
    assert run_eval(cfg, [ckpt_path], methods, tmp_path / "r2.csv", "--threads", "3") == 0

    first, second = read_rows(tmp_path / "r1.csv"), read_rows(tmp_path / "r2.csv")
    assert [r["method"] for r in first] == methods.split(",")
    assert all(r["k"] == "2" and r["n_problems"] == "4" for r in first)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]
    assert strip(first) == strip(second)


def test_ensemble_serves_whole_data_aggregator(tmp_path):
    cfg = write_config(tmp_path)
    assert train(cfg, "ensemble", tmp_path / "ens.json") == 0
    out = tmp_path / "r.md"
    assert run_eval(cfg, [tmp_path / "ens.json"], "mmc_whole_data,soft_bagging", out) == 0
    table = out.read_text(encoding="utf-8")
    assert table.startswith("| k | mmc_whole_data | soft_bagging |")
    # meta_meta needs a clustered or end-to-end checkpoint
    assert run_eval(cfg, [tmp_path / "ens.json"], "meta_meta", tmp_path / "x.csv") == 2


def test_methods_are_served_from_several_checkpoints(tmp_path):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "one.json")
    train(cfg, "three-step", tmp_path / "three.json")
    out = tmp_path / "r.csv"
    ckpts = [tmp_path / "one.json", tmp_path / "three.json"]
    assert run_eval(cfg, ckpts, "single_maml,meta_meta", out) == 0
    assert [(r["method"], r["k"]) for r in read_rows(out)] == [
        ("single_maml", "1"),
        ("meta_meta", "2"),
    ]


def test_fiveway_eval(tmp_path):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "m.json")
    out = tmp_path / "five.csv"
    assert run_eval(cfg, [tmp_path / "m.json"], "single_maml", out, "--fiveway") == 0
    row = read_rows(out)[0]
    assert row["n_problems"] == "4"
    assert 0.0 <= float(row["mean_acc"]) <= 100.0


def test_nearest_cluster_on_single_maml_checkpoint_is_a_usage_error(tmp_path, capsys):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "m.json")
    assert run_eval(cfg, [tmp_path / "m.json"], "nearest_cluster", tmp_path / "r.csv") == 2
    assert "centroids" in capsys.readouterr().err
    assert not (tmp_path / "r.csv").exists()


def test_unknown_method_is_a_usage_error(tmp_path):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "m.json")
    assert run_eval(cfg, [tmp_path / "m.json"], "best_method", tmp_path / "r.csv") == 2


def test_feature_dim_mismatch_is_rejected_before_sampling(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "m.json")

    import metameta.cli.commands as commands

    def no_sampling(*a, **kw):
        raise AssertionError("evaluation started")

    monkeypatch.setattr(commands, "evaluate", no_sampling)
    wide = dict(TINY_CONFIG["data"], spec=dict(TINY_CONFIG["data"]["spec"], feature_dim=6))
    wide_cfg = write_config(tmp_path, "wide.json", data=wide)
    assert run_eval(wide_cfg, [tmp_path / "m.json"], "single_maml", tmp_path / "r.csv") == 2


def test_seed_override_from_environment(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "base.json")
    monkeypatch.setenv(SEED_ENV_VAR, "7")
    assert train(cfg, "single-maml", tmp_path / "env.json") == 0

    doc = json.loads((tmp_path / "env.json").read_text(encoding="utf-8"))
    assert doc["seed"] == {"value": 7, "source": "env"}
    base = json.loads((tmp_path / "base.json").read_text(encoding="utf-8"))
    assert base["seed"] == {"value": 3, "source": "config"}
    assert doc["learners"] != base["learners"]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_roundtrip_is_byte_exact(tmp_path):
    cfg = write_config(tmp_path)
    train(cfg, "three-step", tmp_path / "a.json")
    save_checkpoint(load_checkpoint(tmp_path / "a.json"), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    run_eval(cfg, [tmp_path / "a.json"], "meta_meta", tmp_path / "ra.csv")
    run_eval(cfg, [tmp_path / "b.json"], "meta_meta", tmp_path / "rb.csv")
    ra, rb = read_rows(tmp_path / "ra.csv")[0], read_rows(tmp_path / "rb.csv")[0]
    assert (ra["mean_acc"], ra["ci95"]) == (rb["mean_acc"], rb["ci95"])


@pytest.mark.parametrize("version, readable", [("2.0", False), ("1.7", True), ("one", False)])
def test_format_version_gate(tmp_path, version, readable):
    cfg = write_config(tmp_path)
    train(cfg, "single-maml", tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text(encoding="utf-8"))
    doc["format_version"] = version
    (tmp_path / "m.json").write_text(json.dumps(doc), encoding="utf-8")

    if readable:
        assert load_checkpoint(tmp_path / "m.json").k == 1
    else:
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "m.json")
        assert run_eval(cfg, [tmp_path / "m.json"], "single_maml", tmp_path / "r.csv") == 1


def test_truncated_checkpoint_is_a_runtime_error(tmp_path):
    cfg = write_config(tmp_path)
    (tmp_path / "m.json").write_text('{"format_version": "1.0", ', encoding="utf-8")
    assert run_eval(cfg, [tmp_path / "m.json"], "single_maml", tmp_path / "r.csv") == 1


# ---------------------------------------------------------------------------
# Warm start
# ---------------------------------------------------------------------------


def test_e2e_warm_start_from_three_step(tmp_path):
    cfg = write_config(tmp_path)
    train(cfg, "three-step", tmp_path / "three.json")
    warm_start = ("--warm-start", str(tmp_path / "three.json"))
    assert train(cfg, "e2e", tmp_path / "e2e.json", *warm_start) == 0

    warm = load_checkpoint(tmp_path / "three.json")
    tuned = load_checkpoint(tmp_path / "e2e.json")
    assert tuned.k == 2
    assert np.array_equal(tuned.centroids.mu, warm.centroids.mu)
    assert not tuned.agg.params.equals(warm.agg.params)
    methods = "meta_meta,nearest_cluster"
    assert run_eval(cfg, [tmp_path / "e2e.json"], methods, tmp_path / "r.csv") == 0


def test_warm_start_requires_e2e(tmp_path):
    cfg = write_config(tmp_path)
    train(cfg, "three-step", tmp_path / "three.json")
    argv = ("--warm-start", str(tmp_path / "three.json"))
    assert train(cfg, "three-step", tmp_path / "x.json", *argv) == 2


def test_e2e_from_scratch(tmp_path):
    cfg = write_config(tmp_path)
    assert train(cfg, "e2e", tmp_path / "e2e.json") == 0
    ckpt = load_checkpoint(tmp_path / "e2e.json")
    assert ckpt.centroids is None and ckpt.agg is not None
    assert [r["phase"] for r in read_run_log(tmp_path / "e2e.json.runlog.jsonl")] == ["e2e"] * 2
