import json

import numpy as np
import pytest

import handgen.train as train_mod
from handgen.checkpoint import CheckpointError, checkpoint_bytes, load_checkpoint
from handgen.config import McmcConfig, MemoryConfig, ModelConfig, TrainConfig
from handgen.data import generate_synthetic, split_dataset
from handgen.train import (
    TrainingAborted,
    evaluate,
    pretrain,
    sample_diverse,
    stage_one_from_checkpoint,
    stage_two_from_checkpoint,
    train_stage_one,
    train_stage_two,
)


def tiny_config(**over) -> TrainConfig:
    base = dict(
        lr=0.003,
        disc_lr=0.0003,
        epochs=2,
        batch_size=4,
        seed=3,
        model=ModelConfig(channels=16, heads=4, seq_len=8, ae_hidden=16,
                          disc_channels=8, r_hidden=16, header_hidden=8),
        memory=MemoryConfig(slots=8, proto_slots=4),
        mcmc=McmcConfig(dw=3),
    )
    base.update(over)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def dataset():
    return split_dataset(generate_synthetic(seed=11, n=8, T=8), (0.7, 0.1, 0.2), seed=0)


@pytest.fixture(scope="module")
def pipeline(dataset, tmp_path_factory):
    """One tiny end-to-end run shared by the checks below."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = tiny_config()
    ae = pretrain(cfg, dataset, root / "ae")
    s1 = train_stage_one(cfg, dataset, root / "s1", pretrain_ckpt=ae)
    s2 = train_stage_two(cfg, dataset, root / "s2", stage1_ckpt=s1)
    return root, cfg, ae, s1, s2


def read_log(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_pretrain_checkpoint_contents(pipeline):
    root, cfg, ae, _, _ = pipeline
    ckpt = load_checkpoint(ae)
    assert ckpt.names("ae.single.")
    assert ckpt.names("ae.two.")
    assert ckpt.config["lr"] == cfg.lr
    log = read_log(root / "ae" / "log.jsonl")
    assert len(log) == cfg.epochs


def test_stage1_checkpoint_contents(pipeline, dataset):
    root, cfg, _, s1, _ = pipeline
    ckpt = load_checkpoint(s1)
    for name in ("srm.left.slots", "srm.right.slots", "tmm.left.slots",
                 "tmm.right.slots", "srm.left.gamma", "tmm.right.gamma"):
        assert name in ckpt.tensors
    assert ckpt.names("stage1.")
    assert ckpt.names("disc.")
    assert ckpt.names("ae.")
    assert ckpt.split_hash == dataset.split_hash()
    # full config echoed
    assert ckpt.config["model"]["channels"] == 16
    assert ckpt.config["memory"]["gamma"] == 0.8


def test_stage1_epoch_log_entries(pipeline):
    root, cfg, _, _, _ = pipeline
    entries = read_log(root / "s1" / "log.jsonl")
    epoch_entries = [e for e in entries if "mean_rec" in e]
    step_entries = [e for e in entries if "step" in e]
    assert len(epoch_entries) == cfg.epochs
    assert all(np.isfinite(e["total"]) for e in step_entries)


def test_stage2_logs_chain_settings(pipeline):
    root, _, _, _, _ = pipeline
    entries = read_log(root / "s2" / "log.jsonl")
    assert entries[0]["chain_settings"] == {
        "steps": 6, "delta_prior": 0.4, "delta_posterior": 0.1,
    }
    assert any("mean_stage2_loss" in e for e in entries)


def test_stage2_checkpoint_contents(pipeline):
    _, _, _, _, s2 = pipeline
    ckpt = load_checkpoint(s2)
    assert "proto.slots" in ckpt.tensors
    assert "proto.gamma" in ckpt.tensors
    assert ckpt.names("stage2.r.")
    assert ckpt.names("stage2.header.")
    assert ckpt.names("ae.")


def test_stage2_requires_stage1(dataset, tmp_path):
    cfg = tiny_config()
    with pytest.raises(CheckpointError):
        train_stage_two(cfg, dataset, tmp_path / "out", stage1_ckpt=tmp_path / "missing")


def test_checkpoint_reconstruction_predicts(pipeline, dataset):
    _, _, _, s1, s2 = pipeline
    _, model, disc, single, phi = stage_one_from_checkpoint(load_checkpoint(s1))
    record = dataset.records[0]
    pred = model.predict(record.body)
    assert pred.frames.shape == (8, 30, 3)
    cfg2, gen, header, bank, phi2 = stage_two_from_checkpoint(load_checkpoint(s2))
    assert bank.frozen
    assert bank.slots.shape == (4, 16)


def test_determinism_bit_identical_runs(dataset, tmp_path):
    cfg = tiny_config(epochs=1)
    a = train_stage_one(cfg, dataset, tmp_path / "a")
    b = train_stage_one(cfg, dataset, tmp_path / "b")
    assert checkpoint_bytes(a) == checkpoint_bytes(b)
    assert (tmp_path / "a" / "log.jsonl").read_bytes() == (tmp_path / "b" / "log.jsonl").read_bytes()


def test_max_steps_caps_training(dataset, tmp_path):
    cfg = tiny_config(epochs=50, max_steps=3)
    out = train_stage_one(cfg, dataset, tmp_path / "capped")
    ckpt = load_checkpoint(out)
    assert ckpt.step == 3


def test_nan_loss_aborts_with_last_good(dataset, tmp_path, monkeypatch):
    cfg = tiny_config(epochs=3)
    calls = {"n": 0}
    real = train_mod.loss_rec

    def poisoned(hands, hands_hat):
        calls["n"] += 1
        out = real(hands, hands_hat)
        if calls["n"] >= 3:
            out.data = np.asarray(np.nan)
        return out

    monkeypatch.setattr(train_mod, "loss_rec", poisoned)
    with pytest.raises(TrainingAborted, match="last good"):
        train_stage_one(cfg, dataset, tmp_path / "aborted")
    ckpt = load_checkpoint(tmp_path / "aborted")  # last-good checkpoint exists
    assert ckpt.step < 6
    for _, values in ckpt.tensors.items():
        assert np.all(np.isfinite(values))


def test_evaluate_report_schema_and_determinism(pipeline, dataset):
    _, _, _, s1, s2 = pipeline
    r1 = evaluate(s1, dataset, "train", ckpt2_path=s2, seed=5, k=3, pairs=20)
    r2 = evaluate(s1, dataset, "train", ckpt2_path=s2, seed=5, k=3, pairs=20)
    assert r1.to_json() == r2.to_json()
    doc = json.loads(r1.to_json())
    assert set(doc) == {"l2", "fhd", "mpjre_deg", "diversity"}
    assert doc["l2"] >= 0 and doc["fhd"] >= 0 and doc["mpjre_deg"] >= 0
    assert doc["diversity"]["mean"] >= 0


def test_evaluate_without_stage2_omits_diversity(pipeline, dataset):
    _, _, _, s1, _ = pipeline
    doc = json.loads(evaluate(s1, dataset, "train").to_json())
    assert "diversity" not in doc


def test_evaluate_empty_split_rejected(pipeline):
    _, _, _, s1, _ = pipeline
    empty = generate_synthetic(seed=1, n=2, T=8)
    empty = split_dataset(empty, (0.5, 0.25, 0.25), seed=0)
    # n=2: train=1, val=0 (round 0.5), test=... guard against accidental fits
    with pytest.raises(ValueError, match="empty"):
        evaluate(s1, empty, "val")


def test_sample_diverse_files(pipeline, dataset, tmp_path):
    root, _, _, s1, s2 = pipeline
    body_file = tmp_path / "body.json"
    from handgen.data import save_sequence

    save_sequence(dataset.records[0], body_file)
    paths = sample_diverse(s1, s2, body_file, k=3, seed=9, out_dir=tmp_path / "samples")
    assert len(paths) == 3
    from handgen.data import load_sequence

    for p in paths:
        rec = load_sequence(p)
        assert rec.hands.flat.shape == (8, 90)

    again = sample_diverse(s1, s2, body_file, k=3, seed=9, out_dir=tmp_path / "samples2")
    for p1, p2 in zip(paths, again):
        assert p1.read_bytes() == p2.read_bytes()


def test_sample_diverse_rejects_k_zero(pipeline, tmp_path):
    _, _, _, s1, s2 = pipeline
    with pytest.raises(ValueError):
        sample_diverse(s1, s2, tmp_path / "x.json", k=0, seed=0, out_dir=tmp_path)


def test_sample_diverse_plot(pipeline, dataset, tmp_path):
    _, _, _, s1, s2 = pipeline
    body_file = tmp_path / "body.json"
    from handgen.data import save_sequence

    save_sequence(dataset.records[1], body_file)
    paths = sample_diverse(s1, s2, body_file, k=2, seed=1, out_dir=tmp_path / "plotted",
                           plot=True)
    assert paths[-1].name == "samples.png"
    assert paths[-1].stat().st_size > 0
