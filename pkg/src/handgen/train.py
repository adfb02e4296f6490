"""Training loops, evaluation, and diverse sampling.

Workflow: `pretrain` fits the two frozen hand autoencoders, `train_stage_one`
runs the alternating generator/discriminator loop with per-step memory
writes, `train_stage_two` fits the diversification sampler on top of a
stage-one checkpoint, `evaluate` scores a split, and `sample_diverse` writes
k diversified sequences for one body input.

Every loop is deterministic for a fixed seed in single-threaded execution;
two identical runs produce bit-identical checkpoints and logs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autoencoder import HandAutoencoder, disentangle_loss, encode_hand, make_autoencoder, train_autoencoder
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_from_dict
from .data import (
    DatasetManifest,
    SequenceRecord,
    load_sequence,
    save_sequence,
)
from .losses import LossReport, loss_adv, loss_perc, loss_rec, loss_total_stage1
from .memory import MemoryBank, build_prototype_memory, update_slot_ema
from .metrics import MetricReport, metric_diversity, metric_fhd, metric_l2, metric_mpjre
from .nn import Adam, ParameterStore
from .stage1 import MotionDiscriminator, StageOneModel
from .stage2 import (
    GenerationModel,
    LangevinConfig,
    SamplingHeader,
    generate_diverse,
    langevin_prior,
    prototype_features,
    stage_two_grad_step,
    temporal_smooth,
)

SMOOTH_WINDOW = 5


class TrainingAborted(RuntimeError):
    """Raised when a loss goes non-finite; the last good checkpoint was saved."""


class JsonlLogger:
    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8")

    def write(self, entry: dict) -> None:
        self._fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()


def _train_records(manifest: DatasetManifest) -> list[SequenceRecord]:
    records = manifest.split_records("train") if manifest.splits else list(manifest.records)
    if not records:
        raise ValueError("no training records in manifest")
    return records


def _stack(records: list[SequenceRecord]) -> tuple[np.ndarray, np.ndarray]:
    body = np.stack([r.body.flat for r in records])
    hands = np.stack([r.hands.flat for r in records])
    return body, hands


# ----- autoencoder pretraining ------------------------------------------------


def build_autoencoders(cfg: TrainConfig, rng: np.random.Generator) -> tuple[ParameterStore, HandAutoencoder, HandAutoencoder]:
    store = ParameterStore()
    single = make_autoencoder(store, "ae.single", 45, cfg.model.channels, cfg.model.ae_hidden, rng)
    two = make_autoencoder(store, "ae.two", 90, cfg.model.channels, cfg.model.ae_hidden, rng)
    return store, single, two


def pretrain(cfg: TrainConfig, manifest: DatasetManifest, out_dir: str | Path) -> Path:
    """Fit the single-hand and two-hand autoencoders on the manifest's
    training hands; both hands are pooled for the single-hand model."""
    records = _train_records(manifest)
    _, hands = _stack(records)
    rng = np.random.default_rng(cfg.seed)
    store, single, two = build_autoencoders(cfg, rng)

    frames_two = hands.reshape(-1, 90)
    frames_single = np.concatenate([frames_two[:, :45], frames_two[:, 45:]], axis=0)

    out_dir = Path(out_dir)
    log = JsonlLogger(out_dir / "log.jsonl")
    curve_single = train_autoencoder(single, frames_single, cfg.epochs, cfg.lr,
                                     cfg.batch_size, cfg.seed, cfg.grad_clip)
    curve_two = train_autoencoder(two, frames_two, cfg.epochs, cfg.lr,
                                  cfg.batch_size, cfg.seed + 1, cfg.grad_clip)
    for epoch, (a, b) in enumerate(zip(curve_single, curve_two)):
        log.write({"epoch": epoch, "single_rec": a, "two_rec": b})
    log.close()
    return save_checkpoint(out_dir, store.state(), cfg.as_dict(), step=cfg.epochs,
                           split_hash=manifest.split_hash())


def autoencoders_from_tensors(cfg: TrainConfig, tensors: dict[str, np.ndarray]) -> tuple[HandAutoencoder, HandAutoencoder]:
    store, single, two = build_autoencoders(cfg, np.random.default_rng(0))
    store.load_state({n: v for n, v in tensors.items() if n.startswith("ae.")})
    single.trained = True
    two.trained = True
    return single, two


# ----- stage one -----------------------------------------------------------------


def _snapshot(model: StageOneModel, disc: MotionDiscriminator, ae_state: dict) -> dict[str, np.ndarray]:
    doc = dict(ae_state)
    doc.update(model.tensors())
    doc.update(disc.tensors())
    return doc


def train_stage_one(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    out_dir: str | Path,
    pretrain_ckpt: str | Path | None = None,
) -> Path:
    """Alternating generator/discriminator training of the stage-one model.

    The frozen autoencoders come from `pretrain_ckpt` when given; otherwise
    they are fitted first as a preliminary phase on the same training split.
    """
    out_dir = Path(out_dir)
    records = _train_records(manifest)
    body_all, hands_all = _stack(records)
    n = len(records)

    rng = np.random.default_rng(cfg.seed)
    if pretrain_ckpt is not None:
        ckpt = load_checkpoint(pretrain_ckpt)
        single, phi = autoencoders_from_tensors(cfg, ckpt.tensors)
        ae_state = {name: ckpt.tensors[name] for name in ckpt.names("ae.")}
    else:
        store, single, phi = build_autoencoders(cfg, rng)
        frames_two = hands_all.reshape(-1, 90)
        frames_single = np.concatenate([frames_two[:, :45], frames_two[:, 45:]], axis=0)
        train_autoencoder(single, frames_single, cfg.epochs, cfg.lr, cfg.batch_size,
                          cfg.seed, cfg.grad_clip)
        train_autoencoder(phi, frames_two, cfg.epochs, cfg.lr, cfg.batch_size,
                          cfg.seed + 1, cfg.grad_clip)
        ae_state = store.state()

    model = StageOneModel(cfg.model, cfg.memory, rng)
    model.set_train(True)
    disc = MotionDiscriminator(cfg.model, rng)
    g_opt = Adam(model.store, model.param_names, lr=cfg.lr, betas=cfg.betas)
    d_opt = Adam(disc.store, disc.param_names, lr=cfg.disc_lr or cfg.lr, betas=cfg.betas)

    # frozen per-record feature targets of the real single hands
    left_target = encode_hand(single, hands_all[:, :, :45]).data
    right_target = encode_hand(single, hands_all[:, :, 45:]).data

    log = JsonlLogger(out_dir / "log.jsonl")
    last_good = _snapshot(model, disc, ae_state)
    last_good_step = 0
    step = 0
    stop = False
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            epoch_losses: list[LossReport] = []
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                body, hands = body_all[idx], hands_all[idx]

                # discriminator step
                disc.store.zero_grad()
                fake = model.forward(body)["output"]
                _, disc_term = loss_adv(disc.forward, hands, fake)
                (-disc_term).backward()
                disc.store.clip_grad_norm(cfg.grad_clip, disc.param_names)
                d_opt.step()

                # generator step
                model.store.zero_grad()
                res = model.forward(body, collect_updates=True)
                rec = loss_rec(hands, res["output"])
                perc = loss_perc(hands, res["output"], phi)
                gen_term, _ = loss_adv(disc.forward, hands, res["output"])
                dis = disentangle_loss(
                    left_target[idx], res["proj"]["left"], single
                ) + disentangle_loss(right_target[idx], res["proj"]["right"], single)
                total = loss_total_stage1(rec, -gen_term, perc, dis)
                total.backward()
                model.store.clip_grad_norm(cfg.grad_clip, model.param_names)
                g_opt.step()
                model.apply_bank_updates(res["mem_updates"])

                report = LossReport(
                    rec=float(rec.data),
                    perc=float(perc.data),
                    adv_g=float(-gen_term.data),
                    adv_d=float(-disc_term.data),
                    dis=float(dis.data),
                )
                if not np.isfinite(report.total):
                    save_checkpoint(out_dir, last_good, cfg.as_dict(), last_good_step,
                                    manifest.split_hash())
                    raise TrainingAborted(
                        f"non-finite loss at step {step}; last good checkpoint "
                        f"(step {last_good_step}) saved to {out_dir}"
                    )
                step += 1
                epoch_losses.append(report)
                log.write({"step": step, "epoch": epoch, **report.as_dict()})
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    stop = True
                    break

            means = {
                key: float(np.mean([r.as_dict()[key] for r in epoch_losses]))
                for key in ("rec", "perc", "adv_g", "adv_d", "dis", "total")
            }
            log.write({"epoch": epoch, **{f"mean_{k}": v for k, v in means.items()}})
            last_good = _snapshot(model, disc, ae_state)
            last_good_step = step
            if cfg.target_rec is not None and means["rec"] < cfg.target_rec:
                stop = True
            if stop:
                break
    finally:
        log.close()

    return save_checkpoint(out_dir, _snapshot(model, disc, ae_state), cfg.as_dict(),
                           step, manifest.split_hash())


def stage_one_from_checkpoint(ckpt: Checkpoint) -> tuple[TrainConfig, StageOneModel, MotionDiscriminator, HandAutoencoder, HandAutoencoder]:
    cfg = config_from_dict(ckpt.config)
    model = StageOneModel(cfg.model, cfg.memory, np.random.default_rng(0))
    model.load_tensors(ckpt.tensors)
    model.set_train(False)
    disc = MotionDiscriminator(cfg.model, np.random.default_rng(0))
    disc.load_tensors(ckpt.tensors)
    single, phi = autoencoders_from_tensors(cfg, ckpt.tensors)
    return cfg, model, disc, single, phi


# ----- stage two -----------------------------------------------------------------


def train_stage_two(
    cfg: TrainConfig,
    manifest: DatasetManifest,
    out_dir: str | Path,
    stage1_ckpt: str | Path,
) -> Path:
    """Fit the diversification sampler (generation MLP + sampling header) with
    short-run prior/posterior chains against the training hands."""
    ckpt1 = load_checkpoint(stage1_ckpt)  # fails before any compute if missing
    out_dir = Path(out_dir)
    records = _train_records(manifest)
    _, hands_all = _stack(records)
    n = len(records)

    cfg1 = config_from_dict(ckpt1.config)
    _, phi = autoencoders_from_tensors(cfg1, ckpt1.tensors)

    rng = np.random.default_rng(cfg.seed)
    proto_bank = build_prototype_memory(
        [r.hands for r in records], phi,
        min(cfg.memory.proto_slots, n), rng, cfg.memory.gamma,
    )
    store = ParameterStore()
    gen = GenerationModel(store, cfg.model.channels, cfg.mcmc.dw, cfg.model.r_hidden, rng)
    header = SamplingHeader(store, cfg.mcmc.dw, cfg.model.header_hidden, rng, cfg.mcmc.sigma_w)
    opt_theta = Adam(store, gen.param_names(), lr=cfg.lr, betas=cfg.betas)
    opt_alpha = Adam(store, header.param_names(), lr=cfg.lr, betas=cfg.betas)
    chain_cfg = LangevinConfig.from_mcmc(cfg.mcmc)

    log = JsonlLogger(out_dir / "log.jsonl")
    log.write({
        "chain_settings": {
            "steps": chain_cfg.steps,
            "delta_prior": chain_cfg.delta_prior,
            "delta_posterior": chain_cfg.delta_posterior,
        }
    })

    def snapshot() -> dict[str, np.ndarray]:
        doc = {name: ckpt1.tensors[name] for name in ckpt1.names("ae.")}
        doc.update(store.state())
        doc["proto.slots"] = proto_bank.slots.copy()
        doc["proto.gamma"] = np.asarray(proto_bank.gamma)
        return doc

    last_good = snapshot()
    last_good_step = 0
    step = 0
    stop = False
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            epoch_losses = []
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                hands = hands_all[idx]
                proto_feats = prototype_features(proto_bank, phi, hands)
                report = stage_two_grad_step(
                    gen, header, opt_theta, opt_alpha, hands, proto_feats,
                    chain_cfg, seed=cfg.seed * 100003 + step * 2,
                    sigma_eps=cfg.mcmc.sigma_eps, grad_clip=cfg.grad_clip,
                )
                if not np.isfinite(report["stage2_loss"]):
                    save_checkpoint(out_dir, last_good, cfg.as_dict(), last_good_step,
                                    manifest.split_hash())
                    raise TrainingAborted(
                        f"non-finite loss at step {step}; last good checkpoint "
                        f"(step {last_good_step}) saved to {out_dir}"
                    )
                if cfg.memory.proto_updates:
                    pooled = phi.encode_np(hands.reshape(-1, 90)).mean(axis=0)
                    update_slot_ema(proto_bank, pooled)
                step += 1
                epoch_losses.append(report["stage2_loss"])
                log.write({"step": step, "epoch": epoch, **report})
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    stop = True
                    break
            mean_loss = float(np.mean(epoch_losses))
            log.write({"epoch": epoch, "mean_stage2_loss": mean_loss})
            last_good = snapshot()
            last_good_step = step
            if cfg.target_rec is not None and mean_loss < cfg.target_rec:
                stop = True
            if stop:
                break
    finally:
        log.close()

    return save_checkpoint(out_dir, snapshot(), cfg.as_dict(), step, manifest.split_hash())


def stage_two_from_checkpoint(ckpt: Checkpoint) -> tuple[TrainConfig, GenerationModel, SamplingHeader, MemoryBank, HandAutoencoder]:
    cfg = config_from_dict(ckpt.config)
    store = ParameterStore()
    gen = GenerationModel(store, cfg.model.channels, cfg.mcmc.dw, cfg.model.r_hidden,
                          np.random.default_rng(0))
    header = SamplingHeader(store, cfg.mcmc.dw, cfg.model.header_hidden,
                            np.random.default_rng(0), cfg.mcmc.sigma_w)
    store.load_state({n: v for n, v in ckpt.tensors.items() if n.startswith("stage2.")})
    proto_bank = MemoryBank(ckpt.tensors["proto.slots"], float(ckpt.tensors["proto.gamma"]),
                            frozen=True)
    _, phi = autoencoders_from_tensors(cfg, ckpt.tensors)
    return cfg, gen, header, proto_bank, phi


# ----- evaluation -----------------------------------------------------------------


def evaluate(
    ckpt_path: str | Path,
    manifest: DatasetManifest,
    split: str,
    ckpt2_path: str | Path | None = None,
    seed: int = 0,
    k: int = 10,
    pairs: int = 500,
) -> MetricReport:
    """Score stage-one predictions on a split; with a stage-two checkpoint,
    additionally sample k diversified outputs per input and report diversity."""
    _, model, _, _, phi = stage_one_from_checkpoint(load_checkpoint(ckpt_path))
    records = manifest.split_records(split) if manifest.splits else list(manifest.records)
    if not records:
        raise ValueError(f"split {split!r} is empty")

    preds = [model.predict(r.body) for r in records]
    gts = [r.hands for r in records]
    gt_stack = np.stack([g.flat for g in gts])
    pred_stack = np.stack([p.flat for p in preds])

    report = MetricReport(
        l2=metric_l2(gt_stack, pred_stack),
        fhd=metric_fhd(gts, preds, phi),
        mpjre_deg=metric_mpjre(gt_stack, pred_stack),
    )
    if ckpt2_path is not None:
        cfg2, gen, header, proto_bank, phi2 = stage_two_from_checkpoint(load_checkpoint(ckpt2_path))
        chain_cfg = LangevinConfig.from_mcmc(cfg2.mcmc)
        samples = []
        for i, pred in enumerate(preds):
            for j in range(k):
                w = langevin_prior(header, chain_cfg, seed=seed + i * k + j, n_chains=1)
                samples.append(generate_diverse(gen, pred, proto_bank, phi2, w[0]))
        mean, ci = metric_diversity(samples, phi2, pairs=pairs, seed=seed)
        report.diversity_mean = mean
        report.diversity_ci95 = ci
    return report


# ----- sampling --------------------------------------------------------------------


def sample_diverse(
    ckpt1_path: str | Path,
    ckpt2_path: str | Path,
    body_file: str | Path,
    k: int,
    seed: int,
    out_dir: str | Path,
    plot: bool = False,
    smooth_window: int = SMOOTH_WINDOW,
) -> list[Path]:
    """Predict hands for one body sequence, then write k diversified,
    temporally smoothed variants (and optionally a joint-angle plot)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _, model, _, _, _ = stage_one_from_checkpoint(load_checkpoint(ckpt1_path))
    cfg2, gen, header, proto_bank, phi2 = stage_two_from_checkpoint(load_checkpoint(ckpt2_path))
    chain_cfg = LangevinConfig.from_mcmc(cfg2.mcmc)

    record = load_sequence(body_file)
    initial = model.predict(record.body)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    sampled = []
    for j in range(k):
        w = langevin_prior(header, chain_cfg, seed=seed + j, n_chains=1)
        hands = generate_diverse(gen, initial, proto_bank, phi2, w[0])
        hands = temporal_smooth(hands, smooth_window)
        sampled.append(hands)
        out_record = SequenceRecord(f"{record.id}_sample{j:02d}", record.speaker_id,
                                    record.body, hands)
        path = out_dir / f"sample_{j:02d}.json"
        save_sequence(out_record, path)
        paths.append(path)
    if plot:
        plot_path = out_dir / "samples.png"
        _plot_samples(sampled, plot_path)
        paths.append(plot_path)
    return paths


def _plot_samples(sampled, path: Path, n_channels: int = 9) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(3, 3, figsize=(12, 8), sharex=True)
    for c, ax in enumerate(axes.ravel()[:n_channels]):
        for hands in sampled:
            ax.plot(hands.flat[:, c], lw=0.8)
        ax.set_title(f"joint {c // 3} axis {c % 3}", fontsize=8)
        ax.set_xlabel("frame")
        ax.set_ylabel("rad")
    fig.suptitle(f"{len(sampled)} diversified hand samples")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
