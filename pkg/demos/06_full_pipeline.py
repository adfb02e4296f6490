"""End-to-end miniature run: synthesize data, pretrain the autoencoders, train
both stages, evaluate, and sample diversified hands. Writes everything under
demos/output/. Takes a couple of minutes on one CPU core."""

import json
from pathlib import Path

from handgen import (
    McmcConfig,
    MemoryConfig,
    ModelConfig,
    TrainConfig,
    evaluate,
    generate_synthetic,
    pretrain,
    sample_diverse,
    save_manifest,
    save_sequence,
    split_dataset,
    train_stage_one,
    train_stage_two,
)

out = Path(__file__).parent / "output" / "pipeline"
out.mkdir(parents=True, exist_ok=True)

# ---- data -----------------------------------------------------------------------
manifest = split_dataset(generate_synthetic(seed=0, n=12, T=32), (0.7, 0.1, 0.2), seed=0)
save_manifest(manifest, out / "data")
print("dataset:", len(manifest), "sequences")

# ---- configs -----------------------------------------------------------------------
# Small widths keep the demo quick; the defaults in TrainConfig mirror the
# full-scale recipe (lr 0.003, Adam(0.9, 0.999), 30 epochs, batch 64).
model_cfg = ModelConfig(channels=24, heads=4, seq_len=32, ae_hidden=32,
                        disc_channels=12, r_hidden=48, header_hidden=16)
mem_cfg = MemoryConfig(slots=32, proto_slots=8)
mcmc_cfg = McmcConfig(dw=6)
pre_cfg = TrainConfig(epochs=150, batch_size=64, seed=1,
                      model=model_cfg, memory=mem_cfg, mcmc=mcmc_cfg)
s1_cfg = TrainConfig(disc_lr=0.0003, epochs=300, batch_size=8, seed=2, max_steps=300,
                     target_rec=0.08, model=model_cfg, memory=mem_cfg, mcmc=mcmc_cfg)
s2_cfg = TrainConfig(epochs=300, batch_size=8, seed=3, max_steps=300, target_rec=0.05,
                     model=model_cfg, memory=mem_cfg, mcmc=mcmc_cfg)

# ---- training -----------------------------------------------------------------------
ae = pretrain(pre_cfg, manifest, out / "ae")
print("autoencoders:", ae)
s1 = train_stage_one(s1_cfg, manifest, out / "stage1", pretrain_ckpt=ae)
last = json.loads((out / "stage1" / "log.jsonl").read_text().splitlines()[-1])
print("stage one:", s1, "| last epoch mean rec:", round(last["mean_rec"], 4))
s2 = train_stage_two(s2_cfg, manifest, out / "stage2", stage1_ckpt=s1)
print("stage two:", s2)

# ---- evaluation ---------------------------------------------------------------------
report = evaluate(s1, manifest, "test", ckpt2_path=s2, seed=0, k=5)
print("\nmetric report (test split):")
print(report.to_json())

# ---- diverse sampling -----------------------------------------------------------------
body_file = out / "body.json"
save_sequence(manifest.records[0], body_file)
paths = sample_diverse(s1, s2, body_file, k=5, seed=11, out_dir=out / "samples", plot=True)
print("\nsampled files:")
for p in paths:
    print(" ", p)
