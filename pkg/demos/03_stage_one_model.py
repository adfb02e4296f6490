"""Build a small stage-one model, inspect its forward pass, verify gradients
against finite differences, and overfit a few sequences for a quick curve."""

import time

import numpy as np

from handgen import MemoryConfig, ModelConfig, StageOneModel, generate_synthetic
from handgen.losses import loss_rec
from handgen.nn import Adam, finite_diff_check

cfg = ModelConfig(channels=16, heads=4, seq_len=16, ae_hidden=16, disc_channels=8)
mem = MemoryConfig(slots=12, proto_slots=4)
model = StageOneModel(cfg, mem, np.random.default_rng(0))

data = generate_synthetic(seed=3, n=4, T=16)
body = np.stack([r.body.flat for r in data.records])
hands = np.stack([r.hands.flat for r in data.records])

# ---- forward pass -------------------------------------------------------------
out = model.forward(body)
print("body", body.shape, "-> hands", out["output"].shape)
print("intermediates:", sorted(k for k in out if k != "output"))
print("parameters:", sum(t.size for _, t in model.store.items()))

# ---- gradient verification ------------------------------------------------------
model.set_train(False)  # banks frozen: forward is deterministic


def loss_fn():
    return loss_rec(hands, model.forward(body)["output"])


subset = sorted(model.store.names())[::12]
err = finite_diff_check(loss_fn, model.store, eps=1e-5, names=subset, samples_per_param=2)
print(f"finite-difference gradient error over {len(subset)} tensors: {err:.2e}")

# ---- short overfit -----------------------------------------------------------------
model.set_train(True)
opt = Adam(model.store, model.param_names, lr=0.003)
t0 = time.time()
for step in range(120):
    model.store.zero_grad()
    res = model.forward(body, collect_updates=True)
    loss = loss_rec(hands, res["output"])
    loss.backward()
    model.store.clip_grad_norm(1.0, model.param_names)
    opt.step()
    model.apply_bank_updates(res["mem_updates"])
    if step % 30 == 0:
        print(f"step {step:3d}: rec loss {float(loss.data):.4f}")
print(f"120 steps in {time.time() - t0:.1f}s")

# ---- pose-space prediction -----------------------------------------------------------
pred = model.predict(data.records[0].body)
print("prediction:", pred.frames.shape, "max angle", np.linalg.norm(pred.frames, axis=-1).max())
