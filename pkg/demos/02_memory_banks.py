"""Memory bank mechanics: cosine reads, EMA writes, and the spatial/temporal
feature enhancement built on them."""

import numpy as np

from handgen import MemoryBank, read_hard, read_soft, update_slot_ema
from handgen.memory import (
    apply_spatial_dependency,
    motion_enhance,
    spatial_dependency,
)

# ---- reading ----------------------------------------------------------------
bank = MemoryBank(np.array([[1.0, 0.0], [0.0, 1.0]]), gamma=0.8)
query = np.array([1.0, 0.0])

aggregate, affinity = read_soft(bank, query)
print("affinity (softmax over cosine):", np.round(affinity.data, 4))
print("aggregate (affinity-weighted slots):", np.round(aggregate.data, 4))

slot, idx = read_hard(bank, query)
print("hard read picks slot", idx, "->", slot)

# ---- EMA writes ----------------------------------------------------------------
# Each write moves the best-matching slot toward the query: m <- 0.8 m + 0.2 q.
target = np.array([0.0, 1.0])
single = MemoryBank(np.array([[1.0, 0.0]]), gamma=0.8)
for k in range(1, 6):
    update_slot_ema(single, target)
    print(f"after write {k}: {np.round(single.slots[0], 4)}")
# geometric approach toward the query with ratio gamma
print("closed form at k=5:", np.round(0.8**5 * np.array([1.0, 0.0]) + (1 - 0.8**5) * target, 4))

# ---- spatial dependency ----------------------------------------------------------
# The retrieved residual and the current hand feature form a row-stochastic
# mixing matrix; the next-step feature adds the mixed feature back in.
f_delta = np.array([1.0, 0.0])
f_t = np.array([0.0, 1.0])
dep = spatial_dependency(f_delta, f_t)
print("\ndependency rows:", np.round(dep.data, 4), "row sums:", dep.data.sum(axis=-1))
print("next-step feature:", np.round(apply_spatial_dependency(f_t, dep).data, 4))

# ---- temporal enhancement -----------------------------------------------------------
# A per-frame scale (1 + softmax of the motion embedding) rescales features.
feats = np.ones((4, 3))
embedding = np.array([2.0, 0.0, 0.0, 0.0])
enhanced = motion_enhance(feats, embedding)
print("\nper-frame scales:", np.round(enhanced.data[:, 0], 4))
