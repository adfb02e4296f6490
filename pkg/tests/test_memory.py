import numpy as np
import pytest

from handgen.autodiff import Tensor
from handgen.data import generate_synthetic
from handgen.memory import (
    FrozenBankError,
    MemoryBank,
    apply_spatial_dependency,
    build_prototype_memory,
    init_bank,
    motion_encode,
    motion_encoder_init,
    motion_enhance,
    read_hard,
    read_soft,
    soft_read,
    spatial_dependency,
    update_slot_ema,
)
from handgen.nn import ParameterStore, finite_diff_check
from handgen.autoencoder import make_autoencoder


def brute_force_read(slots, query):
    """Independent oracle: cosine + softmax + weighted sum via plain loops."""
    scores = []
    qn = np.linalg.norm(query)
    for slot in slots:
        sn = np.linalg.norm(slot)
        if qn < 1e-12 or sn < 1e-12:
            scores.append(0.0)
        else:
            scores.append(float(np.dot(slot, query) / (sn * qn)))
    scores = np.array(scores)
    e = np.exp(scores - scores.max())
    aff = e / e.sum()
    agg = sum(a * s for a, s in zip(aff, slots))
    return agg, aff, int(np.argmax(scores))


def test_read_soft_hand_computed_example():
    bank = MemoryBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    agg, aff = read_soft(bank, np.array([1.0, 0.0]))
    np.testing.assert_allclose(aff.data, [0.7311, 0.2689], atol=1e-4)
    np.testing.assert_allclose(agg.data, [0.7311, 0.2689], atol=1e-4)


def test_read_soft_single_slot():
    bank = MemoryBank(np.array([[2.0, 1.0, 0.0]]))
    agg, aff = read_soft(bank, np.array([0.3, -0.2, 5.0]))
    np.testing.assert_allclose(aff.data, [1.0])
    np.testing.assert_allclose(agg.data, bank.slots[0])


def test_read_soft_orthogonal_query_uniform():
    bank = MemoryBank(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    agg, aff = read_soft(bank, np.array([0.0, 0.0, 2.0]))
    np.testing.assert_allclose(aff.data, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(agg.data, bank.slots.mean(axis=0), atol=1e-12)


def test_read_soft_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        bank = MemoryBank(rng.normal(size=(rng.integers(1, 12), 5)))
        q = rng.normal(size=5)
        agg, aff = read_soft(bank, q)
        o_agg, o_aff, _ = brute_force_read(bank.slots, q)
        np.testing.assert_allclose(aff.data, o_aff, atol=1e-6)
        np.testing.assert_allclose(agg.data, o_agg, atol=1e-6)


def test_read_soft_affinity_sums_to_one():
    rng = np.random.default_rng(1)
    for _ in range(50):
        bank = MemoryBank(rng.normal(size=(8, 4)))
        _, aff = read_soft(bank, rng.normal(size=(3, 4)))
        np.testing.assert_allclose(aff.data.sum(axis=-1), np.ones(3), atol=1e-6)
        assert np.all(aff.data >= 0)


def test_read_soft_zero_norm_query():
    bank = MemoryBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    agg, aff = read_soft(bank, np.zeros(2))
    np.testing.assert_allclose(aff.data, [0.5, 0.5])
    assert np.all(np.isfinite(agg.data))


def test_read_soft_dimension_mismatch():
    bank = MemoryBank(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        read_soft(bank, np.zeros(5))


def test_read_hard_exact_match():
    bank = MemoryBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    slot, idx = read_hard(bank, np.array([1.0, 0.0]))
    assert idx == 0
    np.testing.assert_allclose(slot, [1.0, 0.0])


def test_read_hard_tie_breaks_low_index():
    bank = MemoryBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    _, idx = read_hard(bank, np.array([1.0, 1.0]))
    assert idx == 0


def test_read_hard_agrees_with_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(100):
        bank = MemoryBank(rng.normal(size=(rng.integers(1, 10), 6)))
        q = rng.normal(size=6)
        _, idx = read_hard(bank, q)
        _, _, o_idx = brute_force_read(bank.slots, q)
        assert idx == o_idx


def test_read_hard_matches_soft_argmax():
    rng = np.random.default_rng(3)
    for _ in range(50):
        bank = MemoryBank(rng.normal(size=(7, 4)))
        q = rng.normal(size=4)
        _, idx = read_hard(bank, q)
        _, aff = read_soft(bank, q)
        assert idx == int(np.argmax(aff.data))


def test_update_slot_ema_convex_combination():
    bank = MemoryBank(np.array([[1.0, 0.0]]), gamma=0.8)
    update_slot_ema(bank, np.array([0.0, 1.0]))
    np.testing.assert_allclose(bank.slots[0], [0.8, 0.2])


def test_update_slot_ema_gamma_one_is_noop():
    bank = MemoryBank(np.array([[1.0, 2.0]]), gamma=1.0)
    update_slot_ema(bank, np.array([9.0, 9.0]))
    np.testing.assert_allclose(bank.slots[0], [1.0, 2.0])


def test_update_slot_ema_geometric_convergence():
    gamma = 0.8
    bank = MemoryBank(np.array([[4.0, 0.0]]), gamma=gamma)
    q = np.array([1.0, 1.0])
    m0 = bank.slots[0].copy()
    for k in range(1, 30):
        update_slot_ema(bank, q)
        expected = gamma**k * m0 + (1 - gamma**k) * q
        np.testing.assert_allclose(bank.slots[0], expected, atol=1e-12)


def test_update_slot_ema_changes_single_slot():
    rng = np.random.default_rng(4)
    bank = MemoryBank(rng.normal(size=(6, 3)))
    before = bank.slots.copy()
    idx = update_slot_ema(bank, rng.normal(size=3))
    changed = np.any(bank.slots != before, axis=1)
    assert changed.sum() == 1 and changed[idx]
    assert np.all(np.isfinite(bank.slots))


def test_update_slot_ema_frozen_raises():
    bank = MemoryBank(np.ones((2, 2)), frozen=True)
    with pytest.raises(FrozenBankError):
        update_slot_ema(bank, np.ones(2))


def test_gradients_flow_through_soft_read_not_ema():
    rng = np.random.default_rng(5)
    store = ParameterStore()
    q = store.add("q", rng.normal(size=4))
    slots = store.add("slots", rng.normal(size=(5, 4)))

    def loss_fn():
        agg, _ = soft_read(slots, q)
        return (agg * agg).sum()

    err = finite_diff_check(loss_fn, store, eps=1e-6, rng=np.random.default_rng(6))
    assert err < 1e-3


# ----- spatial dependency ------------------------------------------------------


def test_spatial_dependency_hand_example():
    dep = spatial_dependency(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    np.testing.assert_allclose(dep.data[0], [0.2689, 0.7311], atol=1e-4)
    np.testing.assert_allclose(dep.data[1], [0.5, 0.5], atol=1e-12)


def test_spatial_dependency_zero_residual_uniform():
    dep = spatial_dependency(np.zeros(5), np.random.default_rng(7).normal(size=5))
    np.testing.assert_allclose(dep.data, np.full((5, 5), 0.2), atol=1e-12)


def test_spatial_dependency_rows_sum_to_one():
    rng = np.random.default_rng(8)
    dep = spatial_dependency(rng.normal(size=(3, 6)), rng.normal(size=(3, 6)))
    np.testing.assert_allclose(dep.data.sum(axis=-1), np.ones((3, 6)), atol=1e-12)


def test_apply_spatial_dependency_hand_example():
    f = np.array([0.0, 1.0])
    dep = np.array([[0.2689, 0.7311], [0.5, 0.5]])
    out = apply_spatial_dependency(f, dep)
    np.testing.assert_allclose(out.data, [0.5, 1.5], atol=1e-12)


def test_apply_spatial_dependency_zero_feature():
    out = apply_spatial_dependency(np.zeros(4), np.full((4, 4), 0.25))
    np.testing.assert_array_equal(out.data, np.zeros(4))


def test_apply_spatial_dependency_uniform_mixing():
    f = np.array([1.0, 2.0, 3.0])
    out = apply_spatial_dependency(f, np.full((3, 3), 1.0 / 3.0))
    np.testing.assert_allclose(out.data, f + f.mean(), atol=1e-12)


def test_spatial_ops_gradcheck():
    rng = np.random.default_rng(9)
    store = ParameterStore()
    f_delta = store.add("fd", rng.normal(size=4))
    f_t = store.add("ft", rng.normal(size=4))

    def loss_fn():
        dep = spatial_dependency(f_delta, f_t)
        out = apply_spatial_dependency(f_t, dep)
        return (out * out).sum()

    err = finite_diff_check(loss_fn, store, eps=1e-6, rng=np.random.default_rng(10))
    assert err < 1e-3


# ----- temporal path ------------------------------------------------------------


def test_motion_encode_shape_and_zero_case():
    store = ParameterStore()
    spec = motion_encoder_init(store, "menc", 64, np.random.default_rng(11))
    out = motion_encode(store, "menc", spec, np.random.default_rng(12).normal(size=(64, 16)))
    assert out.shape == (64,)
    zero_out = motion_encode(store, "menc", spec, np.zeros((64, 16)))
    np.testing.assert_array_equal(zero_out.data, np.zeros(64))  # biases start at zero


def test_motion_encode_gradcheck():
    store = ParameterStore()
    spec = motion_encoder_init(store, "menc", 8, np.random.default_rng(13))
    x = np.random.default_rng(14).normal(size=(8, 5))

    def loss_fn():
        return (motion_encode(store, "menc", spec, x) ** 2.0).sum()

    err = finite_diff_check(loss_fn, store, eps=1e-5, rng=np.random.default_rng(15))
    assert err < 1e-3


def test_motion_enhance_uniform_embedding():
    feats = np.random.default_rng(16).normal(size=(2, 3))
    out = motion_enhance(feats, np.array([5.0, 5.0]))
    np.testing.assert_allclose(out.data, feats * 1.5, atol=1e-12)


def test_motion_enhance_zero_features():
    out = motion_enhance(np.zeros((4, 3)), np.random.default_rng(17).normal(size=4))
    np.testing.assert_array_equal(out.data, np.zeros((4, 3)))


def test_motion_enhance_weights_sum_to_one():
    rng = np.random.default_rng(18)
    feats = np.ones((6, 2))
    emb = rng.normal(size=6)
    out = motion_enhance(feats, emb)
    # sum over t of the applied excess scale equals 1
    np.testing.assert_allclose((out.data[:, 0] - 1.0).sum(), 1.0, atol=1e-12)


def test_motion_enhance_gradcheck():
    store = ParameterStore()
    rng = np.random.default_rng(19)
    feats = store.add("f", rng.normal(size=(5, 3)))
    emb = store.add("e", rng.normal(size=5))

    def loss_fn():
        return (motion_enhance(feats, emb) ** 2.0).sum()

    err = finite_diff_check(loss_fn, store, eps=1e-6, rng=np.random.default_rng(20))
    assert err < 1e-3


# ----- prototype bank -------------------------------------------------------------


def proto_setup(n=6, slots=4):
    manifest = generate_synthetic(seed=30, n=n, T=8)
    store = ParameterStore()
    ae = make_autoencoder(store, "ae", 90, 16, 32, np.random.default_rng(21))
    ae.trained = True
    hands = [r.hands for r in manifest.records]
    return hands, ae


def test_prototype_bank_one_slot_per_sequence():
    hands, ae = proto_setup(n=5)
    bank = build_prototype_memory(hands, ae, 5, np.random.default_rng(22))
    assert bank.slots.shape == (5, 16)
    feats = np.stack([ae.encode_np(h.flat).mean(axis=0) for h in hands])
    # bijection at init: every slot is one of the encoded sequences
    for slot in bank.slots:
        assert any(np.allclose(slot, f) for f in feats)


def test_prototype_bank_self_query_max_affinity():
    hands, ae = proto_setup(n=4)
    bank = build_prototype_memory(hands, ae, 4, np.random.default_rng(23))
    for i, slot in enumerate(bank.slots):
        _, aff = read_soft(bank, slot)
        assert int(np.argmax(aff.data)) == i


def test_prototype_bank_requires_enough_sequences():
    hands, ae = proto_setup(n=3)
    with pytest.raises(ValueError, match="at least 5"):
        build_prototype_memory(hands, ae, 5, np.random.default_rng(24))


def test_prototype_retrieval_matches_brute_force():
    hands, ae = proto_setup(n=6)
    bank = build_prototype_memory(hands, ae, 6, np.random.default_rng(25))
    rng = np.random.default_rng(26)
    for _ in range(20):
        q = rng.normal(size=16)
        _, idx = read_hard(bank, q)
        _, _, o_idx = brute_force_read(bank.slots, q)
        assert idx == o_idx


def test_init_bank_rows_normalized():
    bank = init_bank(8, 5, np.random.default_rng(27))
    np.testing.assert_allclose(np.linalg.norm(bank.slots, axis=1), np.ones(8), atol=1e-12)
    assert bank.gamma == 0.8
