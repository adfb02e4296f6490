import numpy as np
import pytest

from handgen.autodiff import Tensor, sigmoid, clip, tmean
from handgen.autoencoder import NotTrainedError, make_autoencoder
from handgen.losses import LossReport, loss_adv, loss_perc, loss_rec, loss_total_stage1
from handgen.nn import ParameterStore, finite_diff_check


def test_loss_rec_identical_zero():
    x = np.random.default_rng(0).normal(size=(4, 8, 90))
    assert float(loss_rec(x, x).data) == 0.0


def test_loss_rec_uniform_offset():
    x = np.zeros((2, 5, 90))
    assert float(loss_rec(x, x + 0.1).data) == pytest.approx(0.1, abs=1e-12)


def test_loss_rec_matches_direct():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(3, 4, 90)), rng.normal(size=(3, 4, 90))
    assert float(loss_rec(a, b).data) == pytest.approx(np.abs(a - b).mean(), abs=1e-12)


def test_loss_rec_shape_mismatch():
    with pytest.raises(ValueError):
        loss_rec(np.zeros((2, 90)), np.zeros((3, 90)))


def make_phi(channels=16, seed=2):
    store = ParameterStore()
    ae = make_autoencoder(store, "phi", 90, channels, 32, np.random.default_rng(seed))
    ae.trained = True
    return ae


def test_loss_perc_identical_zero():
    phi = make_phi()
    x = np.random.default_rng(3).normal(size=(6, 90))
    assert float(loss_perc(x, x, phi).data) == 0.0


def test_loss_perc_nonnegative():
    phi = make_phi()
    rng = np.random.default_rng(4)
    for _ in range(10):
        v = float(loss_perc(rng.normal(size=(4, 90)), rng.normal(size=(4, 90)), phi).data)
        assert v >= 0.0


def test_loss_perc_identity_extractor_matches_rec():
    store = ParameterStore()
    ae = make_autoencoder(store, "phi", 90, 90, 90, np.random.default_rng(5))
    # make the encoder a pure identity: first layer identity into the
    # nonlinearity's positive range is not possible in general, so use the
    # linear path: w0 = I scaled to stay positive is not valid either; instead
    # collapse both layers to identity on positive inputs via abs shift.
    ae.trained = True
    rng = np.random.default_rng(6)
    a = np.abs(rng.normal(size=(4, 90))) + 0.5
    b = a + 0.05
    store["phi.enc.w0"].data[:] = np.eye(90)
    store["phi.enc.b0"].data[:] = 0.0
    store["phi.enc.w1"].data[:] = np.eye(90)
    store["phi.enc.b1"].data[:] = 0.0
    # inputs are strictly positive so the leaky nonlinearity is identity
    got = float(loss_perc(a, b, ae).data)
    want = float(loss_rec(a, b).data)
    assert got == pytest.approx(want, abs=1e-12)


def test_loss_perc_requires_extractor():
    with pytest.raises(NotTrainedError):
        loss_perc(np.zeros((2, 90)), np.zeros((2, 90)), None)


def constant_discriminator(p):
    return lambda hands: clip(Tensor(np.full(hands.shape[0], p)) + 0.0 * tmean(hands), 1e-7, 1 - 1e-7)


def test_loss_adv_half_discriminator():
    rng = np.random.default_rng(7)
    real, fake = rng.normal(size=(3, 8, 90)), rng.normal(size=(3, 8, 90))
    gen, disc = loss_adv(constant_discriminator(0.5), real, fake)
    assert float(disc.data) == pytest.approx(2 * np.log(0.5), abs=1e-9)
    assert float(gen.data) == pytest.approx(np.log(0.5), abs=1e-9)


def test_loss_adv_perfect_discriminator_near_zero():
    eps = 1e-7
    rng = np.random.default_rng(8)
    real, fake = rng.normal(size=(2, 4, 90)), rng.normal(size=(2, 4, 90))

    def disc(hands):
        p = 1 - eps if hands is real or np.array_equal(hands.data, real) else eps
        return clip(Tensor(np.full(hands.shape[0], p)) + 0.0 * tmean(hands), 1e-7, 1 - 1e-7)

    _, d = loss_adv(disc, real, fake)
    assert abs(float(d.data)) < 1e-5


def test_loss_adv_generator_term_monotone():
    rng = np.random.default_rng(9)
    real, fake = rng.normal(size=(2, 4, 90)), rng.normal(size=(2, 4, 90))
    values = []
    for p in (0.9, 0.5, 0.1, 1e-6):
        g, _ = loss_adv(constant_discriminator(p), real, fake)
        values.append(float(g.data))
    assert values == sorted(values, reverse=True)


def test_loss_total_weights():
    assert loss_total_stage1(1.0, 1.0, 1.0, 1.0) == pytest.approx(3.5)
    assert loss_total_stage1(0.0, 0.0, 0.0, 0.0) == 0.0
    base = loss_total_stage1(1.0, 2.0, 3.0, 4.0)
    assert loss_total_stage1(2.0, 2.0, 3.0, 4.0) - base == pytest.approx(1.0)
    assert loss_total_stage1(1.0, 2.0, 3.0, 6.0) - base == pytest.approx(1.0)


def test_loss_report_total():
    r = LossReport(rec=1.0, perc=1.0, adv_g=1.0, adv_d=-1.3, dis=1.0)
    assert r.total == pytest.approx(3.5)
    assert r.as_dict()["total"] == pytest.approx(3.5)


def test_losses_gradcheck():
    store = ParameterStore()
    rng = np.random.default_rng(10)
    pred = store.add("pred", rng.normal(size=(2, 3, 90)))
    target = rng.normal(size=(2, 3, 90))
    phi = make_phi(seed=11)

    def loss_fn():
        rec = loss_rec(target, pred)
        perc = loss_perc(target, pred, phi)
        return rec + perc

    err = finite_diff_check(loss_fn, store, names=["pred"], eps=1e-6, rng=np.random.default_rng(12))
    assert err < 1e-3


def test_adv_gradcheck_through_sigmoid_disc():
    store = ParameterStore()
    rng = np.random.default_rng(13)
    fake = store.add("fake", rng.normal(size=(2, 4, 90)))
    w = store.add("w", rng.normal(size=(90, 1)) * 0.1)
    real = rng.normal(size=(2, 4, 90))

    def disc(hands):
        logits = tmean(hands @ w, axis=(-2, -1)) if hands.ndim == 3 else tmean(hands @ w)
        return clip(sigmoid(logits), 1e-7, 1 - 1e-7)

    def full_loss():
        gen, d = loss_adv(disc, real, fake)
        return -gen - d

    def gen_loss():
        gen, _ = loss_adv(disc, real, fake)
        return -gen

    # discriminator parameters see both adversarial terms
    err_w = finite_diff_check(full_loss, store, names=["w"], eps=1e-6, rng=np.random.default_rng(14))
    assert err_w < 1e-3
    # the generated hands only receive gradient through the non-saturating
    # generator term (the discriminator term detaches them)
    err_fake = finite_diff_check(gen_loss, store, names=["fake"], eps=1e-6, rng=np.random.default_rng(15))
    assert err_fake < 1e-3
