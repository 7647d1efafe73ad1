import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from loadaug.dataset import NormalizationParams, make_windows
from loadaug.numerics import finite_difference_check, standard_normal, substream
from loadaug.timegan import (
    PhaseOrderError,
    TimeGanAugmenter,
    TimeGanModel,
    TimeGanTrainConfig,
    generate_rows_gan,
    generator_adversarial_loss,
    reconstruction_loss,
    sample_windows_gan,
    supervised_loss,
    train_timegan,
    unsupervised_loss,
)


def _ar1_windows(n_rows=200, channels=3, seed=0):
    gen = substream(seed, "test", "gan-ar1")
    x = np.zeros((n_rows, channels))
    eps = standard_normal(gen, (n_rows, channels))
    for i in range(1, n_rows):
        x[i] = 0.8 * x[i - 1] + 0.6 * eps[i]
    return make_windows(np.clip(0.5 + 0.12 * x, 0, 1), 12, 3).windows


# ---------------------------------------------------------------- loss fixtures


def test_reconstruction_examples():
    x = np.random.default_rng(0).uniform(size=(2, 5, 3))
    assert reconstruction_loss(x, x) == 0.0
    got = reconstruction_loss(np.array([[2.0]]), np.array([[0.0]]), s=np.array([1.0]), s_tilde=np.array([0.0]))
    assert got == pytest.approx(3.0, abs=1e-12)
    assert reconstruction_loss(np.array([[3.0, 4.0]]), np.zeros((1, 2))) == pytest.approx(5.0, abs=1e-12)
    with pytest.raises(ValueError):
        reconstruction_loss(np.zeros((1, 2, 3)), np.zeros((1, 2, 2)))


def test_supervised_examples():
    h = np.random.default_rng(1).uniform(size=(2, 6, 4))
    assert supervised_loss(h, h) == 0.0
    assert supervised_loss(np.array([[1.0], [2.0]]), np.array([[1.0], [0.0]])) == pytest.approx(2.0)
    pred = np.random.default_rng(2).uniform(size=h.shape)
    assert supervised_loss(2 * h, 2 * pred) == pytest.approx(2 * supervised_loss(h, pred), rel=1e-12)


def test_unsupervised_examples():
    eps = 1e-9
    assert unsupervised_loss(np.array([[1 - eps]]), np.array([[eps]])) == pytest.approx(0.0, abs=1e-6)
    assert unsupervised_loss(np.array([[0.5]]), np.array([[0.5]])) == pytest.approx(2 * np.log(0.5), abs=1e-12)
    rng = np.random.default_rng(3)
    y, y_hat = rng.uniform(0.05, 0.95, size=(4, 7)), rng.uniform(0.05, 0.95, size=(4, 7))
    assert unsupervised_loss(y, y_hat) == pytest.approx(unsupervised_loss(1 - y_hat, 1 - y), rel=1e-12)


def test_unsupervised_clamps_extreme_scores():
    assert np.isfinite(unsupervised_loss(np.zeros((1, 3)), np.ones((1, 3))))
    assert unsupervised_loss(np.zeros((1, 1)), np.zeros((1, 1))) == pytest.approx(np.log(1e-7), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(2, 10), st.integers(1, 5), st.integers(0, 2**31))
def test_loss_signs(batch, steps, width, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(batch, steps, width)), rng.normal(size=(batch, steps, width))
    assert reconstruction_loss(a, b) >= 0
    assert supervised_loss(a, b) >= 0
    half = np.full((batch, steps), 0.5)
    assert unsupervised_loss(half, half) == pytest.approx(2 * steps * np.log(0.5), rel=1e-12)
    assert unsupervised_loss(half, half) <= 0


# ---------------------------------------------------------------- gradients through the networks


def _model_and_batch(seed=0):
    model = TimeGanModel.init(n_channels=2, hidden=4, seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(3, 5, 2))
    z = rng.uniform(size=(3, 5, 2))
    return model, x, z


def _fd(model, loss_of_params):
    names = list(model.params)

    def f(*arrays):
        return loss_of_params(dict(zip(names, arrays)))

    return finite_difference_check(f, [model.params[k] for k in names], step=1e-5, floor=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_reconstruction_gradient(seed):
    m, x, _ = _model_and_batch(seed)
    assert _fd(m, lambda p: reconstruction_loss(x, m.recover(p, m.embed(p, x)))) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_supervised_gradient(seed):
    m, x, _ = _model_and_batch(seed)

    def loss(p):
        h = m.embed(p, x)
        return supervised_loss(h, m.supervise(p, h))

    assert _fd(m, loss) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_adversarial_gradients(seed):
    m, x, z = _model_and_batch(seed)

    def disc(p):
        return unsupervised_loss(m.discriminate(p, m.embed(p, x)), m.discriminate(p, m.synthetic_latent(p, z)))

    assert _fd(m, disc) < 1e-4
    assert _fd(m, lambda p: generator_adversarial_loss(m.discriminate(p, m.synthetic_latent(p, z)))) < 1e-4


# ---------------------------------------------------------------- training


def test_zero_steps_is_initialization():
    w = _ar1_windows()
    cfg = TimeGanTrainConfig(0, 0, 0, hidden=6, seed=4)
    model, hist = train_timegan(w, cfg)
    init = TimeGanModel.init(3, 6, 4)
    for k in init.params:
        np.testing.assert_array_equal(model.params[k], init.params[k])
    assert all(len(v) == 0 for v in hist.values())


def test_joint_phase_requires_trained_embedder():
    with pytest.raises(PhaseOrderError):
        train_timegan(_ar1_windows(), TimeGanTrainConfig(0, 2, 2, hidden=4))


def test_initial_discriminator_scores_near_half():
    model = TimeGanModel.init(3, 24, seed=0)
    x = _ar1_windows(seed=1)
    scores = model.discriminate(model.params, model.embed(model.params, x))
    assert 0.2 < scores.mean() < 0.8


def test_embedding_phase_halves_reconstruction_loss():
    model, hist = train_timegan(_ar1_windows(), TimeGanTrainConfig(500, 0, 0, seed=0))
    rec = hist["embedding"]
    assert len(rec) == 500
    assert np.mean(rec[-20:]) < 0.5 * rec[0]
    assert model.steps_trained == {"embedding": 500, "supervised": 0, "joint": 0}


def test_training_is_deterministic():
    w = _ar1_windows()
    cfg = TimeGanTrainConfig(3, 3, 3, hidden=5, batch_size=8, seed=2)
    m1, h1 = train_timegan(w, cfg)
    m2, h2 = train_timegan(w, cfg)
    assert h1 == h2
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])


def test_config_validation():
    with pytest.raises(ValueError):
        TimeGanTrainConfig(embedding_steps=-1)
    with pytest.raises(ValueError):
        TimeGanTrainConfig(eta=-1.0)


# ---------------------------------------------------------------- generation


def test_generate_rows_gan_counts_and_seeds():
    model = TimeGanModel.init(8, 24, seed=0)
    params = NormalizationParams(np.zeros(8), np.full(8, 2.0))
    rows = generate_rows_gan(model, 144, params, seed=1)
    assert len(rows) == 3456 and rows.source == "timegan"
    assert np.all(rows.values >= 0) and np.all(rows.values <= 2)
    assert len(generate_rows_gan(model, 0, params, seed=1)) == 0
    other = generate_rows_gan(model, 144, params, seed=2)
    assert not np.array_equal(rows.values, other.values)
    np.testing.assert_array_equal(sample_windows_gan(model, 3, 24, 5)[:2], sample_windows_gan(model, 2, 24, 5))


def test_estimator_api():
    est = TimeGanAugmenter(embedding_steps=2, supervised_steps=2, joint_steps=2, hidden=4, batch_size=4)
    assert clone(est).get_params()["hidden"] == 4
    est.fit(_ar1_windows())
    out = est.sample(5, random_state=1)
    assert out.shape == (5, 12, 3) and out.min() >= 0 and out.max() <= 1
