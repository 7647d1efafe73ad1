"""Adversarial sequence generator in the TimeGAN style.

Five small recurrent networks share one parameter dict: an embedder and a
recovery network form an autoencoder between data and latent sequences, a
generator maps noise to latents, a supervisor predicts the next latent from
the current one, and a discriminator scores latent sequences step by step.
Training runs three phases: autoencoder, supervised next-step prediction,
then joint adversarial training.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import NormalizationParams, TimeSeriesDataset, WindowSet, rows_from_windows
from .numerics import Adam, Tape, ad
from .numerics.autodiff import NumericError
from .numerics.rng import derive_seed, standard_normal, substream, uniform_open

log = logging.getLogger(__name__)

NETWORKS = ("embedder", "recovery", "generator", "supervisor", "discriminator")
SCORE_CLAMP = 1e-7


class PhaseOrderError(RuntimeError):
    pass


class DivergenceError(FloatingPointError):
    def __init__(self, message, history):
        self.history = history
        super().__init__(message)


# ---------------------------------------------------------------- losses


def _as_batch(x):
    if ad.value_of(x).ndim == 2:
        return ad.reshape(x, (1,) + ad.value_of(x).shape)
    return x


def _static_term(s, s_tilde):
    if s is None or np.asarray(ad.value_of(s)).size == 0:
        return 0.0
    return ad.mean(ad.l2norm(ad.reshape(ad.sub(s, s_tilde), (-1, ad.value_of(s).shape[-1])), axis=1))


def reconstruction_loss(x, x_tilde, s=None, s_tilde=None):
    """Batch mean of ``|s - s~| + sum_t |x_t - x~_t|`` with plain (unsquared)
    Euclidean norms. Sequences are ``(batch, steps, channels)`` or a single
    ``(steps, channels)`` sequence; static features default to none."""
    x, x_tilde = _as_batch(x), _as_batch(x_tilde)
    if ad.value_of(x).shape != ad.value_of(x_tilde).shape:
        raise ValueError("x and its reconstruction differ in shape")
    per_step = ad.l2norm(ad.sub(x, x_tilde), axis=-1)
    return ad.add(ad.mean(ad.sum_(per_step, axis=1)), _static_term(s, s_tilde))


def supervised_loss(h, h_pred):
    """Batch mean of ``sum_t |h_t - h_pred_t|`` over steps 2..T.

    ``h_pred[:, t]`` is the supervisor's estimate of ``h[:, t]`` made from
    ``h[:, t-1]``; the first step has no predecessor and is skipped.
    """
    h, h_pred = _as_batch(h), _as_batch(h_pred)
    if ad.value_of(h).shape != ad.value_of(h_pred).shape:
        raise ValueError("latents and supervisor predictions differ in shape")
    if ad.value_of(h).shape[1] < 2:
        raise ValueError("supervised loss needs at least two steps")
    diff = ad.sub(h[:, 1:], h_pred[:, 1:])
    return ad.mean(ad.sum_(ad.l2norm(diff, axis=-1), axis=1))


def _log_scores(y):
    return ad.log(ad.clip(y, SCORE_CLAMP, 1.0 - SCORE_CLAMP))


def _scores_2d(y):
    shape = ad.value_of(y).shape
    return ad.reshape(y, (shape[0], -1) if len(shape) > 1 else (1, -1))


def _per_item_sum(v):
    return ad.sum_(v, axis=1)


def unsupervised_loss(y_real, y_fake, ys_real=None, ys_fake=None):
    """``E[log y_S + sum_t log y_t] + E[log(1 - y^_S) + sum_t log(1 - y^_t)]``.

    Scores are per-step probabilities shaped ``(batch, steps)`` (a trailing
    unit axis is allowed); they are clamped to ``[1e-7, 1 - 1e-7]`` before
    the logarithm. Static scores are optional.
    """
    real = ad.mean(_per_item_sum(_log_scores(_scores_2d(y_real))))
    fake = ad.mean(_per_item_sum(_log_scores(ad.sub(1.0, _scores_2d(y_fake)))))
    total = ad.add(real, fake)
    if ys_real is not None and np.asarray(ad.value_of(ys_real)).size:
        total = ad.add(total, ad.mean(_log_scores(ys_real)))
    if ys_fake is not None and np.asarray(ad.value_of(ys_fake)).size:
        total = ad.add(total, ad.mean(_log_scores(ad.sub(1.0, ys_fake))))
    return total


def generator_adversarial_loss(y_fake):
    """Non-saturating generator objective ``-E[sum_t log y^_t]``."""
    return ad.neg(ad.mean(_per_item_sum(_log_scores(_scores_2d(y_fake)))))


# ---------------------------------------------------------------- model


@dataclass(eq=False)
class TimeGanModel:
    params: dict
    n_channels: int
    hidden: int = 24
    seed: int = 0
    steps_trained: dict = field(default_factory=lambda: {"embedding": 0, "supervised": 0, "joint": 0})

    @classmethod
    def init(cls, n_channels: int, hidden: int = 24, seed: int = 0) -> "TimeGanModel":
        gen = substream(seed, "timegan", "init")
        dims = {
            "embedder": (n_channels, hidden),
            "recovery": (hidden, n_channels),
            "generator": (n_channels, hidden),
            "supervisor": (hidden, hidden),
            "discriminator": (hidden, 1),
        }
        params = {}
        for name in NETWORKS:
            d_in, d_out = dims[name]
            params[f"{name}.wx"] = standard_normal(gen, (d_in, 3 * hidden)) / np.sqrt(d_in)
            params[f"{name}.wh"] = standard_normal(gen, (hidden, 3 * hidden)) / np.sqrt(hidden)
            params[f"{name}.b"] = np.zeros(3 * hidden)
            params[f"{name}.wo"] = standard_normal(gen, (hidden, d_out)) / np.sqrt(hidden)
            params[f"{name}.bo"] = np.zeros(d_out)
        return cls(params, n_channels, hidden, seed)

    def network(self, params, name, x, activation="sigmoid"):
        """Recurrent layer plus per-step projection; ``activation=None`` returns logits."""
        h = ad.gru_sequence(x, params[f"{name}.wx"], params[f"{name}.wh"], params[f"{name}.b"])
        out = ad.add(ad.matmul(h, params[f"{name}.wo"]), params[f"{name}.bo"])
        return ad.sigmoid(out) if activation == "sigmoid" else out

    def embed(self, params, x):
        return self.network(params, "embedder", x)

    def recover(self, params, h):
        return self.network(params, "recovery", h)

    def supervise(self, params, h):
        """Next-step latents, shifted so that position t holds the estimate
        of h_t made from h_{t-1} (position 0 repeats the input)."""
        nxt = self.network(params, "supervisor", h)
        return ad.concat([h[:, :1], nxt[:, :-1]], axis=1)

    def generate_latent(self, params, z):
        return self.network(params, "generator", z)

    def discriminate(self, params, h):
        return ad.reshape(self.network(params, "discriminator", h), ad.value_of(h).shape[:2])

    def synthetic_latent(self, params, z):
        # supervisor rolls the generated latents one step forward
        return self.network(params, "supervisor", self.generate_latent(params, z))

    def sample_noise(self, gen, n: int, steps: int) -> np.ndarray:
        return uniform_open(gen, (n, steps, self.n_channels))

    def hyperparameters(self) -> dict:
        return {"n_channels": self.n_channels, "hidden": self.hidden, "seed": self.seed}


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TimeGanTrainConfig:
    embedding_steps: int = 500
    supervised_steps: int = 500
    joint_steps: int = 1000
    eta: float = 10.0
    reconstruction_weight: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 32
    hidden: int = 24
    seed: int = 0
    discriminator_threshold: float = 0.15

    def __post_init__(self):
        counts = (self.embedding_steps, self.supervised_steps, self.joint_steps)
        if any(c < 0 for c in counts):
            raise ValueError("phase step counts must be >= 0")
        if self.eta < 0 or self.reconstruction_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.hidden < 1:
            raise ValueError("learning_rate, batch_size and hidden must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _subset(params: dict, networks) -> list:
    return [k for k in params if k.split(".")[0] in networks]


class _Trainer:
    def __init__(self, model: TimeGanModel, data: np.ndarray, cfg: TimeGanTrainConfig):
        self.model, self.data, self.cfg = model, data, cfg
        self.gen = substream(cfg.seed, "timegan", "train")
        self.opts = {}
        self.history = {"embedding": [], "supervised": [], "joint_generator": [], "joint_discriminator": []}

    def _opt(self, key, names):
        if key not in self.opts:
            self.opts[key] = Adam({k: self.model.params[k] for k in names}, lr=self.cfg.learning_rate)
        opt = self.opts[key]
        # other optimizers may have moved shared weights since the last step
        opt.params = {k: self.model.params[k] for k in names}
        return opt

    def _batch(self):
        n = self.data.shape[0]
        idx = self.gen.choice(n, size=min(self.cfg.batch_size, n), replace=False)
        return self.data[np.sort(idx)]

    def _update(self, key, names, loss_fn, phase):
        opt = self._opt(key, names)
        tape = Tape()
        leaves = dict(self.model.params)
        for k in names:
            leaves[k] = tape.param(self.model.params[k])
        try:
            loss = loss_fn(leaves)
        except NumericError as exc:
            raise DivergenceError(f"{phase}: {exc}", self.history) from exc
        grads = tape.gradients(loss, [leaves[k] for k in names])
        opt.step(dict(zip(names, grads)))
        self.model.params.update(opt.params)
        return float(loss)

    def embedding_phase(self, steps):
        m = self.model
        names = _subset(m.params, ("embedder", "recovery"))
        for _ in range(steps):
            x = self._batch()
            loss = self._update("embedding", names, lambda p: reconstruction_loss(x, m.recover(p, m.embed(p, x))), "embedding")
            self.history["embedding"].append(loss)
            m.steps_trained["embedding"] += 1

    def supervised_phase(self, steps):
        m = self.model
        names = _subset(m.params, ("supervisor", "embedder"))
        for _ in range(steps):
            x = self._batch()

            def loss_fn(p):
                h = m.embed(p, x)
                return supervised_loss(h, m.supervise(p, h))

            self.history["supervised"].append(self._update("supervised", names, loss_fn, "supervised"))
            m.steps_trained["supervised"] += 1

    def joint_phase(self, steps):
        m, cfg = self.model, self.cfg
        if steps and m.steps_trained["embedding"] == 0:
            raise PhaseOrderError("joint training needs a trained embedder; run the embedding phase first")
        g_names = _subset(m.params, ("generator", "supervisor", "embedder", "recovery"))
        d_names = _subset(m.params, ("discriminator",))
        for _ in range(steps):
            x = self._batch()
            z = m.sample_noise(self.gen, x.shape[0], x.shape[1])

            def gen_loss(p):
                h = m.embed(p, x)
                adv = generator_adversarial_loss(m.discriminate(p, m.synthetic_latent(p, z)))
                sup = supervised_loss(h, m.supervise(p, h))
                rec = reconstruction_loss(x, m.recover(p, h))
                return adv + cfg.eta * sup + cfg.reconstruction_weight * rec

            self.history["joint_generator"].append(self._update("generator", g_names, gen_loss, "joint"))

            def disc_loss(p):
                real = m.discriminate(p, m.embed(p, x))
                fake = m.discriminate(p, m.synthetic_latent(p, z))
                return ad.neg(unsupervised_loss(real, fake))

            current = float(disc_loss(m.params))
            if current > cfg.discriminator_threshold:
                current = self._update("discriminator", d_names, disc_loss, "joint")
            self.history["joint_discriminator"].append(current)
            m.steps_trained["joint"] += 1


def train_timegan(windows: WindowSet | np.ndarray, cfg: TimeGanTrainConfig):
    """Train all five networks in three phases; returns ``(model, histories)``."""
    data = windows.windows if isinstance(windows, WindowSet) else np.asarray(windows, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] < 1:
        raise ValueError("need at least one (steps, channels) window")
    model = TimeGanModel.init(data.shape[2], cfg.hidden, cfg.seed)
    trainer = _Trainer(model, data, cfg)
    trainer.embedding_phase(cfg.embedding_steps)
    trainer.supervised_phase(cfg.supervised_steps)
    trainer.joint_phase(cfg.joint_steps)
    return model, trainer.history


def sample_windows_gan(model: TimeGanModel, n_windows: int, steps: int, seed: int) -> np.ndarray:
    """Decode generated latents to data space; window ``i`` uses substream
    ``(seed, 'window', i)``. Outputs are unclipped recovery activations."""
    if n_windows == 0:
        return np.zeros((0, steps, model.n_channels))
    z = np.concatenate(
        [model.sample_noise(substream(seed, "timegan", "window", i), 1, steps) for i in range(n_windows)]
    )
    return model.recover(model.params, model.synthetic_latent(model.params, z))


def generate_rows_gan(
    model: TimeGanModel, n_windows: int, params: NormalizationParams, seed: int, steps: int = 24, lineage=()
) -> TimeSeriesDataset:
    windows = sample_windows_gan(model, n_windows, steps, seed)
    return rows_from_windows(windows, params, "timegan", lineage)


class TimeGanAugmenter(BaseEstimator):
    """Estimator wrapper around :func:`train_timegan` and window sampling."""

    def __init__(
        self,
        embedding_steps=500,
        supervised_steps=500,
        joint_steps=1000,
        eta=10.0,
        reconstruction_weight=1.0,
        learning_rate=1e-3,
        batch_size=32,
        hidden=24,
        random_state=0,
    ):
        self.embedding_steps = embedding_steps
        self.supervised_steps = supervised_steps
        self.joint_steps = joint_steps
        self.eta = eta
        self.reconstruction_weight = reconstruction_weight
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.hidden = hidden
        self.random_state = random_state

    def config(self) -> TimeGanTrainConfig:
        return TimeGanTrainConfig(
            self.embedding_steps,
            self.supervised_steps,
            self.joint_steps,
            self.eta,
            self.reconstruction_weight,
            self.learning_rate,
            self.batch_size,
            self.hidden,
            int(self.random_state or 0),
        )

    def fit(self, X, y=None):
        if isinstance(X, WindowSet):
            X = X.windows
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError("expected windows of shape (n_windows, steps, channels)")
        self.model_, self.history_ = train_timegan(X, self.config())
        self.window_shape_ = X.shape[1:]
        return self

    def sample(self, n_windows: int, random_state=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        seed = derive_seed(int(self.random_state or 0), "sample") if random_state is None else int(random_state)
        return np.clip(sample_windows_gan(self.model_, n_windows, self.window_shape_[0], seed), 0.0, 1.0)
