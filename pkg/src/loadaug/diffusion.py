"""Denoising diffusion generator for normalized daily windows.

The denoiser predicts the clean window directly (x0 parameterization). The
reverse sampler reconstructs x_{t-1} from that prediction with fixed
coefficients, and training minimizes a time-reweighted squared error plus a
frequency-domain error on the prediction.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import NormalizationParams, TimeSeriesDataset, WindowSet, rows_from_windows
from .numerics import Adam, Tape, ad
from .numerics.autodiff import NumericError
from .numerics.rng import derive_seed, standard_normal, substream

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Arrays are indexed by diffusion step: ``beta[t]`` for ``1 <= t <= T``.

    Index 0 holds the empty-product conventions ``beta[0] = 0``,
    ``alpha_bar[0] = 1``. ``one_minus_alpha_bar`` is computed through
    ``expm1`` of the accumulated ``log1p(-beta)`` to avoid cancellation at
    small t.
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    one_minus_alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return self.beta.shape[0] - 1

    def check_step(self, t) -> np.ndarray:
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer) or np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"diffusion step must be an integer in [1, {self.T}]")
        return t


def build_schedule(T: int = 200, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    return schedule_from_betas(np.linspace(beta_start, beta_end, T))


def schedule_from_betas(betas) -> NoiseSchedule:
    """Schedule for an explicit beta sequence ``beta_1 .. beta_T``."""
    betas = np.asarray(betas, dtype=np.float64).ravel()
    if betas.size < 1 or np.any(betas <= 0) or np.any(betas >= 1):
        raise ValueError("betas must lie in (0, 1)")
    beta = np.concatenate([[0.0], betas])
    log_alpha_bar = np.cumsum(np.log1p(-beta))
    alpha_bar = np.exp(log_alpha_bar)
    alpha_bar[0] = 1.0
    one_minus = -np.expm1(log_alpha_bar)
    one_minus[0] = 0.0
    arrays = [beta, 1.0 - beta, alpha_bar, one_minus]
    for a in arrays:
        a.setflags(write=False)
    return NoiseSchedule(*arrays)


def _per_item(coef: np.ndarray, like: np.ndarray) -> np.ndarray:
    coef = np.asarray(coef, dtype=np.float64)
    return coef.reshape(coef.shape + (1,) * (like.ndim - coef.ndim))


def forward_diffuse(x0, t, noise, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.

    ``t`` is a scalar or one step per leading batch item.
    """
    t = sched.check_step(t)
    x0, noise = np.asarray(x0, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValueError("x0 and noise shapes differ")
    a = _per_item(np.sqrt(sched.alpha_bar[t]), x0)
    b = _per_item(np.sqrt(sched.one_minus_alpha_bar[t]), x0)
    return a * x0 + b * noise


def reverse_coefficients(sched: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """Weights on (x0_hat, x_t, z) of the reverse step, as printed.

    The noise weight is ``(1 - abar_{t-1}) / (1 - abar_t) * beta_t`` with no
    square root. At t = 1 the weights collapse to exactly ``(1, 0, 0)``.
    """
    t = int(sched.check_step(t))
    if t == 1:
        return 1.0, 0.0, 0.0
    beta = sched.beta[t]
    denom = sched.one_minus_alpha_bar[t]
    prev = sched.one_minus_alpha_bar[t - 1]
    c_x0 = np.sqrt(sched.alpha_bar[t - 1]) * beta / denom
    c_xt = np.sqrt(sched.alpha[t]) * prev / denom
    c_z = prev / denom * beta
    return float(c_x0), float(c_xt), float(c_z)


def reverse_step(x_t, t: int, x0_hat, z, sched: NoiseSchedule) -> np.ndarray:
    c_x0, c_xt, c_z = reverse_coefficients(sched, t)
    if t == 1:
        return np.array(x0_hat, dtype=np.float64, copy=True)
    return c_x0 * np.asarray(x0_hat) + c_xt * np.asarray(x_t) + c_z * np.asarray(z)


# ---------------------------------------------------------------- loss


def loss_weights(sched: NoiseSchedule, t, lam: float = 1.0, cap: float | None = None) -> np.ndarray:
    """w_t = lam * alpha_t * (1 - abar_t) / beta_t**2, optionally capped."""
    t = sched.check_step(t)
    w = lam * sched.alpha[t] * sched.one_minus_alpha_bar[t] / sched.beta[t] ** 2
    return w if cap is None else np.minimum(w, cap)


def diffusion_loss(
    x0,
    x0_hat,
    t,
    sched: NoiseSchedule,
    lam: float = 1.0,
    lam1: float = 1.0,
    lam2: float = 0.01,
    weight_cap: float | None = None,
):
    """Batch mean of ``w_t [lam1 |x0 - x0_hat|^2 + lam2 |FFT(x0) - FFT(x0_hat)|^2]``.

    Windows are ``(batch, length, channels)``; the transform runs along the
    time axis per channel and the Fourier term is the squared complex modulus
    summed over frequencies and channels. Returns a tape node when
    ``x0_hat`` is one, else a float.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 2:
        x0 = x0[None]
        x0_hat = ad.reshape(x0_hat, x0.shape)
    if tuple(ad.value_of(x0_hat).shape) != x0.shape:
        raise ValueError("x0 and x0_hat shapes differ")
    t = np.atleast_1d(sched.check_step(t))
    if t.shape[0] != x0.shape[0]:
        raise ValueError("need one diffusion step per batch item")
    w = loss_weights(sched, t, lam, weight_cap)

    diff = ad.sub(x0, x0_hat)
    spatial = ad.sum_(ad.reshape(ad.square(diff), (x0.shape[0], -1)), axis=1)
    per_item = ad.mul(spatial, lam1)
    if lam2 != 0.0:
        re = ad.dft_real(diff, axis=1)
        im = ad.dft_imag(diff, axis=1)
        spectral = ad.sum_(ad.reshape(ad.square(re) + ad.square(im), (x0.shape[0], -1)), axis=1)
        per_item = per_item + ad.mul(spectral, lam2)
    loss = ad.mean(ad.mul(per_item, w))
    if isinstance(loss, np.ndarray):
        value = float(loss)
        if not np.isfinite(value):
            raise NumericError("diffusion loss is not finite")
        return value
    return loss


# ---------------------------------------------------------------- denoiser


def step_embedding(t, dim: int = 32) -> np.ndarray:
    """Sinusoidal embedding of integer diffusion steps, shape ``(len(t), dim)``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def trend_basis(length: int, degree: int = 3) -> np.ndarray:
    """Polynomial basis over the window, columns ``u**0 .. u**degree`` with
    ``u`` spanning [-1, 1]."""
    u = np.linspace(-1.0, 1.0, length) if length > 1 else np.zeros(1)
    return np.stack([u**k for k in range(degree + 1)], axis=1)


@dataclass(eq=False)
class DenoiserModel:
    """Residual MLP mapping (x_t, t) to x0_hat.

    Two hidden layers on the flattened noisy window concatenated with a
    step embedding. The trend head emits polynomial coefficients per channel;
    the seasonal head adds a full-resolution residual. Their sum is scaled by
    ``c_out(t)`` and added to a skip connection ``c_skip(t) * x_t``; both
    factors follow the usual variance-preserving preconditioning for data of
    scale ``data_scale``.
    """

    params: dict
    window_length: int
    n_channels: int
    hidden: int = 128
    emb_dim: int = 32
    degree: int = 3
    data_scale: float = 0.5

    @classmethod
    def init(cls, window_length, n_channels, hidden=128, emb_dim=32, degree=3, seed=0):
        gen = substream(seed, "diffusion", "init")
        d_in = window_length * n_channels + emb_dim
        d_out = window_length * n_channels

        def dense(fan_in, fan_out, scale=1.0):
            return standard_normal(gen, (fan_in, fan_out)) * scale * np.sqrt(1.0 / fan_in)

        params = {
            "w_in": dense(d_in, hidden),
            "b_in": np.zeros(hidden),
            "w_hid": dense(hidden, hidden),
            "b_hid": np.zeros(hidden),
            "w_trend": dense(hidden, (degree + 1) * n_channels, 0.1),
            "b_trend": np.zeros((degree + 1) * n_channels),
            "w_season": dense(hidden, d_out, 0.1),
            "b_season": np.zeros(d_out),
        }
        return cls(params, window_length, n_channels, hidden, emb_dim, degree)

    def skip_scale(self, sched: NoiseSchedule, t) -> np.ndarray:
        ab = sched.alpha_bar[t]
        s2 = self.data_scale**2
        return np.sqrt(ab) * s2 / (ab * s2 + sched.one_minus_alpha_bar[t])

    def output_scale(self, sched: NoiseSchedule, t) -> np.ndarray:
        # shrinks the learned correction where x_t already pins down x0
        ab, om = sched.alpha_bar[t], sched.one_minus_alpha_bar[t]
        return self.data_scale * np.sqrt(om) / np.sqrt(ab * self.data_scale**2 + om)

    def forward(self, params, x_t, t, sched: NoiseSchedule):
        """Works on tape nodes (training) or plain arrays (sampling)."""
        x_t = np.asarray(x_t, dtype=np.float64)
        b = x_t.shape[0]
        L, C = self.window_length, self.n_channels
        t = np.broadcast_to(np.asarray(t), (b,))
        inp = np.concatenate([x_t.reshape(b, L * C), step_embedding(t, self.emb_dim)], axis=1)
        h1 = ad.silu(ad.matmul(inp, params["w_in"]) + params["b_in"])
        h2 = h1 + ad.silu(ad.matmul(h1, params["w_hid"]) + params["b_hid"])
        coef = ad.reshape(ad.matmul(h2, params["w_trend"]) + params["b_trend"], (b, self.degree + 1, C))
        trend = ad.matmul(trend_basis(L, self.degree), coef)
        season = ad.reshape(ad.matmul(h2, params["w_season"]) + params["b_season"], (b, L, C))
        skip = self.skip_scale(sched, t)[:, None, None] * x_t
        out = ad.mul(ad.add(trend, season), self.output_scale(sched, t)[:, None, None])
        return ad.add(out, skip)

    def __call__(self, x_t, t, sched: NoiseSchedule) -> np.ndarray:
        return self.forward(self.params, x_t, t, sched)

    def hyperparameters(self) -> dict:
        return {
            "window_length": self.window_length,
            "n_channels": self.n_channels,
            "hidden": self.hidden,
            "emb_dim": self.emb_dim,
            "degree": self.degree,
            "data_scale": self.data_scale,
        }


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class DiffusionTrainConfig:
    T: int = 200
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    lam: float = 1.0
    lam1: float = 1.0
    lam2: float = 0.01
    seed: int = 0
    beta_start: float = 1e-4
    beta_end: float = 0.02
    hidden: int = 128
    weight_cap: float | None = None
    lr_schedule: str = "cosine"
    ema_decay: float = 0.999

    def __post_init__(self):
        positive = ("T", "batch_size", "learning_rate", "lam", "hidden")
        if any(getattr(self, k) <= 0 for k in positive) or self.epochs < 0:
            raise ValueError("diffusion config values must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")
        if self.lam1 < 0 or self.lam2 < 0 or self.lam1 + self.lam2 <= 0:
            raise ValueError("need lam1, lam2 >= 0 with lam1 + lam2 > 0")

    def to_dict(self) -> dict:
        return asdict(self)


class DivergenceError(FloatingPointError):
    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(f"{message}; loss trace tail: {self.history[-5:]}")


def train_diffusion(windows: WindowSet | np.ndarray, cfg: DiffusionTrainConfig):
    """Fit a :class:`DenoiserModel`; returns ``(model, schedule, loss_history)``.

    ``loss_history`` holds the mean batch loss of every epoch. The returned
    weights are an exponential moving average of the Adam iterates
    (``ema_decay = 0`` keeps the last iterate); with ``lr_schedule='cosine'``
    the step size decays to zero over the run.
    """
    data = windows.windows if isinstance(windows, WindowSet) else np.asarray(windows, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] < 1:
        raise ValueError("need at least one (length, channels) window")
    n, L, C = data.shape
    sched = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    model = DenoiserModel.init(L, C, hidden=cfg.hidden, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.learning_rate)
    gen = substream(cfg.seed, "diffusion", "train")
    names = list(model.params)
    history: list[float] = []
    ema = {k: v.copy() for k, v in opt.params.items()}
    total_steps = cfg.epochs * -(-n // cfg.batch_size)
    step = 0
    for epoch in range(cfg.epochs):
        order = gen.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            x0 = data[order[start : start + cfg.batch_size]]
            b = x0.shape[0]
            t = gen.integers(1, cfg.T + 1, size=b)
            noise = standard_normal(gen, x0.shape)
            x_t = forward_diffuse(x0, t, noise, sched)
            tape = Tape()
            leaves = {k: tape.param(opt.params[k]) for k in names}
            try:
                x0_hat = model.forward(leaves, x_t, t, sched)
                loss = diffusion_loss(x0, x0_hat, t, sched, cfg.lam, cfg.lam1, cfg.lam2, cfg.weight_cap)
            except NumericError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}", history) from exc
            grads = tape.gradients(loss, [leaves[k] for k in names])
            if cfg.lr_schedule == "cosine":
                lr = 0.5 * cfg.learning_rate * (1.0 + np.cos(np.pi * step / total_steps))
                opt.state = replace(opt.state, lr=max(lr, 1e-12))
            opt.step(dict(zip(names, grads)))
            step += 1
            # warm-up so early averages are not dominated by the initial weights
            decay = min(cfg.ema_decay, (1.0 + step) / (10.0 + step))
            for k in names:
                ema[k] = decay * ema[k] + (1.0 - decay) * opt.params[k]
            losses.append(float(loss))
        history.append(float(np.mean(losses)))
        if not np.isfinite(history[-1]):
            raise DivergenceError(f"epoch {epoch}: non-finite loss", history)
    model.params = ema if cfg.ema_decay > 0 else dict(opt.params)
    return model, sched, history


def sample_windows(
    model: DenoiserModel,
    sched: NoiseSchedule,
    n_windows: int,
    seed: int,
    clip_denoised: bool = False,
    noise: str = "printed",
) -> np.ndarray:
    """Run the reverse chain from pure noise; returns unclipped windows.

    Window ``i`` draws from its own substream ``(seed, 'window', i)`` so results
    do not depend on how windows are batched. ``clip_denoised`` clamps each
    x0 prediction to [0, 1]; ``noise='sqrt'`` swaps the printed noise weight
    for its square root (the usual posterior standard deviation).
    """
    if noise not in ("printed", "sqrt"):
        raise ValueError("noise must be 'printed' or 'sqrt'")
    L, C = model.window_length, model.n_channels
    if n_windows == 0:
        return np.zeros((0, L, C))
    # one draw per window covers the start point and every later z
    draws = np.stack(
        [standard_normal(substream(seed, "diffusion", "window", i), (sched.T, L, C)) for i in range(n_windows)],
        axis=1,
    )
    x = draws[0]
    for t in range(sched.T, 0, -1):
        x0_hat = model(x, t, sched)
        if clip_denoised:
            x0_hat = np.clip(x0_hat, 0.0, 1.0)
        if t == 1:
            x = reverse_step(x, t, x0_hat, None, sched)
            continue
        z = draws[sched.T - t + 1]
        if noise == "sqrt":
            # the printed weight equals the posterior variance; use its root
            z = z / np.sqrt(reverse_coefficients(sched, t)[2])
        x = reverse_step(x, t, x0_hat, z, sched)
    return x


def generate_rows(
    model: DenoiserModel,
    sched: NoiseSchedule,
    n_windows: int,
    params: NormalizationParams,
    seed: int,
    lineage=(),
) -> TimeSeriesDataset:
    """Sample ``n_windows`` windows, clip to [0, 1], flatten and denormalize."""
    windows = sample_windows(model, sched, n_windows, seed)
    return rows_from_windows(windows, params, "diffusion", lineage)


# ---------------------------------------------------------------- estimator


class DiffusionAugmenter(BaseEstimator):
    """Estimator wrapper: ``fit`` on normalized windows, ``sample`` new ones.

    ``X`` is a 3-D array ``(n_windows, length, channels)`` with values in
    [0, 1] (or a :class:`WindowSet`).
    """

    def __init__(
        self,
        n_steps=200,
        epochs=2000,
        batch_size=32,
        learning_rate=1e-3,
        lam=1.0,
        lam1=1.0,
        lam2=0.01,
        beta_start=1e-4,
        beta_end=0.02,
        hidden=128,
        weight_cap=None,
        lr_schedule="cosine",
        ema_decay=0.999,
        random_state=0,
    ):
        self.n_steps = n_steps
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lam = lam
        self.lam1 = lam1
        self.lam2 = lam2
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.hidden = hidden
        self.weight_cap = weight_cap
        self.lr_schedule = lr_schedule
        self.ema_decay = ema_decay
        self.random_state = random_state

    def config(self) -> DiffusionTrainConfig:
        return DiffusionTrainConfig(
            T=self.n_steps,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lam=self.lam,
            lam1=self.lam1,
            lam2=self.lam2,
            seed=int(self.random_state or 0),
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            hidden=self.hidden,
            weight_cap=self.weight_cap,
            lr_schedule=self.lr_schedule,
            ema_decay=self.ema_decay,
        )

    def fit(self, X, y=None):
        if isinstance(X, WindowSet):
            X = X.windows
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError("expected windows of shape (n_windows, length, channels)")
        self.model_, self.schedule_, self.loss_history_ = train_diffusion(X, self.config())
        self.window_shape_ = X.shape[1:]
        return self

    def sample(self, n_windows: int, random_state=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        seed = derive_seed(int(self.random_state or 0), "sample") if random_state is None else int(random_state)
        return np.clip(sample_windows(self.model_, self.schedule_, n_windows, seed), 0.0, 1.0)
