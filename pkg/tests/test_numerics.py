import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadaug.numerics import (
    AdamState,
    NumericError,
    Tape,
    ad,
    adam_step,
    backward_gradients,
    dft,
    finite_difference_check,
    inverse_dft,
    naive_dft,
    standard_normal,
    substream,
)


# ---------------------------------------------------------------- autodiff


def test_square_gradient():
    tape = Tape()
    x = tape.param(3.0)
    (g,) = backward_gradients(tape, x * x)
    assert g == pytest.approx(6.0)


def test_product_rule():
    tape = Tape()
    x, y = tape.param(2.0), tape.param(5.0)
    gx, gy = backward_gradients(tape, x * y)
    assert (gx, gy) == (pytest.approx(5.0), pytest.approx(2.0))


def test_non_scalar_output_rejected():
    tape = Tape()
    x = tape.param(np.ones(3))
    with pytest.raises(ValueError):
        tape.gradients(x * 2.0)


def test_disconnected_param_gets_zero():
    tape = Tape()
    x, _ = tape.param(1.5), tape.param(np.ones(2))
    gx, gu = tape.gradients(x * x)
    assert gx == pytest.approx(3.0)
    np.testing.assert_array_equal(gu, np.zeros(2))


def test_tape_reusable_after_backward():
    tape = Tape()
    x = tape.param(2.0)
    y = ad.exp(x) * x
    first = tape.gradients(y)
    second = tape.gradients(y)
    np.testing.assert_array_equal(first[0], second[0])


def test_shared_subexpression_visited_once():
    tape = Tape()
    x = tape.param(2.0)
    h = x * x
    y = h + h * 3.0
    (g,) = tape.gradients(y)
    assert g == pytest.approx(16.0)


def test_non_finite_is_error():
    tape = Tape()
    x = tape.param(-1.0)
    with np.errstate(invalid="ignore"), pytest.raises(NumericError):
        ad.log(x)


def test_untaped_ops_return_arrays():
    out = ad.tanh(ad.matmul(np.ones((2, 3)), np.ones((3, 1))))
    assert isinstance(out, np.ndarray)
    np.testing.assert_allclose(out, np.tanh(3.0) * np.ones((2, 1)))


def _mlp_loss(x, w1, b1, w2, b2, y):
    def f(W1, B1, W2, B2):
        h = ad.tanh(ad.matmul(x, W1) + B1)
        out = ad.matmul(h, W2) + B2
        return ad.mean(ad.square(out - y))

    return f


def test_two_layer_perceptron_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 4))
    y = rng.normal(size=(8, 2))
    w1, b1 = rng.normal(size=(4, 5)), rng.normal(size=5)
    w2, b2 = rng.normal(size=(5, 2)), rng.normal(size=2)
    err = finite_difference_check(_mlp_loss(x, w1, b1, w2, b2, y), [w1, b1, w2, b2], step=1e-5)
    assert err < 1e-4


# every differentiable primitive, each probed through a random linear readout
# so gradients stay O(1)
_OPS = {
    "add": (lambda a, b: a + b, 2),
    "sub": (lambda a, b: a - b, 2),
    "mul": (lambda a, b: a * b, 2),
    "div": (lambda a, b: a / (ad.exp(b) + 1.0), 2),
    "broadcast_add": (lambda a, b: a + b[0], 2),
    "matmul": (lambda a, b: ad.matmul(a, ad.transpose(b)), 2),
    "batched_matmul": (lambda a, b: ad.matmul(ad.reshape(a, (3, 1, 4)), ad.transpose(b)), 2),
    "neg": (lambda a: -a, 1),
    "power": (lambda a: ad.power(ad.exp(a), 1.5), 1),
    "square": (lambda a: ad.square(a), 1),
    "exp": (lambda a: ad.exp(a), 1),
    "log": (lambda a: ad.log(ad.exp(a) + 0.5), 1),
    "sqrt": (lambda a: ad.sqrt(ad.exp(a)), 1),
    "tanh": (lambda a: ad.tanh(a), 1),
    "sigmoid": (lambda a: ad.sigmoid(a), 1),
    "silu": (lambda a: ad.silu(a), 1),
    "sum_axis": (lambda a: ad.sum_(a, axis=0, keepdims=True) * a, 1),
    "mean": (lambda a: ad.mean(a, axis=1, keepdims=True) * a, 1),
    "l2norm": (lambda a: ad.reshape(ad.l2norm(a, axis=1), (3, 1)) * a, 1),
    "getitem": (lambda a: ad.concat([a[:, 2:], a[:, :2]], axis=1), 1),
    "stack": (lambda a, b: ad.reshape(ad.stack([a, b], axis=0)[1], (3, 4)), 2),
    "dft_real": (lambda a: ad.dft_real(a, axis=1), 1),
    "dft_imag": (lambda a: ad.dft_imag(a, axis=0), 1),
}


@pytest.mark.parametrize("name", sorted(_OPS))
def test_primitive_gradients_over_100_seeds(name):
    op, arity = _OPS[name]
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        args = [rng.uniform(-1.5, 1.5, size=(3, 4)) for _ in range(arity)]
        readout = rng.uniform(0.5, 1.5, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))

        def f(*xs):
            out = op(*xs)
            return ad.sum_(out * readout[: out.shape[0], : out.shape[1]])

        worst = max(worst, finite_difference_check(f, args, step=1e-5))
    assert worst < 1e-4, name


def test_relu_and_clip_gradients_away_from_kinks():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = rng.uniform(0.1, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
        assert finite_difference_check(lambda x: ad.sum_(ad.relu(x) * 1.3), a) < 1e-6
        assert finite_difference_check(lambda x: ad.sum_(ad.clip(x, -0.5, 0.5) ** 2), a * 0.45) < 1e-6


# ---------------------------------------------------------------- finite differences


def test_fd_quadratic_exact():
    err = finite_difference_check(lambda x: ad.sum_(ad.square(x) * 3.0), np.array([0.3, -1.2, 2.0]))
    assert err < 1e-6


def test_fd_doubled_gradient_reports_half():
    point = np.array([0.7, -1.1])
    wrong = [2 * 2 * point]
    err = finite_difference_check(lambda x: ad.sum_(ad.square(x)), point, analytic=wrong)
    assert err == pytest.approx(0.5, rel=1e-6)


def test_fd_constant_function_zero_error():
    assert finite_difference_check(lambda x: ad.sum_(x * 0.0) + 4.0, np.ones(3)) == 0.0


def test_fd_rejects_bad_step_and_nonfinite():
    with pytest.raises(ValueError):
        finite_difference_check(lambda x: ad.sum_(x), np.ones(2), step=0.0)
    with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(FloatingPointError):
        finite_difference_check(lambda x: ad.sum_(x) / 0.0, np.ones(2), analytic=[np.ones(2)])


# ---------------------------------------------------------------- Fourier


def test_dft_dc_signal():
    s = dft([1.0, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(s.real, [4, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(s.imag, 0.0, atol=1e-15)


def test_dft_impulse():
    s = dft([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(s.real, 1.0)
    np.testing.assert_allclose(s.imag, 0.0)


@pytest.mark.parametrize("n", [1, 2, 3, 8, 24, 32, 64])
def test_dft_matches_naive(n):
    x = np.random.default_rng(n).normal(size=n)
    fast, slow = dft(x), naive_dft(x)
    np.testing.assert_allclose(fast.real, slow.real, atol=1e-9)
    np.testing.assert_allclose(fast.imag, slow.imag, atol=1e-9)


def test_dft_empty_rejected():
    with pytest.raises(ValueError):
        dft([])


def test_dft_along_axis_matches_rows():
    x = np.random.default_rng(1).normal(size=(3, 24, 2))
    s = dft(x, axis=1)
    for b in range(3):
        for c in range(2):
            ref = dft(x[b, :, c])
            np.testing.assert_allclose(s.real[b, :, c], ref.real, atol=1e-12)
            np.testing.assert_allclose(s.imag[b, :, c], ref.imag, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 70), st.integers(0, 2**32 - 1))
def test_parseval_and_roundtrip(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    s = dft(x)
    lhs = np.sum(x**2)
    rhs = np.sum(s.real**2 + s.imag**2) / n
    assert abs(lhs - rhs) <= 1e-9 * max(lhs, 1e-300)
    back = inverse_dft(s)
    np.testing.assert_allclose(back.real, x, atol=1e-9)
    again = dft(back)
    np.testing.assert_allclose(again.real, s.real, atol=1e-9)
    np.testing.assert_allclose(again.imag, s.imag, atol=1e-9)


# ---------------------------------------------------------------- Adam


def test_adam_zero_gradient_is_noop():
    p = [np.array([1.0, -2.0])]
    state = AdamState.init(p)
    new, state = adam_step(p, [np.zeros(2)], state)
    np.testing.assert_array_equal(new[0], p[0])
    assert state.step == 1


def test_adam_first_step_hand_executed():
    p = [np.array(0.5)]
    new, state = adam_step(p, [np.array(1.0)], AdamState.init(p, lr=1e-3))
    # m = 0.1, v = 0.001; bias correction gives m_hat = v_hat = 1
    assert float(new[0]) == pytest.approx(0.5 - 1e-3 / (1.0 + 1e-8), abs=1e-15)


def test_adam_two_steps_monotone():
    p = [np.array(0.0)]
    state = AdamState.init(p)
    p1, state = adam_step(p, [np.array(1.0)], state)
    p2, state = adam_step(p1, [np.array(1.0)], state)
    assert float(p2[0]) < float(p1[0]) < 0.0
    assert state.step == 2


def test_adam_validation():
    with pytest.raises(ValueError):
        AdamState(beta1=1.0)
    p = [np.zeros(2)]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(3)], AdamState.init(p))
    with pytest.raises(FloatingPointError):
        adam_step(p, [np.array([np.nan, 0.0])], AdamState.init(p))


# ---------------------------------------------------------------- randomness


def test_substreams_are_reproducible_and_independent():
    a = standard_normal(substream(7, "diffusion"), 100)
    b = standard_normal(substream(7, "diffusion"), 100)
    c = standard_normal(substream(7, "timegan"), 100)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_box_muller_moments():
    z = standard_normal(substream(1, "moments"), 200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
    assert standard_normal(substream(1, "x"), (3, 5)).shape == (3, 5)


# ---------------------------------------------------------------- recurrent op


def _gru_unfused(x, wx, wh, b):
    """Same cell assembled from primitive tape ops, one step at a time."""
    H = ad.value_of(wh).shape[0]
    h = np.zeros((ad.value_of(x).shape[0], H))
    out = []
    for t in range(ad.value_of(x).shape[1]):
        gx = ad.matmul(x[:, t], wx) + b
        gh = ad.matmul(h, wh)
        z = ad.sigmoid(gx[:, :H] + gh[:, :H])
        r = ad.sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
        n = ad.tanh(gx[:, 2 * H :] + r * gh[:, 2 * H :])
        h = (1.0 - z) * n + z * h
        out.append(h)
    return ad.stack(out, axis=1)


def _gru_args(seed, batch=3, steps=5, d=2, H=4):
    rng = np.random.default_rng(seed)
    return [
        rng.normal(size=(batch, steps, d)),
        rng.normal(scale=0.7, size=(d, 3 * H)),
        rng.normal(scale=0.7, size=(H, 3 * H)),
        rng.normal(scale=0.3, size=3 * H),
    ]


def test_gru_forward_matches_stepwise_assembly():
    args = _gru_args(0)
    np.testing.assert_allclose(ad.gru_sequence(*args), _gru_unfused(*args), rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_gru_gradients_match_unfused_and_finite_differences(seed):
    args = _gru_args(seed)
    readout = np.random.default_rng(100 + seed).normal(size=(3, 5, 4))
    fused = lambda *a: ad.sum_(ad.gru_sequence(*a) * readout)  # noqa: E731
    unfused = lambda *a: ad.sum_(_gru_unfused(*a) * readout)  # noqa: E731
    tape = Tape()
    leaves = [tape.param(a) for a in args]
    g_fused = tape.gradients(fused(*leaves), leaves)
    tape = Tape()
    leaves = [tape.param(a) for a in args]
    g_unfused = tape.gradients(unfused(*leaves), leaves)
    for a, b in zip(g_fused, g_unfused):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    assert finite_difference_check(fused, args, step=1e-5, floor=1e-6) < 1e-4
