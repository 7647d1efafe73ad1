from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, Var, value_of


def _as_list(point):
    if isinstance(point, (list, tuple)):
        return [np.array(p, dtype=np.float64) for p in point]
    return [np.array(point, dtype=np.float64)]


def finite_difference_check(
    function: Callable[..., Var | np.ndarray],
    point,
    step: float = 1e-5,
    analytic: Sequence[np.ndarray] | None = None,
    floor: float = 1e-12,
) -> float:
    """Largest relative gap between tape gradients and central differences.

    ``function`` receives one argument per array in ``point`` and must return
    a scalar. The error for each coordinate is
    ``|analytic - numeric| / max(|analytic|, floor)``. Pass ``analytic`` to
    audit an externally supplied gradient instead of the tape's.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    arrays = _as_list(point)
    if analytic is None:
        tape = Tape()
        leaves = [tape.param(a) for a in arrays]
        out = function(*leaves)
        analytic = tape.gradients(out, leaves)
    analytic = [np.asarray(g, dtype=np.float64) for g in analytic]

    def evaluate(args):
        f = float(np.asarray(value_of(function(*args))).reshape(()))
        if not np.isfinite(f):
            raise FloatingPointError("function is not finite at a probe point")
        return f

    worst = 0.0
    for which, (a, g) in enumerate(zip(arrays, analytic)):
        for idx in np.ndindex(a.shape):
            probe = [x.copy() for x in arrays]
            probe[which][idx] = a[idx] + step
            f_plus = evaluate(probe)
            probe[which][idx] = a[idx] - step
            f_minus = evaluate(probe)
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(g[idx] - numeric) / max(abs(g[idx]), floor)
            worst = max(worst, err)
    return worst
