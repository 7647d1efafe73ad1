"""Discrete Fourier transforms.

Power-of-two lengths go through an iterative radix-2 decimation-in-time FFT;
any other length (the 24-hour window included) is evaluated directly, which
costs O(n^2) but is negligible at these sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Spectrum:
    real: np.ndarray
    imag: np.ndarray

    @property
    def n(self) -> int:
        return self.real.shape[-1]

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, z) -> "Spectrum":
        z = np.asarray(z, dtype=np.complex128)
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _radix2(z: np.ndarray, sign: float) -> np.ndarray:
    n = z.shape[-1]
    lead = z.shape[:-1]
    z = z[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = z.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        z = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return z


def _direct(z: np.ndarray, sign: float) -> np.ndarray:
    n = z.shape[-1]
    jk = np.outer(np.arange(n), np.arange(n)) % n  # exact phase reduction
    w = np.exp(sign * 2j * np.pi * jk / n)
    return z @ w


def _transform(z: np.ndarray, sign: float, axis: int) -> np.ndarray:
    z = np.moveaxis(np.asarray(z, dtype=np.complex128), axis, -1)
    n = z.shape[-1]
    if n < 1:
        raise ValueError("cannot transform an empty signal")
    out = _radix2(z, sign) if _is_pow2(n) else _direct(z, sign)
    return np.moveaxis(out, -1, axis)


def dft(signal, axis: int = -1) -> Spectrum:
    """X_k = sum_j x_j exp(-2 pi i j k / n) along ``axis``.

    Accepts real or complex input of any rank.
    """
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ValueError("cannot transform an empty signal")
    return Spectrum.from_complex(_transform(signal, -1.0, axis))


def inverse_dft(spectrum: Spectrum, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`dft`; returns a complex array."""
    z = spectrum.to_complex()
    n = z.shape[axis]
    return _transform(z, 1.0, axis) / n


def naive_dft(signal) -> Spectrum:
    """Textbook double loop, kept as an independent reference."""
    x = [complex(v) for v in np.asarray(signal).ravel()]
    n = len(x)
    if n == 0:
        raise ValueError("cannot transform an empty signal")
    out = []
    for k in range(n):
        acc = 0j
        for j, xj in enumerate(x):
            angle = -2.0 * np.pi * ((j * k) % n) / n
            acc += xj * complex(np.cos(angle), np.sin(angle))
        out.append(acc)
    return Spectrum.from_complex(np.array(out))
