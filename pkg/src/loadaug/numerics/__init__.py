"""Tensor math shared by the generative models."""

from . import autodiff as ad
from .autodiff import NumericError, Tape, Var, backward_gradients
from .fourier import Spectrum, dft, inverse_dft, naive_dft
from .gradcheck import finite_difference_check
from .optim import Adam, AdamState, adam_step
from .rng import derive_seed, standard_normal, substream, uniform_open

__all__ = [
    "ad",
    "Adam",
    "AdamState",
    "NumericError",
    "Spectrum",
    "Tape",
    "Var",
    "adam_step",
    "backward_gradients",
    "derive_seed",
    "dft",
    "finite_difference_check",
    "inverse_dft",
    "naive_dft",
    "standard_normal",
    "substream",
    "uniform_open",
]
