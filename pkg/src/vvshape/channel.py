"""AWGN followed by Wiener phase noise: ``z_k = (x_k + n_k) exp(j phi_k)``."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import numgrad as ng
from .rng import stream


@dataclass(frozen=True)
class ChannelParams:
    snr_db: float = 20.0
    linewidth_hz: float = 100e3
    symbol_rate_baud: float = 32e9
    seed: int = 0

    def __post_init__(self):
        if not self.symbol_rate_baud > 0:
            raise ValueError("symbol_rate_baud must be positive")
        if not self.linewidth_hz >= 0:
            raise ValueError("linewidth_hz must be non-negative")

    @property
    def noise_var(self) -> float:
        """Complex noise variance relative to unit signal power."""
        return 10.0 ** (-self.snr_db / 10.0)


@dataclass(frozen=True)
class ChannelRealization:
    noise: np.ndarray
    phase: np.ndarray

    def __len__(self):
        return len(self.phase)


def phase_variance(p: ChannelParams) -> float:
    """Per-symbol variance of the Wiener phase increments, ``2 pi dnu / R_S``."""
    return 2 * math.pi * p.linewidth_hz / p.symbol_rate_baud


def realize(p: ChannelParams, n: int, initial_phase: float | None = None,
            rng: np.random.Generator | None = None) -> ChannelRealization:
    """Draw noise and phase trajectory for ``n`` symbols.

    ``initial_phase=None`` draws phi_0 uniformly from [0, 2 pi).  Without
    an explicit ``rng`` the noise and phase streams derive from ``p.seed``.
    """
    if n <= 0:
        raise ValueError("empty symbol sequence")
    if rng is None:
        g_noise, g_phase = stream(p.seed, "noise"), stream(p.seed, "phase")
    else:
        g_noise = g_phase = rng
    var = p.noise_var
    if math.isfinite(var) and var > 0:
        noise = math.sqrt(var / 2) * (g_noise.standard_normal(n) + 1j * g_noise.standard_normal(n))
    else:
        noise = np.zeros(n, dtype=np.complex128)
    phi0 = g_phase.uniform(0, 2 * math.pi) if initial_phase is None else float(initial_phase)
    steps = math.sqrt(phase_variance(p)) * g_phase.standard_normal(n)
    steps[0] = 0.0
    return ChannelRealization(noise, phi0 + np.cumsum(steps))


def _check_power(xc):
    # 1% plus four standard errors of the sample mean
    p = np.abs(xc) ** 2
    power = float(np.mean(p))
    tol = 0.01 + 4 * float(np.std(p)) / math.sqrt(p.size)
    if abs(power - 1.0) > tol:
        warnings.warn(f"input mean power {power:.4f} deviates from 1; SNR calibration is off",
                      stacklevel=3)


def apply(x, p: ChannelParams, initial_phase: float | None = None, rng=None,
          realization: ChannelRealization | None = None):
    """Pass ``x`` through the channel.

    ``x`` is either a complex array (returns ``(z, realization)``) or a
    :class:`~vvshape.numgrad.CPair` on a tape, in which case ``z`` is built
    in the graph so gradients reach the transmitter.
    """
    if isinstance(x, ng.CPair):
        n = len(ng._val(x.re))
        xc = ng.to_complex(x)
    else:
        xc = np.asarray(x, dtype=np.complex128)
        n = xc.size
    if n == 0:
        raise ValueError("empty symbol sequence")
    _check_power(xc)
    if realization is None:
        realization = realize(p, n, initial_phase, rng)
    if isinstance(x, ng.CPair):
        noisy = ng.CPair(ng.add(x.re, realization.noise.real), ng.add(x.im, realization.noise.imag))
        return ng.cmul(noisy, ng.cexp_j(realization.phase)), realization
    return (xc + realization.noise) * np.exp(1j * realization.phase), realization
