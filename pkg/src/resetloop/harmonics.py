"""Harmonic content of the reset-triggered signal.

In steady state the trigger signal splits into the base-linear sinusoid and a
nonlinear part driven by the reset jumps. The jumps form a half-wave
antisymmetric stair-step whose odd harmonics pass through ``T_beta``.

Phasors use the sine convention: ``P`` stands for ``Im(P exp(j n w t))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import welch

from .errors import DegenerateFirstHarmonic, EmptyResetSet, NonIntegerPeriods
from .linsys import tf_eval
from .reset_core import LoopTopology, ResetElement


@dataclass(frozen=True)
class HarmonicRatio:
    frequency: float
    order: int
    beta: float


@dataclass
class SpectrumReport:
    base_frequency: float
    harmonic_magnitudes: dict
    phasors: dict
    psd: tuple
    """``(freq_hz, power_density)`` arrays."""
    window: tuple = field(default=(0, 0))
    """Sample range ``[start, stop)`` used for the harmonic bins."""

    def normalized(self) -> dict:
        """Amplitudes relative to the first harmonic."""
        a1 = self.harmonic_magnitudes.get(1, 0.0)
        if a1 <= 0:
            raise DegenerateFirstHarmonic("first harmonic vanishes")
        return {n: a / a1 for n, a in self.harmonic_magnitudes.items()}


def t_alpha_row(top: LoopTopology, w: float) -> np.ndarray:
    """``C_sigma C_R (jwI - A_R)^{-1} (A_rho - I) S_bl`` at ``w``, shape ``(n_c,)``."""
    if not w > 0:
        raise ValueError("w must be positive")
    r = top.reset
    n = r.n_c
    res = np.linalg.solve(1j * w * np.eye(n) - r.A_R, r.A_rho - np.eye(n))
    return (r.C_R @ res)[0] * top.c_sigma_at(w) * top.bls_sensitivity_at(w)


def t_beta_row(top: LoopTopology, w: float) -> np.ndarray:
    return t_alpha_row(top, w) * (1j * w)


def t_beta(top: LoopTopology, w: float):
    """``T_alpha(w) jw``; a complex scalar for single-state reset elements, else the row."""
    row = t_beta_row(top, w)
    return complex(row[0]) if row.size == 1 else row


def _cs_t_beta_norm(top: LoopTopology, w: float) -> float:
    return float(abs(tf_eval(top.cs, w)) * np.linalg.norm(t_beta_row(top, w)))


def beta_n(top: LoopTopology, w: float, n: int = 3) -> HarmonicRatio:
    """Ratio of the ``n``-th to the first harmonic gain of the nonlinear part, per unit order."""
    if n < 2:
        raise ValueError("order must be at least 2")
    den = n * _cs_t_beta_norm(top, w)
    if den < 1e-300:
        raise DegenerateFirstHarmonic(f"|Cs T_beta| vanishes at w={w:g}")
    return HarmonicRatio(w, n, _cs_t_beta_norm(top, n * w) / den)


def beta_curve(top: LoopTopology, freqs_hz: Sequence[float], n: int = 3) -> np.ndarray:
    return np.array([beta_n(top, 2 * np.pi * f, n).beta for f in freqs_hz])


def target_shaper_magnitude(top: LoopTopology, w: float, sigma_beta: float, n: int = 3) -> float:
    """Shaper gain ``n sigma_beta / |T_beta(w)|`` that targets ``beta_n = sigma_beta``."""
    if not 0 < sigma_beta < 1:
        raise ValueError("sigma_beta must lie in (0, 1)")
    tb = float(np.linalg.norm(t_beta_row(top, w)))
    if tb < 1e-300:
        raise DegenerateFirstHarmonic(f"|T_beta| vanishes at w={w:g}")
    return n * sigma_beta / tb


def stair_step_spectrum(reset_states, reset: ResetElement, w: float, n: int) -> np.ndarray:
    """Phasor of the ``n``-th harmonic of the reset stair-step, shape ``(n_c,)``.

    ``reset_states`` holds ``(t_i, x(t_i^-))`` for the resets of one half
    cycle. Half-wave antisymmetry leaves only odd harmonics, so even orders
    return zeros.
    """
    states = list(reset_states)
    if not states:
        raise EmptyResetSet("no resets in the half cycle")
    jump = reset.A_rho - np.eye(reset.n_c)
    out = np.zeros(reset.n_c, dtype=complex)
    if n % 2 == 0:
        return out
    for t_i, x in states:
        out += jump @ np.asarray(x, dtype=float).reshape(-1) * np.exp(-1j * n * w * t_i)
    return 2.0 / (n * np.pi) * out


def nonlinear_harmonic(top: LoopTopology, reset_states, w: float, n: int) -> complex:
    """Predicted phasor of the ``n``-th harmonic of ``z_nl`` from simulated reset states.

    The jump enters the loop with negative feedback, hence the sign.
    """
    d = stair_step_spectrum(reset_states, top.reset, w, n)
    return complex(-tf_eval(top.cs, n * w) * (t_beta_row(top, n * w) @ d))


def integer_period_window(n_samples: int, fs: float, base_hz: float, min_periods: int = 10,
                          rtol: float = 1e-4) -> int:
    """Longest trailing sample count spanning an integer number of periods."""
    per = fs / base_hz
    # floor division of floats can drop a whole period (100000 // (1e4/3) == 29)
    for m in range(int(np.floor(n_samples / per * (1 + 1e-12))), min_periods - 1, -1):
        exact = m * per
        if abs(exact - round(exact)) <= rtol * exact and round(exact) <= n_samples:
            return int(round(exact))
    raise NonIntegerPeriods(f"no window of >= {min_periods} periods of {base_hz} Hz fits within {rtol:g}")


def harmonic_decompose(trace, channel: str, base_hz: float, max_order: int = 10,
                       start: int | None = None) -> SpectrumReport:
    """Exact-bin harmonic amplitudes and a Welch PSD of one trace channel.

    The harmonic window is the longest integer-period stretch ending at the
    last sample, taken after ``start`` (the measurement window by default).
    """
    x_all = np.asarray(trace.channels[channel], dtype=float)
    fs = trace.config.sample_rate
    k0 = trace.measure_start() if start is None else start
    N = integer_period_window(x_all.size - k0, fs, base_hz)
    x = x_all[-N:]
    t = trace.t[-N:]
    mags, phs = {}, {}
    for n in range(1, max_order + 1):
        c = 2.0 / N * np.sum(x * np.exp(-2j * np.pi * n * base_hz * t))
        phs[n] = 1j * c
        mags[n] = float(abs(c))
    seg = int(round(2 * fs / base_hz))
    seg = min(seg, x_all.size - k0)
    f, p = welch(x_all[k0:], fs=fs, window="hann", nperseg=seg, noverlap=seg // 2)
    return SpectrumReport(base_hz, mags, phs, (f, p), (x_all.size - N, x_all.size))


def base_linear_trigger(top: LoopTopology, w: float, amplitude: float, t: np.ndarray) -> np.ndarray:
    """Steady base-linear trigger signal ``|R||S_ls| sin(wt + angle S_ls)``."""
    s_ls = tf_eval(top.cs, w) * tf_eval(top.c1, w) * top.bls_sensitivity_at(w)
    return amplitude * abs(s_ls) * np.sin(w * t + np.angle(s_ls))
