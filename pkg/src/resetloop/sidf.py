"""First-order sinusoidal-input describing functions of reset loops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergentSensitivity, NoCrossing, SingularKernel
from .linsys import TransferFunction, expm, tf_eval
from .reset_core import LoopTopology, ResetElement

COND_LIMIT = 1e12


@dataclass(frozen=True)
class SidfPoint:
    frequency: float
    c_r1: complex
    l1: complex
    sensitivity: complex


@dataclass(frozen=True)
class MarginReport:
    bandwidth: float
    """Crossover frequency in rad/s."""
    phase_margin: float
    """Degrees."""

    @property
    def bandwidth_hz(self) -> float:
        return self.bandwidth / (2 * np.pi)


def theta_phi(reset: ResetElement, cs_phase: float, w: float) -> np.ndarray:
    """Reset-induced correction vector of the first harmonic, shape ``(n_c, 1)``.

    Parameters
    ----------
    reset : ResetElement
    cs_phase : float
        Phase of the trigger-path filter at ``w``, radians.
    w : float
        Input frequency, rad/s.
    """
    n = reset.n_c
    I = np.eye(n)
    A_rho = reset.A_rho
    if np.array_equal(A_rho, I):
        return np.zeros((n, 1), dtype=complex)
    E = expm((np.pi / w) * reset.A_R)
    Delta = I + E
    Delta_r = I + A_rho @ E
    W = w * w * I + reset.A_R @ reset.A_R
    if np.linalg.cond(Delta_r) > COND_LIMIT or np.linalg.cond(W) > COND_LIMIT:
        raise SingularKernel(f"singular describing-function kernel at w={w}")
    Omega = Delta - Delta @ np.linalg.solve(Delta_r, A_rho @ Delta)
    lead = w * np.cos(cs_phase) * I - reset.A_R * np.sin(cs_phase)
    return (-2j * w * np.exp(1j * cs_phase) / np.pi) * (Omega @ lead @ np.linalg.solve(W, reset.B_R))


def reset_sidf(reset: ResetElement, cs: TransferFunction, w: float) -> complex:
    """First-harmonic gain of the reset element inside a loop with trigger filter ``cs``."""
    phase = float(np.angle(tf_eval(cs, w)))
    th = theta_phi(reset, phase, w)
    n = reset.n_c
    corr = reset.C_R @ np.linalg.solve(reset.A_R - 1j * w * np.eye(n), th)
    return complex(corr[0, 0]) + reset.blc_response(w)


def open_loop_sidf(top: LoopTopology, w: float) -> complex:
    """``C1 (C_r1 + C2) C3 P`` (the feedback block ``C4`` is not part of it)."""
    cr1 = reset_sidf(top.reset, top.cs, w)
    return tf_eval(top.c1, w) * (cr1 + tf_eval(top.c2, w)) * tf_eval(top.c3, w) * tf_eval(top.plant, w)


def closed_sensitivity(top: LoopTopology, w: float) -> complex:
    l1 = open_loop_sidf(top, w)
    if abs(1.0 + l1) < 1e-12:
        raise DivergentSensitivity(f"1 + L1 vanishes at w={w}")
    return 1.0 / (1.0 + l1)


def sidf_point(top: LoopTopology, w: float) -> SidfPoint:
    cr1 = reset_sidf(top.reset, top.cs, w)
    l1 = tf_eval(top.c1, w) * (cr1 + tf_eval(top.c2, w)) * tf_eval(top.c3, w) * tf_eval(top.plant, w)
    if abs(1.0 + l1) < 1e-12:
        raise DivergentSensitivity(f"1 + L1 vanishes at w={w}")
    return SidfPoint(w, cr1, l1, 1.0 / (1.0 + l1))


def crossover(loop, w_lo: float, w_hi: float, scan: int = 400) -> float:
    """Lowest frequency in ``[w_lo, w_hi]`` where ``|loop(w)|`` falls through 1.

    ``loop`` is any callable returning a complex gain.
    """
    ws = np.logspace(np.log10(w_lo), np.log10(w_hi), scan)
    mags = np.array([abs(loop(w)) for w in ws])
    idx = np.flatnonzero((mags[:-1] > 1.0) & (mags[1:] <= 1.0))
    if idx.size == 0:
        raise NoCrossing(f"|L| does not cross 0 dB in [{w_lo:g}, {w_hi:g}] rad/s")
    lo, hi = np.log(ws[idx[0]]), np.log(ws[idx[0] + 1])
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if abs(loop(np.exp(mid))) > 1.0:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def margins(top: LoopTopology, w_lo: float = 2 * np.pi, w_hi: float = 2 * np.pi * 1e4) -> MarginReport:
    """Describing-function bandwidth and phase margin."""
    w_bw = crossover(lambda w: open_loop_sidf(top, w), w_lo, w_hi)
    pm = 180.0 + np.degrees(np.angle(open_loop_sidf(top, w_bw)))
    return MarginReport(w_bw, float(pm))


def ci_sidf_closed_form(gamma: float, cs_phase: float, w: float) -> complex:
    """Closed-form first-harmonic gain of a unit Clegg integrator."""
    theta = 4j * (1 - gamma) * np.exp(1j * cs_phase) * np.cos(cs_phase) / (np.pi * (1 + gamma))
    return (theta + 1) / (1j * w)
