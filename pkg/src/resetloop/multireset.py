"""Multiple-reset detection for sinusoidal inputs.

After the first reset at ``t1`` the trigger signal is the base-linear
sinusoid plus the free response to the jump. ``Delta(t)`` tracks its sign on
the rest of the half period; a zero of ``Delta`` means an extra reset.

The kernels are impulse responses of state-space chains built from
individually realized blocks. Multiplying out the rational composites first
gives the same transfer functions with badly scaled coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ImproperTransferFunction, ResetLoopError
from .linsys import (
    StateSpace,
    TransferFunction,
    impulse_response,
    ss_balance,
    ss_feedback_unity,
    ss_series,
    tf_eval,
    tf_parallel,
    tf_series,
    tf_to_ss_scaled,
)
from .reset_core import LoopTopology, bls_sensitivity, blc, resolvent_columns

DEFAULT_POINTS = 2000


@dataclass(frozen=True)
class PiecewiseKernels:
    frequency: float
    t_grid: np.ndarray
    h_s: np.ndarray
    """Shape ``(len(t), n_c, n_c)``."""
    h_alpha: np.ndarray
    """Shape ``(len(t), n_c)``."""
    h_beta: np.ndarray
    """Shape ``(len(t), n_c)``."""


@dataclass(frozen=True)
class MultiResetVerdict:
    frequency: float
    is_multiple: bool
    t1: float
    t_m: float
    delta_min_abs: float
    crossing_time: Optional[float] = None


@dataclass
class SweepReport:
    grid: np.ndarray
    verdicts: list
    boundary_hz: Optional[float]
    transitions: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)


def _realize(tf: TransferFunction, what: str) -> StateSpace:
    try:
        return tf_to_ss_scaled(tf)
    except ImproperTransferFunction as exc:
        raise ImproperTransferFunction(f"{what}: {exc}") from exc


def composite_kernel_tf(top: LoopTopology) -> dict[str, list[TransferFunction]]:
    """Rational kernels as explicit polynomial ratios.

    ``T_s`` is ``n_c x n_c`` (row-major list); ``T_alpha`` and ``CsT_alpha``
    are ``1 x n_c``.
    """
    r = top.reset
    n = r.n_c
    s_bl = bls_sensitivity(top)
    res = resolvent_columns(r, r.A_rho - np.eye(n))
    t_s = [tf_series(s_bl, g) for g in res]
    c_sig = top.c_sigma()
    t_alpha = []
    for j in range(n):
        acc = None
        for i in range(n):
            term = tf_series(TransferFunction([r.C_R[0, i]]), t_s[i * n + j])
            acc = term if acc is None else tf_parallel(acc, term)
        t_alpha.append(tf_series(c_sig, acc))
    return {"T_s": t_s, "T_alpha": t_alpha, "CsT_alpha": [tf_series(top.cs, g) for g in t_alpha]}


class KernelChain:
    """State-space realizations behind the kernels, built once per topology."""

    def __init__(self, top: LoopTopology):
        self.top = top
        r = top.reset
        n = r.n_c
        c3p = _realize(tf_series(top.c3, top.plant), "C3*P")
        c1 = _realize(top.c1, "C1")
        c4 = _realize(top.c4, "C4")
        branch = _realize(tf_parallel(blc(r), top.c2), "C_l + C2")
        loop = ss_series(ss_series(ss_series(c1, branch), c3p), c4)
        s_bl = ss_feedback_unity(loop)
        c_sigma = ss_series(ss_series(c3p, c4), c1)
        cs = _realize(top.cs, "Cs")
        jump = r.A_rho - np.eye(n)
        self.t_s, self.t_alpha, self.h_beta = [], [], []
        for j in range(n):
            res = StateSpace(r.A_R, jump[:, j : j + 1], np.eye(n), np.zeros((n, 1)))
            ts = ss_series(s_bl, res)
            ta = ss_series(ss_series(ts, StateSpace(np.zeros((0, 0)), np.zeros((0, n)), np.zeros((1, 0)), r.C_R)), c_sigma)
            self.t_s.append(ss_balance(ts))
            self.t_alpha.append(ss_balance(ta))
            self.h_beta.append(ss_balance(ss_series(ta, cs)))

    def beta_samples(self, t) -> np.ndarray:
        """``h_beta`` at times ``t``, shape ``(len(t), n_c)``."""
        return np.column_stack([impulse_response(ss, t).samples[:, 0, 0] for ss in self.h_beta])

    def kernels(self, w: float, points: int) -> PiecewiseKernels:
        t = (np.pi / w) * np.arange(1, points + 1) / points
        h_s = np.stack([impulse_response(ss, t).samples[:, :, 0] for ss in self.t_s], axis=2)
        h_a = np.column_stack([impulse_response(ss, t).samples[:, 0, 0] for ss in self.t_alpha])
        h_b = self.beta_samples(t)
        for name, arr in (("h_s", h_s), ("h_alpha", h_a), ("h_beta", h_b)):
            if not np.all(np.isfinite(arr)):
                raise ResetLoopError(f"non-finite {name} kernel samples")
        return PiecewiseKernels(w, t, h_s, h_a, h_b)


def kernels(top: LoopTopology, w: float, points: int = DEFAULT_POINTS, chain: KernelChain | None = None) -> PiecewiseKernels:
    if points < 1000:
        raise ValueError("kernels need at least 1000 points")
    return (chain or KernelChain(top)).kernels(w, points)


def trigger_sensitivity_at(top: LoopTopology, w: float) -> complex:
    """``Cs C1 S_bl`` at ``w``."""
    return tf_eval(top.cs, w) * tf_eval(top.c1, w) * top.bls_sensitivity_at(w)


def _first_instant(s_ls: complex, w: float) -> float:
    ang = float(np.angle(s_ls))
    if ang > 0 or (ang == 0 and not np.signbit(ang)):
        t1 = (np.pi - ang) / w
    else:
        t1 = -ang / w
    return t1 if t1 > 0 else np.pi / w


def first_reset_instant(top: LoopTopology, w: float) -> float:
    """First zero crossing of the base-linear trigger signal in ``(0, pi/w]``."""
    return _first_instant(trigger_sensitivity_at(top, w), w)


def _theta_s(top: LoopTopology, w: float, c1s: complex, s_ls: complex) -> np.ndarray:
    r = top.reset
    th_bl = np.linalg.solve(1j * w * np.eye(r.n_c) - r.A_R, r.B_R)[:, 0] * c1s
    return np.abs(th_bl) * np.sin(np.angle(s_ls) - np.angle(th_bl))


def theta_s(top: LoopTopology, w: float) -> np.ndarray:
    """Projection of the pre-reset state onto the trigger phase, shape ``(n_c,)``."""
    c1s = tf_eval(top.c1, w) * top.bls_sensitivity_at(w)
    return _theta_s(top, w, c1s, tf_eval(top.cs, w) * c1s)


def delta_profile(top: LoopTopology, w: float, points: int = DEFAULT_POINTS, chain: KernelChain | None = None):
    """Sample ``Delta`` on ``points`` interior points of ``(0, t_m)``.

    Returns ``(t, delta, t1, t_m)``; ``t`` and ``delta`` are empty when
    ``t_m == 0``.
    """
    c1s = tf_eval(top.c1, w) * top.bls_sensitivity_at(w)
    s_ls = tf_eval(top.cs, w) * c1s
    t1 = _first_instant(s_ls, w)
    t_m = np.pi / w - t1
    if t_m <= 0:
        return np.zeros(0), np.zeros(0), t1, 0.0
    t = t_m * np.arange(1, points + 1) / (points + 1)
    chain = chain or KernelChain(top)
    delta = abs(s_ls) * np.sin(w * t) + chain.beta_samples(t) @ _theta_s(top, w, c1s, s_ls)
    return t, delta, t1, t_m


def is_multiple_reset(
    top: LoopTopology,
    w: float,
    points: int = DEFAULT_POINTS,
    atol: float = 1e-12,
    chain: KernelChain | None = None,
) -> MultiResetVerdict:
    """Sign-change test on ``Delta`` over ``(0, t_m)``.

    Multiple resets are reported when ``Delta`` changes sign between adjacent
    samples or when a sample is within ``atol * max|Delta|`` of zero.
    """
    t, delta, t1, t_m = delta_profile(top, w, points, chain)
    if t.size == 0:
        return MultiResetVerdict(w, False, t1, t_m, float("nan"))
    mag = np.abs(delta)
    near = np.flatnonzero(mag <= atol * mag.max())
    flips = np.flatnonzero(np.sign(delta[:-1]) * np.sign(delta[1:]) < 0)
    crossing = None
    if flips.size and (near.size == 0 or flips[0] < near[0]):
        i = flips[0]
        crossing = float(t[i] - delta[i] * (t[i + 1] - t[i]) / (delta[i + 1] - delta[i]))
    elif near.size:
        crossing = float(t[near[0]])
    return MultiResetVerdict(w, crossing is not None, t1, t_m, float(mag.min()), crossing)


def sweep(
    top: LoopTopology,
    f_lo_hz: float = 1.0,
    f_hi_hz: float = 50.0,
    step_hz: float = 1.0,
    points: int = DEFAULT_POINTS,
) -> SweepReport:
    """Verdicts over an ascending frequency grid and the boundary frequency."""
    if not (0 < f_lo_hz < f_hi_hz) or step_hz <= 0:
        raise ValueError("need 0 < f_lo < f_hi and step > 0")
    grid = np.arange(f_lo_hz, f_hi_hz + 0.5 * step_hz, step_hz)
    chain = KernelChain(top)
    verdicts, errors = [], {}
    for f in grid:
        try:
            verdicts.append(is_multiple_reset(top, 2 * np.pi * f, points, chain=chain))
        except ResetLoopError as exc:
            verdicts.append(None)
            errors[float(f)] = str(exc)
    flags = [v.is_multiple if v is not None else None for v in verdicts]
    transitions = boundary_transitions(grid, flags)
    return SweepReport(grid, verdicts, transitions[-1] if transitions else None, transitions, errors)


def boundary_transitions(grid, flags) -> list[float]:
    """Grid points that are multiple-reset while the next point is not."""
    return [float(grid[i]) for i in range(len(grid) - 1) if flags[i] is True and flags[i + 1] is False]
