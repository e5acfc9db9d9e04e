"""Trigger-path shaping filters for Clegg-integrator loops.

A shaper ``Cs`` only changes when resets fire, not the flow dynamics. Its
phase at crossover moves the describing-function phase of the reset element,
and a pole at the origin keeps the trigger signal away from zero after a step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ConstraintViolation, DegenerateAngle
from .linsys import (
    TransferFunction,
    gain,
    lead_lag,
    lowpass,
    pi_factor,
    tf_eval,
    tf_series,
)


@dataclass(frozen=True)
class PidShaperParams:
    k_s: float
    w_alpha: float
    w_beta: float
    w_eta: float
    w_psi: float

    def check(self, w_bw: float) -> None:
        if self.k_s == 0:
            raise ConstraintViolation("k_s must be nonzero")
        if not self.w_beta > 0:
            raise ConstraintViolation("w_beta > 0 violated")
        if not self.w_eta > w_bw:
            raise ConstraintViolation("w_eta > w_BW violated")
        if not self.w_psi > self.w_eta:
            raise ConstraintViolation("w_psi > w_eta violated")


def pi_shaper(w_alpha: float) -> TransferFunction:
    """``(s + w_alpha)/s``."""
    if not w_alpha > 0:
        raise ValueError("w_alpha must be positive")
    return pi_factor(w_alpha)


def pid_shaper(params: PidShaperParams, w_bw: float) -> TransferFunction:
    """PI shaper with a lead-lag and a roll-off pole.

    Raises
    ------
    ConstraintViolation
        If the parameter ordering is violated or the phase at ``w_bw`` is
        not positive.
    """
    params.check(w_bw)
    cs = tf_series(
        gain(params.k_s),
        pi_factor(params.w_alpha),
        lead_lag(params.w_beta, params.w_eta),
        lowpass(params.w_psi),
    )
    phase = np.angle(tf_eval(cs, w_bw) * np.sign(params.k_s))
    if not phase > 0:
        raise ConstraintViolation(f"shaper phase at w_BW is {np.degrees(phase):.2f} deg, must be > 0")
    return cs


def ci_phase_margins(gamma: float, cs_phase_at_bw: float) -> tuple[float, float]:
    """Clegg-integrator describing-function phase without and with shaping.

    Both values are in degrees and measured like the phase of
    ``(Theta + 1)/(j w)``.
    """
    c = np.cos(cs_phase_at_bw)
    if abs(c) < 1e-9:
        raise DegenerateAngle("cos of the shaper phase vanishes")
    s = np.sin(cs_phase_at_bw)
    phi0 = np.degrees(np.arctan(-np.pi * (1 + gamma) / (4 * (1 - gamma))))
    phis = np.degrees(np.arctan((4 * (1 - gamma) * s * c - np.pi * (1 + gamma)) / (4 * (1 - gamma) * c * c)))
    return float(phi0), float(phis)


def phase_lead(gamma: float, cs_phase_at_bw: float, gamma_ref: float | None = None) -> float:
    """Phase gained at crossover by shaping, degrees.

    ``gamma_ref`` selects the unshaped reference element; by default it is
    ``gamma`` itself.
    """
    _, phis = ci_phase_margins(gamma, cs_phase_at_bw)
    phi0, _ = ci_phase_margins(gamma if gamma_ref is None else gamma_ref, 0.0)
    return phis - phi0


FIELDS = ("k_s", "w_alpha", "w_beta", "w_eta", "w_psi")


def fit_pid_shaper(
    target_w,
    target_mag,
    w_bw: float,
    x0: PidShaperParams,
    phase_weight: float = 10.0,
    free: tuple[str, ...] = ("k_s", "w_alpha"),
) -> PidShaperParams:
    """Least-squares fit of shaper parameters to a target magnitude curve.

    The objective is the log-magnitude error on the supplied grid plus a
    penalty that keeps the phase at ``w_bw`` positive. Only the parameters
    named in ``free`` move; the others stay at ``x0``. Corners above the
    target band barely change the residual, so freeing them lets the solver
    drift to arbitrary values.

    Parameters are fitted in log space with ``w_psi`` tied to ``w_eta`` as
    ``w_eta * (1 + p)``, which keeps the ordering constraint satisfied.
    """
    bad = set(free) - set(FIELDS)
    if bad or not free:
        raise ValueError(f"free must be a nonempty subset of {FIELDS}")
    w = np.asarray(target_w, dtype=float)
    logt = np.log(np.asarray(target_mag, dtype=float))
    sign = np.sign(x0.k_s)
    base = dict(
        k_s=abs(x0.k_s),
        w_alpha=x0.w_alpha,
        w_beta=x0.w_beta,
        w_eta=x0.w_eta,
        w_psi=max(x0.w_psi / x0.w_eta - 1, 1e-3),
    )
    idx = [FIELDS.index(f) for f in FIELDS if f in free]

    def unpack(p):
        v = [base[f] for f in FIELDS]
        for i, pi in zip(idx, p):
            v[i] = float(np.exp(pi))
        k, wa, wb, we, wp = v
        return PidShaperParams(float(sign * k), wa, wb, we, we * (1 + wp))

    def resid(p):
        q = unpack(p)
        cs = tf_series(gain(q.k_s), pi_factor(q.w_alpha), lead_lag(q.w_beta, q.w_eta), lowpass(q.w_psi))
        mags = np.abs(np.array([tf_eval(cs, wi) for wi in w]))
        ph = np.angle(tf_eval(cs, w_bw) * sign)
        return np.concatenate([np.log(mags) - logt, [phase_weight * min(ph, 0.0)]])

    p0 = np.log([base[FIELDS[i]] for i in idx])
    sol = least_squares(resid, p0)
    return unpack(sol.x)


def eliminates_limit_cycle(cs: TransferFunction, top) -> tuple[bool, float | None]:
    """Analytic limit-cycle check for step inputs.

    True when the steady-state trigger signal settles at a finite nonzero
    value, so resets stop firing, or when the resets that keep firing act on
    a reset state that has already settled at zero. Also returns the limit of
    ``z_s``.
    """
    from .simulator import final_value_zs, limit_cycle_predicted

    shaped = top.with_cs(cs)
    lim = final_value_zs(shaped)
    return not limit_cycle_predicted(shaped), lim.value
