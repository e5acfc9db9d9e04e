"""Reference plant and controller configurations.

Reset-PID wiring: ``C1 = C4 = 1``; the reset branch is a Clegg integrator
with base-linear response ``w_r/s`` in parallel with the unit path ``C2``;
``C3`` carries ``k_p k_r``, the lead-lag, the low-pass and an optional PI
factor. The linear PID baseline is the same wiring with an identity jump.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import ConfigError
from .linsys import (
    TransferFunction,
    gain,
    lead_lag,
    lowpass,
    pi_factor,
    tf_series,
    zero_factor,
)
from .reset_core import LoopTopology, ResetElement, clegg
from .shaping import PidShaperParams, pid_shaper

W_C = 300 * np.pi
"""Design crossover parameter of the reset-PID tunings, rad/s."""

W_BW = 200 * np.pi
"""Target bandwidth, rad/s."""

SHAPER = PidShaperParams(k_s=213.0, w_alpha=60 * np.pi, w_beta=659.7, w_eta=7.5e3, w_psi=4.7e4)


def plant() -> TransferFunction:
    """Precision motion stage, ``6.615e5/(83.57 s^2 + 279.4 s + 5.837e5)``."""
    return TransferFunction([6.615e5], [5.837e5, 279.4, 83.57])


def _pid_core(k: float, w_c: float = W_C) -> TransferFunction:
    return tf_series(gain(k), lead_lag(w_c / 3.8, 3.8 * w_c), lowpass(10 * w_c))


def reset_pid(
    k_p: float = 17.8,
    k_r: float = 0.85,
    w_r: float = 0.1 * W_C,
    gamma: float = 0.0,
    zeta: int = 0,
    w_i: float = 0.084 * W_C,
    cs: TransferFunction | None = None,
    name: str = "",
) -> LoopTopology:
    """Reset PID loop on the reference plant.

    Parameters
    ----------
    k_p, k_r : float
        Proportional gain and the scale of the reset-integral part.
    w_r : float
        Reset-integrator corner, rad/s.
    gamma : float
        Reset value.
    zeta : int
        Number of additional linear integrators ``(1 + w_i/s)`` in ``C3``.
    """
    if zeta not in (0, 1):
        raise ConfigError("zeta must be 0 or 1")
    c3 = _pid_core(k_p * k_r)
    if zeta:
        c3 = tf_series(c3, pi_factor(w_i))
    return LoopTopology(
        reset=clegg(gamma, w_r),
        plant=plant(),
        c3=c3,
        cs=cs if cs is not None else TransferFunction([1.0]),
        name=name,
    )


def pcid(shaped: bool = False) -> LoopTopology:
    """Proportional Clegg-integrator derivative loop, optionally shaped."""
    if shaped:
        return reset_pid(k_r=1.02, w_r=141.4, gamma=0.13, cs=pid_shaper(SHAPER, W_BW), name="pcid-shaped")
    return reset_pid(name="pcid")


def pid_baseline() -> LoopTopology:
    """Linear PID ``k_p (1 + w_i/s)`` lead-lag low-pass, as a loop with an identity jump."""
    lin = ResetElement([[0.0]], [[1.0]], [[0.084 * W_C]], 0.0, identity_jump=True)
    return LoopTopology(reset=lin, plant=plant(), c3=_pid_core(17.8), name="pid")


def pci_pid(shaped: bool = False) -> LoopTopology:
    """Reset PID with one extra linear integrator.

    The gains are our own choice tuned for a 100 Hz crossover.
    """
    if shaped:
        return reset_pid(k_p=17.8, k_r=0.95, w_r=141.4, gamma=0.13, zeta=1, w_i=0.05 * W_C,
                         cs=pid_shaper(SHAPER, W_BW), name="pci-pid-shaped")
    return reset_pid(k_p=17.8, k_r=0.8, w_r=0.1 * W_C, gamma=0.0, zeta=1, w_i=0.05 * W_C, name="pci-pid")


def pi_ci_d() -> LoopTopology:
    """PI in series with a Clegg-integrator derivative stage (own tuning)."""
    return reset_pid(k_p=17.8, k_r=0.8, w_r=0.05 * W_C, gamma=0.0, zeta=1, w_i=0.05 * W_C, name="pi-ci-d")


def case(k: int, as_printed: bool = False) -> LoopTopology:
    """Case-study loops 1 to 6 of the boundary-frequency comparison.

    Cases 2 and 3 use a lead-lag ``(s/w1+1)/(s/w2+1)`` in ``C3``. With
    ``as_printed=True`` the second corner becomes a zero instead, which
    makes ``C3`` improper.
    """
    P = plant()
    second = zero_factor if as_printed else lowpass
    one = TransferFunction([1.0])
    if k == 1:
        return replace(pcid(False), name="case1")
    if k == 2:
        c3 = tf_series(gain(40.0), zero_factor(711.1), second(8.8e3), lowpass(2.5e4))
        return LoopTopology(clegg(0.0, 125.7), P, c3=c3, name="case2")
    if k == 3:
        c3 = tf_series(gain(25.0), zero_factor(327.7), second(4.8e3), lowpass(1.3e4))
        return LoopTopology(clegg(0.0, 125.7), P, c3=c3, name="case3")
    if k == 4:
        c3 = tf_series(gain(24.0), lead_lag(216.6, 4.1e3), pi_factor(94.2), lowpass(9.4e3))
        return LoopTopology(clegg(0.0, 47.1), P, c3=c3, name="case4")
    if k == 5:
        c3 = tf_series(gain(20.5), lead_lag(196.1, 4.5e3), pi_factor(94.2), lowpass(9.4e3))
        return LoopTopology(clegg(0.3, 94.2), P, c3=c3, name="case5")
    if k == 6:
        c3 = tf_series(
            gain(20.5),
            lead_lag(150 * np.pi, 3000 * np.pi),
            lead_lag(62.5 * np.pi, 1440 * np.pi),
            pi_factor(15 * np.pi),
            lowpass(3000 * np.pi),
        )
        return LoopTopology(
            clegg(0.0, 30 * np.pi),
            P,
            c1=lowpass(150 * np.pi),
            c2=one,
            c3=c3,
            cs=TransferFunction([1.0, 1.0], [2.0, 1.0]),
            name="case6",
        )
    raise ConfigError(f"case must be 1..6, got {k}")


CATALOG = {
    "pid": pid_baseline,
    "pcid": lambda: pcid(False),
    "pcid-shaped": lambda: pcid(True),
    "pci-pid": lambda: pci_pid(False),
    "pci-pid-shaped": lambda: pci_pid(True),
    "pi-ci-d": pi_ci_d,
    **{f"case{k}": (lambda k=k: case(k)) for k in range(1, 7)},
}


def get(name: str) -> LoopTopology:
    try:
        return CATALOG[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(CATALOG)}") from None
