"""Fixed-step hybrid simulation of reset loops.

Every LTI block and the reset element's flow are integrated with the
trapezoidal rule on their physical states, which is the Tustin discretization
block by block. Resets fire at the first sample after a strict sign change of
``z_s`` and act on the physical reset state.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numba
import numpy as np

from .errors import AnalysisError, ConfigError, NonFiniteState, UnstableBLS
from .linsys import (
    LimitAtZero,
    StateSpace,
    limit_at_zero,
    tf_series,
    tf_to_ss_scaled,
)
from .reset_core import LoopTopology, bls_sensitivity, resolvent_columns

SIGNALS = ("e", "z", "z_s", "m", "a", "v", "u", "y", "y4")
_IDX = {name: i for i, name in enumerate(SIGNALS)}
DIVERGENCE = 1e12


# ---------------------------------------------------------------------------
# inputs and configuration


@dataclass(frozen=True)
class Sine:
    amplitude: float
    hz: float


@dataclass(frozen=True)
class Step:
    """Step reference with optional seeded white noise of RMS ``noise_rms``."""

    amplitude: float
    duration: float = 1.0
    noise_rms: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class Composite:
    """Sum of sines plus optional white noise.

    ``noise_power`` is the per-sample variance divided by the sample rate.
    """

    sines: tuple = ()
    noise_power: float = 0.0
    duration: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class Samples:
    values: tuple


InputSpec = Union[Sine, Step, Composite, Samples]


@dataclass(frozen=True)
class SimulationConfig:
    input: InputSpec
    sample_rate: float = 1e4
    transient_cycles: int = 30
    measure_cycles: int = 10
    debounce: int = 3

    def __post_init__(self):
        if self.measure_cycles < 2:
            raise ConfigError("measure_cycles must be at least 2")
        f_max = self.highest_frequency()
        if f_max and self.sample_rate < 20 * f_max:
            raise ConfigError(f"sample rate {self.sample_rate} Hz is below 20x the input frequency {f_max} Hz")

    def highest_frequency(self) -> float:
        if isinstance(self.input, Sine):
            return self.input.hz
        if isinstance(self.input, Composite) and self.input.sines:
            return max(hz for _, hz in self.input.sines)
        return 0.0

    def reference(self) -> np.ndarray:
        fs = self.sample_rate
        inp = self.input
        if isinstance(inp, Sine):
            n = int(round((self.transient_cycles + self.measure_cycles) * fs / inp.hz)) + 1
            t = np.arange(n) / fs
            return inp.amplitude * np.sin(2 * np.pi * inp.hz * t)
        if isinstance(inp, Step):
            r = np.full(int(round(inp.duration * fs)) + 1, float(inp.amplitude))
            if inp.noise_rms > 0:
                r += np.random.default_rng(inp.seed).normal(0.0, inp.noise_rms, r.size)
            return r
        if isinstance(inp, Composite):
            n = int(round(inp.duration * fs)) + 1
            t = np.arange(n) / fs
            r = np.zeros(n)
            for amp, hz in inp.sines:
                r += amp * np.sin(2 * np.pi * hz * t)
            if inp.noise_power > 0:
                rng = np.random.default_rng(inp.seed)
                r += rng.normal(0.0, np.sqrt(inp.noise_power * fs), n)
            return r
        if isinstance(inp, Samples):
            return np.asarray(inp.values, dtype=float)
        raise ConfigError(f"unsupported input {inp!r}")


# ---------------------------------------------------------------------------
# traces and metrics


@dataclass
class SimulationTrace:
    t: np.ndarray
    channels: dict
    reset_indices: np.ndarray
    reset_instants: np.ndarray
    """Interpolated crossing times, for reporting."""
    reset_states: list
    """``(t_k, x(t_k^-))`` at the samples where jumps were applied."""
    event_indices: np.ndarray
    """Reset indices after debouncing."""
    config: SimulationConfig
    linear: bool = False

    @property
    def r(self) -> np.ndarray:
        return self.channels["r"]

    def measure_start(self) -> int:
        """First sample of the steady-state window (sine inputs only)."""
        inp = self.config.input
        if not isinstance(inp, Sine):
            return 0
        n_meas = int(round(self.config.measure_cycles * self.config.sample_rate / inp.hz))
        return max(len(self.t) - n_meas - 1, 0)


@dataclass(frozen=True)
class SteadyStateMetrics:
    einf_over_rinf: Optional[float]
    einf: float
    resets_per_cycle: float
    limit_cycle: Optional[bool] = None
    oscillation_amplitude: float = 0.0

    def to_dict(self) -> dict:
        return {
            "einf_over_rinf": self.einf_over_rinf,
            "einf": self.einf,
            "resets_per_cycle": self.resets_per_cycle,
            "limit_cycle": self.limit_cycle,
            "oscillation_amplitude": self.oscillation_amplitude,
        }


# ---------------------------------------------------------------------------
# loop assembly


@numba.njit(cache=True, nogil=True)
def _run(Ad, bd, Sx, Sr, r, r0, nc, A_rho, zs_idx, limit):
    n = r.shape[0]
    N = Ad.shape[0]
    ns = Sx.shape[0]
    X = np.zeros(N)
    S = np.empty((n, ns))
    fired = np.zeros(n, dtype=np.bool_)
    pre = np.zeros((n, nc))
    zs_pre = np.zeros(n)
    zprev = 0.0
    for k in range(n):
        if k > 0:
            X = Ad @ X + bd * (r[k - 1] + r[k])
            for i in range(N):
                if not abs(X[i]) < limit:
                    return S, fired, pre, zs_pre, k
        s = Sx @ X + Sr * r[k]
        zs = s[zs_idx]
        zs_pre[k] = zs
        # a crossing that lands exactly on zero still counts once the sign flips
        if zs * zprev < 0.0:
            xr = X[r0 : r0 + nc].copy()
            pre[k] = xr
            X[r0 : r0 + nc] = A_rho @ xr
            fired[k] = True
            s = Sx @ X + Sr * r[k]
            zs = s[zs_idx]
        S[k] = s
        if zs != 0.0:
            zprev = zs
    return S, fired, pre, zs_pre, -1


class DiscreteLoop:
    """Closed-loop recurrence for one topology at one sample rate."""

    def __init__(self, top: LoopTopology, sample_rate: float = 1e4):
        self.top = top
        self.sample_rate = float(sample_rate)
        self.linear = top.reset.identity_jump
        for name, g in top.blocks().items():
            if name != "c3" and not g.is_proper:
                raise ConfigError(f"block {name} is improper")
        r = top.reset
        self.u_available = top.c3.is_proper
        blocks = [
            ("c1", tf_to_ss_scaled(top.c1), "e", "z"),
            ("cs", tf_to_ss_scaled(top.cs), "z", "z_s"),
            ("reset", r.flow_ss(), "z", "m"),
            ("c2", tf_to_ss_scaled(top.c2), "z", "a"),
        ]
        if self.u_available:
            blocks += [("c3", tf_to_ss_scaled(top.c3), "v", "u"), ("plant", tf_to_ss_scaled(top.plant), "u", "y")]
        else:
            blocks += [("c3p", tf_to_ss_scaled(tf_series(top.c3, top.plant)), "v", "y")]
        blocks.append(("c4", tf_to_ss_scaled(top.c4), "y", "y4"))
        ns = len(SIGNALS)
        sizes = [b[1].n_states for b in blocks]
        offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        N = int(offs[-1])
        M = np.zeros((ns, ns))
        Kx = np.zeros((ns, N))
        kr = np.zeros(ns)
        kr[_IDX["e"]] = 1.0
        M[_IDX["e"], _IDX["y4"]] = -1.0
        M[_IDX["v"], _IDX["m"]] = 1.0
        M[_IDX["v"], _IDX["a"]] = 1.0
        Ac = np.zeros((N, N))
        Bc = np.zeros((N, ns))
        self.offsets = {}
        for (name, ss, src, dst), o0, o1 in zip(blocks, offs[:-1], offs[1:]):
            self.offsets[name] = (int(o0), int(o1))
            M[_IDX[dst], _IDX[src]] += ss.D[0, 0]
            Kx[_IDX[dst], o0:o1] = ss.C[0]
            Ac[o0:o1, o0:o1] = ss.A
            Bc[o0:o1, _IDX[src]] = ss.B[:, 0]
        L = np.eye(ns) - M
        if np.linalg.cond(L) > 1e12:
            raise AnalysisError("algebraic loop through direct feedthrough terms is ill-posed")
        Li = np.linalg.inv(L)
        self.Sx = Li @ Kx
        self.Sr = Li @ kr
        self.Acl = Ac + Bc @ self.Sx
        self.Bcl = Bc @ self.Sr
        cs0, cs1 = self.offsets["cs"]
        loop_states = np.r_[0:cs0, cs1:N]
        eig = np.linalg.eigvals(self.Acl[np.ix_(loop_states, loop_states)])
        if eig.size and np.max(eig.real) >= 0:
            raise UnstableBLS(f"base-linear closed loop has a pole at {eig[np.argmax(eig.real)]:.4g}")
        self.bls_poles = eig
        T = 1.0 / self.sample_rate
        I = np.eye(N)
        Minv = np.linalg.inv(I - Ac * (T / 2))
        Phi = Minv @ (I + Ac * (T / 2))
        Gam = Minv @ Bc * (T / 2)
        lhs = I - Gam @ self.Sx
        self.Ad = np.linalg.solve(lhs, Phi + Gam @ self.Sx)
        self.bd = np.linalg.solve(lhs, Gam @ self.Sr)
        self.reset_offset = self.offsets["reset"][0]
        self.A_rho = np.ascontiguousarray(r.A_rho)
        self.n_states = N

    def dominant_time_constant(self) -> float:
        return float(1.0 / np.min(np.abs(self.bls_poles.real)))

    def run(self, config: SimulationConfig) -> SimulationTrace:
        if abs(config.sample_rate - self.sample_rate) > 0:
            raise ConfigError("config sample rate differs from the assembled loop")
        r = np.ascontiguousarray(config.reference(), dtype=float)
        S, fired, pre, zs_pre, bad = _run(
            self.Ad, self.bd, self.Sx, self.Sr, r, self.reset_offset, self.top.reset.n_c,
            self.A_rho, _IDX["z_s"], DIVERGENCE,
        )
        if bad >= 0:
            raise NonFiniteState(f"state exceeded {DIVERGENCE:g} at sample {bad}")
        T = 1.0 / self.sample_rate
        t = np.arange(r.size) * T
        channels = {name: S[:, i] for i, name in enumerate(SIGNALS) if name != "y4"}
        channels["r"] = r
        if not self.u_available:
            channels["u"] = np.full(r.size, np.nan)
        idx = np.flatnonzero(fired)
        zs = S[:, _IDX["z_s"]]
        prev = zs[idx - 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.nan_to_num(prev / (prev - zs_pre[idx]), nan=1.0)
        instants = t[idx - 1] + frac * T
        states = [(float(t[i]), pre[i].copy()) for i in idx]
        return SimulationTrace(
            t=t,
            channels=channels,
            reset_indices=idx,
            reset_instants=instants,
            reset_states=states,
            event_indices=debounce(idx, config.debounce),
            config=config,
            linear=self.linear,
        )


def debounce(indices: np.ndarray, window: int) -> np.ndarray:
    """Merge sign changes closer than ``window`` samples into single events."""
    if indices.size == 0:
        return indices
    keep = [indices[0]]
    last = indices[0]
    for i in indices[1:]:
        if i - last > window:
            keep.append(i)
        last = i
    return np.asarray(keep)


def simulate(top: LoopTopology, config: SimulationConfig) -> SimulationTrace:
    return DiscreteLoop(top, config.sample_rate).run(config)


def metrics(trace: SimulationTrace) -> SteadyStateMetrics:
    """Steady-state error ratio and reset rate over the measurement window."""
    cfg = trace.config
    k0 = trace.measure_start()
    e = trace.channels["e"][k0:]
    r = trace.r[k0:]
    einf = float(np.max(np.abs(e)))
    rinf = float(np.max(np.abs(r)))
    ratio = einf / rinf if rinf > 0 else None
    ev = trace.event_indices
    if isinstance(cfg.input, Sine):
        rpc = float(np.sum(ev >= k0 + 1)) / cfg.measure_cycles
    else:
        rpc = float(ev.size)
    lc = None
    osc = 0.0
    if isinstance(cfg.input, Step):
        lc, osc = detect_limit_cycle(trace, cfg.input.amplitude)
    return SteadyStateMetrics(ratio, einf, rpc, lc, osc)


def detect_limit_cycle(trace: SimulationTrace, amplitude: float, tail: float = 0.25) -> tuple[bool, float]:
    """Persistent, regular resets with a visible error oscillation in the tail.

    Returns the verdict and half the peak-to-peak error in the tail window.
    """
    n = len(trace.t)
    k0 = int(n * (1 - tail))
    e = trace.channels["e"][k0:]
    p2p = float(np.max(e) - np.min(e))
    ev = trace.event_indices[trace.event_indices >= k0]
    # a cycle may hold several resets, so compare events p apart
    regular = False
    for p in (1, 2, 3):
        if ev.size >= 2 * p + 1:
            gaps = (ev[p:] - ev[:-p]).astype(float)
            if np.std(gaps) / np.mean(gaps) < 0.1:
                regular = True
                break
    return bool(regular and p2p > 0.01 * abs(amplitude)), 0.5 * p2p


def sine_metrics(loop: DiscreteLoop, hz: float, amplitude: float = 1.0, **cfg) -> SteadyStateMetrics:
    config = SimulationConfig(Sine(amplitude, hz), sample_rate=loop.sample_rate, **cfg)
    return metrics(loop.run(config))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RESETLOOP_THREADS", "1")))
    except ValueError:
        return 1


def sweep_metrics(top: LoopTopology, freqs_hz: Sequence[float], amplitude: float = 1.0,
                  sample_rate: float = 1e4, threads: int | None = None, **cfg) -> list[SteadyStateMetrics]:
    """Sine metrics at each frequency; threads default to ``RESETLOOP_THREADS``."""
    loop = DiscreteLoop(top, sample_rate)
    job = lambda f: sine_metrics(loop, f, amplitude, **cfg)  # noqa: E731
    n = threads or _threads()
    if n == 1:
        return [job(f) for f in freqs_hz]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(job, freqs_hz))


@dataclass
class SimBoundaryReport:
    grid: np.ndarray
    resets_per_cycle: np.ndarray
    boundary_hz: Optional[float]
    transitions: list = field(default_factory=list)


def boundary_frequency_sim(top: LoopTopology, f_lo: float = 1.0, f_hi: float = 50.0, step_hz: float = 1.0,
                           amplitude: float = 1.0, threshold: float = 2.5, **kw) -> SimBoundaryReport:
    """Highest frequency with more than ``threshold`` resets per cycle whose successor has fewer."""
    if top.reset.identity_jump:
        raise ConfigError("boundary search is meaningless for a linear fixture")
    grid = np.arange(f_lo, f_hi + 0.5 * step_hz, step_hz)
    rpc = np.array([m.resets_per_cycle for m in sweep_metrics(top, grid, amplitude, **kw)])
    multi = rpc > threshold
    trans = [float(grid[i]) for i in range(len(grid) - 1) if multi[i] and not multi[i + 1]]
    return SimBoundaryReport(grid, rpc, trans[-1] if trans else None, trans)


@dataclass
class StepResult:
    trace: SimulationTrace
    limit_cycle: bool
    oscillation_amplitude: float
    overshoot: float


PROBE_NOISE = 1e-6


def step_response(top: LoopTopology, amplitude: float = 1.0, duration: float | None = None,
                  sample_rate: float = 1e4, noise_rms: float | None = None, seed: int = 0) -> StepResult:
    """Step simulation with a limit-cycle verdict on the trailing quarter.

    A loop whose trigger signal settles at zero rests on the reset surface,
    so whether resets keep firing is decided by arbitrarily small
    perturbations. The reference therefore carries seeded white noise of RMS
    ``PROBE_NOISE * |amplitude|`` unless ``noise_rms`` says otherwise.
    """
    if noise_rms is None:
        noise_rms = PROBE_NOISE * abs(amplitude)
    loop = DiscreteLoop(top, sample_rate)
    need = 20 * loop.dominant_time_constant()
    if duration is None:
        duration = max(6.0, need)
    elif duration < need:
        raise ConfigError(f"duration {duration} s is shorter than 20 base-linear time constants ({need:.3g} s)")
    trace = loop.run(SimulationConfig(Step(amplitude, duration, noise_rms, seed), sample_rate=sample_rate))
    lc, osc = detect_limit_cycle(trace, amplitude)
    y = trace.channels["y"]
    overshoot = float(max(np.max(y * np.sign(amplitude)) / abs(amplitude) - 1.0, 0.0))
    return StepResult(trace, lc, osc, overshoot)


def final_value_zs(top: LoopTopology) -> LimitAtZero:
    """Steady-state trigger signal for a unit step: limit of ``Cs C1 S_bl`` at ``s = 0``."""
    return limit_at_zero(tf_series(top.cs, top.c1, bls_sensitivity(top)))


def final_reset_jump(top: LoopTopology) -> np.ndarray:
    """Jump ``(A_rho - I) x`` a reset would apply at the step steady state.

    Entries are ``inf`` where the reset state grows without bound.
    """
    r = top.reset
    trig = tf_series(top.c1, bls_sensitivity(top))
    x = []
    for g in resolvent_columns(r, r.B_R):
        lim = limit_at_zero(tf_series(g, trig))
        x.append(np.inf if lim.kind == "infinite" else lim.value)
    x = np.asarray(x)
    jump = r.A_rho - np.eye(r.n_c)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(x)[None, :] & (jump != 0), np.inf, jump * np.nan_to_num(x, posinf=0.0))
    return np.abs(out).sum(axis=1)


def limit_cycle_predicted(top: LoopTopology) -> bool:
    """Analytic step verdict.

    Resets keep firing when the trigger signal settles at zero, and they keep
    disturbing the loop when the reset state they act on is nonzero there.
    """
    if top.reset.identity_jump:
        return False
    if not final_value_zs(top).is_zero:
        return False
    return bool(np.any(final_reset_jump(top) != 0))


def bls_state_space(top: LoopTopology) -> StateSpace:
    """Continuous base-linear closed loop from ``r`` to all internal signals."""
    loop = DiscreteLoop(top.linear_fixture())
    return StateSpace(loop.Acl, loop.Bcl[:, None], loop.Sx, loop.Sr[:, None])
