"""Reset element, loop topology and base-linear loop functions.

Loop wiring (all blocks SISO)::

    e = r - C4 y,  z = C1 e,  z_s = Cs z,  m = reset(z),
    a = C2 z,      v = m + a, u = C3 v,    y = P u

Resets fire when ``z_s`` crosses zero; the reset state then jumps
``x -> A_rho x`` with ``A_rho = diag(gamma, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .linsys import (
    StateSpace,
    TransferFunction,
    expm,
    tf_eval,
    tf_parallel,
    tf_sensitivity,
    tf_series,
)


@dataclass(frozen=True)
class ResetElement:
    """Hybrid controller with flow ``(A_R, B_R, C_R, D_R)`` and jump ``A_rho``.

    ``identity_jump=True`` builds a test fixture whose jump is the identity
    (every reset is a no-op); ``gamma`` is then ignored.
    """

    A_R: np.ndarray
    B_R: np.ndarray
    C_R: np.ndarray
    D_R: float = 0.0
    gamma: float = 0.0
    identity_jump: bool = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_R, dtype=float))
        n = A.shape[0]
        if n < 1 or A.shape != (n, n):
            raise ConfigError("A_R must be square with n_c >= 1")
        B = np.asarray(self.B_R, dtype=float).reshape(n, 1)
        C = np.asarray(self.C_R, dtype=float).reshape(1, n)
        D = float(np.asarray(self.D_R, dtype=float).reshape(-1)[0])
        for M in (A, B, C):
            M.setflags(write=False)
        object.__setattr__(self, "A_R", A)
        object.__setattr__(self, "B_R", B)
        object.__setattr__(self, "C_R", C)
        object.__setattr__(self, "D_R", D)
        if self.identity_jump:
            object.__setattr__(self, "gamma", 1.0)
        elif not -1.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (-1, 1), got {self.gamma}")

    @property
    def n_c(self) -> int:
        return self.A_R.shape[0]

    @property
    def A_rho(self) -> np.ndarray:
        J = np.eye(self.n_c)
        J[0, 0] = self.gamma
        return J

    def flow_ss(self) -> StateSpace:
        return StateSpace(self.A_R, self.B_R, self.C_R, [[self.D_R]])

    def blc_response(self, w: float) -> complex:
        """``C_R (jwI - A_R)^{-1} B_R + D_R`` by direct complex solve."""
        x = np.linalg.solve(1j * w * np.eye(self.n_c) - self.A_R, self.B_R)
        return complex((self.C_R @ x)[0, 0] + self.D_R)

    def to_dict(self) -> dict:
        return {
            "A_R": self.A_R.tolist(),
            "B_R": self.B_R.tolist(),
            "C_R": self.C_R.tolist(),
            "D_R": [[self.D_R]],
            "gamma": self.gamma,
            **({"identity_jump": True} if self.identity_jump else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResetElement":
        if "ci" in d:
            ci_d = d["ci"]
            return clegg(ci_d["gamma"], ci_d.get("gain", 1.0))
        d_r = np.asarray(d.get("D_R", 0.0), dtype=float).reshape(-1)[0]
        return cls(d["A_R"], d["B_R"], d["C_R"], d_r, d.get("gamma", 0.0), bool(d.get("identity_jump", False)))


def clegg(gamma: float = 0.0, gain: float = 1.0) -> ResetElement:
    """Generalized Clegg integrator with base-linear response ``gain/s``."""
    return ResetElement([[0.0]], [[1.0]], [[gain]], 0.0, gamma)


def identity_jump(reset: ResetElement) -> ResetElement:
    """Copy of ``reset`` whose jump is the identity (linear fixture)."""
    return replace(reset, identity_jump=True)


def _faddeev_leverrier(A: np.ndarray):
    """Characteristic polynomial (ascending) and adjugate coefficient matrices.

    ``adj(sI - A) = sum_k M[k] s^(n-1-k)``.
    """
    n = A.shape[0]
    c = np.zeros(n + 1)
    c[n] = 1.0
    M_prev = np.zeros((n, n))
    Ms = []
    for k in range(1, n + 1):
        M = A @ M_prev + c[n - k + 1] * np.eye(n)
        Ms.append(M)
        c[n - k] = -np.trace(A @ M) / k
        M_prev = M
    return c, Ms


def blc(reset: ResetElement) -> TransferFunction:
    """Base-linear controller ``C_R (sI - A_R)^{-1} B_R + D_R`` as a rational function."""
    char, Ms = _faddeev_leverrier(reset.A_R)
    n = reset.n_c
    num = np.zeros(n + 1)
    for k, M in enumerate(Ms):
        num[n - 1 - k] += (reset.C_R @ M @ reset.B_R)[0, 0]
    num = num + reset.D_R * char
    return TransferFunction(num, char)


def resolvent_columns(reset: ResetElement, columns: np.ndarray) -> list[TransferFunction]:
    """Rational entries of ``(sI - A_R)^{-1} @ columns``, row-major.

    Returns a list of length ``n_c * columns.shape[1]``.
    """
    char, Ms = _faddeev_leverrier(reset.A_R)
    n = reset.n_c
    cols = np.atleast_2d(columns).reshape(n, -1)
    out = []
    for i in range(n):
        for j in range(cols.shape[1]):
            num = np.zeros(n)
            for k, M in enumerate(Ms):
                num[n - 1 - k] = (M[i] @ cols[:, j])
            out.append(TransferFunction(num, char))
    return out


class StabilityReport(NamedTuple):
    stable: bool
    worst_delta: float
    radius: float


def open_loop_reset_stable(reset: ResetElement, delta_grid=None) -> StabilityReport:
    """Check ``max_delta rho(A_rho expm(A_R delta)) < 1`` over a sample grid.

    The default grid is 200 log-spaced points in [1e-4, 10] s. It samples
    the condition; it does not prove it for every delta.
    """
    if delta_grid is None:
        delta_grid = np.logspace(-4, 1, 200)
    deltas = np.asarray(delta_grid, dtype=float)
    if deltas.size == 0 or np.any(deltas <= 0):
        raise ConfigError("delta grid must be nonempty and strictly positive")
    if not np.any(reset.A_R):
        r = float(np.max(np.abs(np.linalg.eigvals(reset.A_rho))))
        return StabilityReport(r < 1.0, float(deltas[0]), r)
    radii = [np.max(np.abs(np.linalg.eigvals(reset.A_rho @ expm(reset.A_R * d)))) for d in deltas]
    i = int(np.argmax(radii))
    return StabilityReport(bool(radii[i] < 1.0), float(deltas[i]), float(radii[i]))


ONE = TransferFunction([1.0], [1.0])


@dataclass(frozen=True)
class LoopTopology:
    """Closed-loop reset system: LTI blocks around one reset element."""

    reset: ResetElement
    plant: TransferFunction
    c1: TransferFunction = ONE
    c2: TransferFunction = ONE
    c3: TransferFunction = ONE
    c4: TransferFunction = ONE
    cs: TransferFunction = ONE
    name: str = field(default="", compare=False)

    def blocks(self) -> dict[str, TransferFunction]:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4, "cs": self.cs, "plant": self.plant}

    def hurwitz_blocks(self) -> dict[str, bool]:
        return {k: g.is_hurwitz() for k, g in self.blocks().items() if k != "plant"}

    def with_reset(self, reset: ResetElement) -> "LoopTopology":
        return replace(self, reset=reset)

    def with_cs(self, cs: TransferFunction) -> "LoopTopology":
        return replace(self, cs=cs)

    def linear_fixture(self) -> "LoopTopology":
        return replace(self, reset=identity_jump(self.reset))

    def c_sigma(self) -> TransferFunction:
        """``C3 P C4 C1``: loop path from reset output back to ``z`` (sign excluded)."""
        return tf_series(self.c3, self.plant, self.c4, self.c1)

    def c_sigma_at(self, w: float) -> complex:
        return tf_eval(self.c3, w) * tf_eval(self.plant, w) * tf_eval(self.c4, w) * tf_eval(self.c1, w)

    def base_loop_at(self, w: float) -> complex:
        """``C1 (C_l + C2) C3 P C4`` evaluated factor by factor."""
        return tf_eval(self.c1, w) * (self.reset.blc_response(w) + tf_eval(self.c2, w)) * (
            tf_eval(self.c3, w) * tf_eval(self.plant, w) * tf_eval(self.c4, w)
        )

    def bls_sensitivity_at(self, w: float) -> complex:
        return 1.0 / (1.0 + self.base_loop_at(w))

    def to_dict(self) -> dict:
        d = {k: g.to_dict() for k, g in self.blocks().items()}
        d["reset"] = self.reset.to_dict()
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LoopTopology":
        try:
            blocks = {k: TransferFunction.from_dict(d[k]) for k in ("c1", "c2", "c3", "c4", "cs") if k in d}
            return cls(
                reset=ResetElement.from_dict(d["reset"]),
                plant=TransferFunction.from_dict(d["plant"]),
                name=d.get("name", ""),
                **blocks,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid topology: {exc}") from exc


def base_loop(top: LoopTopology) -> TransferFunction:
    """Base-linear open loop ``C1 (C_l + C2) C3 P C4``."""
    return tf_series(top.c1, tf_parallel(blc(top.reset), top.c2), top.c3, top.plant, top.c4)


def bls_sensitivity(top: LoopTopology) -> TransferFunction:
    return tf_sensitivity(base_loop(top))
