"""LTI numerics: polynomials, rational transfer functions, state-space models.

Polynomial coefficients are stored in ascending powers of ``s`` everywhere,
including in serialized form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import matrix_balance

from .errors import (
    DegreeOverflow,
    ImproperTransferFunction,
    NonFinite,
    PoleOnAxis,
    SingularTustin,
)

DEGREE_CAP = 64
POLE_ATOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class Polynomial:
    """Real polynomial with ascending coefficients and trailing zeros trimmed.

    The zero polynomial is stored as ``[0.0]`` and has degree 0.
    """

    __slots__ = ("coef",)

    def __init__(self, coefficients: Sequence[float]):
        c = np.atleast_1d(np.asarray(coefficients, dtype=float))
        if c.ndim != 1:
            raise ValueError("polynomial coefficients must be one-dimensional")
        if not np.all(np.isfinite(c)):
            raise NonFinite("polynomial coefficients must be finite")
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1)
        self.coef = _frozen(c)

    @property
    def degree(self) -> int:
        return len(self.coef) - 1

    def is_zero(self) -> bool:
        return self.degree == 0 and self.coef[0] == 0.0

    def __call__(self, s):
        return npoly.polyval(s, self.coef)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polymul(self.coef, other.coef))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polyadd(self.coef, other.coef))

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(self.coef, other.coef)

    def __hash__(self):
        return hash(self.coef.tobytes())

    def __repr__(self) -> str:
        return f"Polynomial({self.coef.tolist()})"

    def scale_at(self, w: float) -> float:
        """Sum of ``|c_i| w^i``, the natural magnitude scale at ``|s| = w``."""
        return float(np.sum(np.abs(self.coef) * w ** np.arange(len(self.coef))))

    def lowest_order(self) -> int:
        """Multiplicity of the root at ``s = 0`` (0 for the zero polynomial)."""
        nz = np.flatnonzero(self.coef)
        return int(nz[0]) if nz.size else 0


class TransferFunction:
    """SISO rational transfer function ``num(s)/den(s)``."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=(1.0,)):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero():
            raise ValueError("denominator is the zero polynomial")
        self.num = num
        self.den = den

    @property
    def is_proper(self) -> bool:
        return self.num.is_zero() or self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero() or self.num.degree < self.den.degree

    @property
    def order(self) -> int:
        return max(self.num.degree, self.den.degree)

    def __call__(self, w: float) -> complex:
        return tf_eval(self, w)

    def __mul__(self, other: "TransferFunction") -> "TransferFunction":
        return tf_series(self, other)

    def __add__(self, other: "TransferFunction") -> "TransferFunction":
        return tf_parallel(self, other)

    def __repr__(self) -> str:
        return f"TransferFunction(num={self.num.coef.tolist()}, den={self.den.coef.tolist()})"

    def to_dict(self) -> dict:
        return {"num": self.num.coef.tolist(), "den": self.den.coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TransferFunction":
        return cls(d["num"], d.get("den", [1.0]))

    def poles(self) -> np.ndarray:
        return npoly.polyroots(self.den.coef) if self.den.degree else np.zeros(0)

    def is_hurwitz(self) -> bool:
        return bool(np.all(self.poles().real < 0))


def _canonical(num: Polynomial, den: Polynomial) -> TransferFunction:
    if num.degree > DEGREE_CAP or den.degree > DEGREE_CAP:
        raise DegreeOverflow(
            f"composed degree {max(num.degree, den.degree)} exceeds cap {DEGREE_CAP}"
        )
    k = np.max(np.abs(den.coef))
    return TransferFunction(num.coef / k, den.coef / k)


def gain(k: float) -> TransferFunction:
    return TransferFunction([k], [1.0])


def integrator(k: float = 1.0) -> TransferFunction:
    """``k/s``."""
    return TransferFunction([k], [0.0, 1.0])


def lead_lag(w_zero: float, w_pole: float) -> TransferFunction:
    """``(s/w_zero + 1)/(s/w_pole + 1)``."""
    return TransferFunction([1.0, 1.0 / w_zero], [1.0, 1.0 / w_pole])


def lowpass(w_pole: float) -> TransferFunction:
    """``1/(s/w_pole + 1)``."""
    return TransferFunction([1.0], [1.0, 1.0 / w_pole])


def zero_factor(w_zero: float) -> TransferFunction:
    """``s/w_zero + 1`` (improper on its own)."""
    return TransferFunction([1.0, 1.0 / w_zero], [1.0])


def pi_factor(w_i: float) -> TransferFunction:
    """``1 + w_i/s``."""
    return TransferFunction([w_i, 1.0], [0.0, 1.0])


def tf_eval(tf: TransferFunction, w: float) -> complex:
    """Evaluate ``G(jw)``.

    Raises
    ------
    PoleOnAxis
        If the denominator vanishes at ``jw`` relative to its scale.
    """
    s = 1j * w
    d = tf.den(s)
    if abs(d) <= POLE_ATOL * tf.den.scale_at(abs(w)):
        raise PoleOnAxis(f"denominator vanishes at w={w}")
    return complex(tf.num(s) / d)


def tf_freqresp(tf: TransferFunction, w) -> np.ndarray:
    """Vectorized ``G(jw)`` without the pole check."""
    s = 1j * np.asarray(w, dtype=float)
    return tf.num(s) / tf.den(s)


def tf_series(*tfs: TransferFunction) -> TransferFunction:
    num, den = Polynomial([1.0]), Polynomial([1.0])
    for g in tfs:
        num, den = num * g.num, den * g.den
    return _canonical(num, den)


def tf_parallel(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    if a.den == b.den:
        return _canonical(a.num + b.num, a.den)
    return _canonical(a.num * b.den + b.num * a.den, a.den * b.den)


def tf_feedback_unity(loop: TransferFunction) -> TransferFunction:
    """Complementary sensitivity ``L/(1+L)``."""
    return _canonical(loop.num, loop.den + loop.num)


def tf_sensitivity(loop: TransferFunction) -> TransferFunction:
    """Sensitivity ``1/(1+L)``."""
    return _canonical(loop.den, loop.den + loop.num)


def tf_scale(tf: TransferFunction, k: float) -> TransferFunction:
    return TransferFunction(tf.num.coef * k, tf.den.coef)


# ---------------------------------------------------------------------------
# state space


@dataclass(frozen=True)
class StateSpace:
    """``(A, B, C, D)`` realization; ``dt is None`` marks continuous time."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0] if A.size else 0
        A = A.reshape(n, n)
        B = B.reshape(n, -1) if n else np.zeros((0, D.shape[1]))
        C = C.reshape(-1, n) if n else np.zeros((D.shape[0], 0))
        if B.shape[1] != D.shape[1] or C.shape[0] != D.shape[0]:
            raise ValueError("inconsistent state-space dimensions")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("discrete models need a positive step")
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization of a proper transfer function."""
    if not tf.is_proper:
        raise ImproperTransferFunction(f"cannot realize improper {tf!r}")
    den = tf.den.coef
    n = tf.den.degree
    a = den / den[-1]
    b = np.zeros(n + 1)
    b[: len(tf.num.coef)] = tf.num.coef / den[-1]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[b[0]]])
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    d = b[n]
    C = (b[:n] - d * a[:n]).reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def tf_to_ss_scaled(tf: TransferFunction) -> StateSpace:
    """Balanced realization built in the frequency-scaled variable ``s/w0``.

    ``w0`` is the geometric mean of the nonzero pole magnitudes, which keeps
    the companion-form coefficients near unity for wide-band filters.
    """
    if not tf.is_proper:
        raise ImproperTransferFunction(f"cannot realize improper {tf!r}")
    poles = np.abs(tf.poles())
    poles = poles[poles > 0]
    w0 = float(np.exp(np.mean(np.log(poles)))) if poles.size else 1.0
    k = w0 ** np.arange(max(len(tf.num.coef), len(tf.den.coef)))
    ss = tf_to_ss(TransferFunction(tf.num.coef * k[: len(tf.num.coef)], tf.den.coef * k[: len(tf.den.coef)]))
    return ss_balance(StateSpace(ss.A * w0, ss.B * w0, ss.C, ss.D))


def ss_balance(ss: StateSpace) -> StateSpace:
    """Diagonal similarity that balances ``A`` (improves conditioning)."""
    if ss.n_states == 0:
        return ss
    Ab, T = matrix_balance(ss.A, permute=False, separate=True)
    d = T[0]
    return StateSpace(Ab, ss.B / d[:, None], ss.C * d[None, :], ss.D, ss.dt)


def ss_freqresp(ss: StateSpace, w: float) -> np.ndarray:
    """``C (jwI - A)^{-1} B + D`` for a continuous model."""
    n = ss.n_states
    if n == 0:
        return ss.D.astype(complex)
    return ss.C @ np.linalg.solve(1j * w * np.eye(n) - ss.A, ss.B) + ss.D


def ss_series(first: StateSpace, second: StateSpace) -> StateSpace:
    """Output of ``first`` drives ``second``."""
    n1, n2 = first.n_states, second.n_states
    A = np.block(
        [
            [first.A, np.zeros((n1, n2))],
            [second.B @ first.C, second.A],
        ]
    )
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpace(A, B, C, D, first.dt)


def ss_feedback_unity(loop: StateSpace) -> StateSpace:
    """SISO sensitivity ``e = r - y`` with ``y = loop(e)``; output ``e``."""
    k = 1.0 / (1.0 + loop.D[0, 0])
    A = loop.A - k * loop.B @ loop.C
    B = k * loop.B
    C = -k * loop.C
    return StateSpace(A, B, C, [[k]], loop.dt)


# ---------------------------------------------------------------------------
# matrix exponential

_PADE13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)
_PADE13 = _PADE13 / _PADE13[0]  # unit constant term keeps expm(0) exact
_THETA13 = 5.371920351148152


def expm(A) -> np.ndarray:
    """Matrix exponential by degree-13 Pade scaling and squaring.

    Parameters
    ----------
    A : array_like, shape (n, n)

    Raises
    ------
    NonFinite
        On non-finite input or overflow of the result.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if not np.all(np.isfinite(A)):
        raise NonFinite("expm input has non-finite entries")
    norm = np.linalg.norm(A, 1)
    s = 0
    if norm > _THETA13:
        s = int(np.ceil(np.log2(norm / _THETA13)))
    A = A / 2.0**s
    b = _PADE13
    I = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            R = R @ R
    if not np.all(np.isfinite(R)):
        raise NonFinite("expm overflowed")
    return R


class ImpulseResponse(NamedTuple):
    samples: np.ndarray
    """Shape ``(len(t), q, p)``; the ``D`` impulse is excluded."""
    has_feedthrough: bool


MODAL_COND = 1e4


def _modal_form(ss: StateSpace):
    """``(lambda, C V, V^{-1} B)`` when the eigenvectors are well conditioned."""
    lam, V = np.linalg.eig(ss.A)
    if not np.isfinite(V).all() or np.linalg.cond(V) > MODAL_COND:
        return None
    return lam, ss.C @ V, np.linalg.solve(V, ss.B.astype(complex))


def impulse_response(ss: StateSpace, t_grid, method: str = "auto") -> ImpulseResponse:
    """Sample ``C expm(A t) B`` on ``t_grid``.

    ``method="auto"`` sums modes when ``A`` has a well-conditioned
    eigenbasis. Otherwise a uniform grid is propagated by exponential steps,
    32 single steps and then whole blocks of 32, and an irregular grid gets
    one exponential per sample. ``"expm"`` forces the exponential route.
    """
    if method not in ("auto", "modal", "expm"):
        raise ValueError(f"unknown method {method!r}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a nonempty 1-D array")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing and nonnegative")
    q, p = ss.D.shape
    out = np.zeros((t.size, q, p))
    has_ft = bool(np.any(ss.D != 0))
    if ss.n_states == 0:
        return ImpulseResponse(out, has_ft)
    modal = _modal_form(ss) if method in ("auto", "modal") else None
    if method == "modal" and modal is None:
        raise NonFinite("eigenvector matrix is too ill-conditioned for the modal route")
    dts = np.diff(t)
    if modal is not None:
        lam, cv, vb = modal
        out[:] = np.einsum("qn,in,np->iqp", cv, np.exp(np.outer(t, lam)), vb).real
    elif t.size > 1 and np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        # first block by single steps, later blocks by one jump of ``m`` steps
        m = min(32, t.size)
        step = expm(ss.A * dts[0])
        X = expm(ss.A * t[0]) @ ss.B
        block = np.empty((m,) + X.shape)
        for i in range(m):
            block[i] = X
            X = step @ X
        jump = expm(ss.A * (m * dts[0]))
        for k0 in range(0, t.size, m):
            k1 = min(k0 + m, t.size)
            out[k0:k1] = np.einsum("qn,inp->iqp", ss.C, block[: k1 - k0])
            block = np.einsum("nk,ikp->inp", jump, block)
    else:
        for i, ti in enumerate(t):
            out[i] = ss.C @ expm(ss.A * ti) @ ss.B
    return ImpulseResponse(out, has_ft)


def tustin(ss: StateSpace, fs: float) -> StateSpace:
    """Bilinear discretization at sample rate ``fs``.

    Trapezoidal integration of the continuous state, shifted so the
    discrete state is ``x - Gamma u``.
    """
    if ss.is_discrete:
        raise ValueError("model is already discrete")
    if not fs > 0:
        raise ValueError("sample rate must be positive")
    T = 1.0 / fs
    n = ss.n_states
    if n == 0:
        return StateSpace(ss.A, ss.B, ss.C, ss.D, T)
    M = np.eye(n) - ss.A * (T / 2)
    if np.linalg.cond(M) > 1e14:
        raise SingularTustin("I - A T/2 is singular")
    Minv = np.linalg.inv(M)
    Phi = Minv @ (np.eye(n) + ss.A * (T / 2))
    Gam = Minv @ ss.B * (T / 2)
    return StateSpace(Phi, (Phi + np.eye(n)) @ Gam, ss.C, ss.D + ss.C @ Gam, T)


def dss_freqresp(ss: StateSpace, w: float) -> np.ndarray:
    """Frequency response of a discrete model at ``w`` rad/s."""
    z = np.exp(1j * w * ss.dt)
    n = ss.n_states
    if n == 0:
        return ss.D.astype(complex)
    return ss.C @ np.linalg.solve(z * np.eye(n) - ss.A, ss.B) + ss.D


def dss_simulate(ss: StateSpace, u) -> np.ndarray:
    """Response of a discrete SISO-or-MIMO model to the input sequence ``u``."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    x = np.zeros(ss.n_states)
    y = np.empty((u.shape[0], ss.D.shape[0]))
    for k in range(u.shape[0]):
        y[k] = ss.C @ x + ss.D @ u[k]
        x = ss.A @ x + ss.B @ u[k]
    return y


# ---------------------------------------------------------------------------
# limits at s -> 0


@dataclass(frozen=True)
class LimitAtZero:
    kind: str  # "finite", "infinite" or "zero_over_zero_resolved"
    value: float | None = None

    @property
    def is_zero(self) -> bool:
        return self.value is not None and self.value == 0.0


def limit_at_zero(tf: TransferFunction) -> LimitAtZero:
    """Limit of ``tf(s)`` as ``s -> 0`` by cancelling common powers of ``s``."""
    if tf.num.is_zero():
        return LimitAtZero("finite", 0.0)
    kn, kd = tf.num.lowest_order(), tf.den.lowest_order()
    k = min(kn, kd)
    num, den = tf.num.coef[k:], tf.den.coef[k:]
    if den[0] == 0.0:
        return LimitAtZero("infinite")
    value = float(num[0] / den[0])
    return LimitAtZero("zero_over_zero_resolved" if k > 0 else "finite", value)
