"""Displacement laws and their radial moments.

A displacement ``psi`` moves a new particle away from its parent by
``d * psi``.  Only the radial part ``eta = |psi|`` and its truncation
``min(eta, 1)`` enter the boundedness and spacing results, so those moments
are provided in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from scipy import special

from .rng import as_stream

UNIFORM, NORMAL, POWER, ISONORMAL, DETERMINISTIC = range(5)
_CODES = {"uniform": UNIFORM, "normal": NORMAL, "power": POWER,
          "isonormal": ISONORMAL, "deterministic": DETERMINISTIC}


class DivergentMomentError(ValueError):
    """The requested moment of eta is infinite."""


class NonTerminatingLawError(ValueError):
    """min(eta, 1) equals 1 almost surely, so the running product never shrinks."""


@dataclass(frozen=True)
class DisplacementLaw:
    kind: str
    a: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    p: float = 0.0
    q: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ValueError(f"unknown law {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind in ("uniform", "normal") and self.dim != 1:
            raise ValueError(f"{self.kind} law is one-dimensional")
        if self.kind in ("normal", "isonormal") and not self.a > 0:
            raise ValueError("scale a must be positive")
        if self.kind == "power":
            if not self.alpha > 1:
                raise ValueError("alpha must exceed 1")
            if not self.beta > 0:
                raise ValueError("beta must be positive")
            if not 0 < self.p < 1:
                raise ValueError("p must lie in (0, 1)")
        if self.kind == "deterministic" and not self.q > 0:
            raise ValueError("q must be positive")

    # constructors -----------------------------------------------------
    @classmethod
    def uniform(cls) -> "DisplacementLaw":
        """psi ~ Unif[-1, 1]."""
        return cls("uniform")

    @classmethod
    def normal(cls, a: float) -> "DisplacementLaw":
        """psi ~ N(0, a^2)."""
        return cls("normal", a=float(a))

    @classmethod
    def power_mixture(cls, alpha: float, beta: float, p: float, dim: int = 1) -> "DisplacementLaw":
        """P(eta < y) = (1-p) y^beta on [0,1), 1 - p y^-alpha beyond; random direction."""
        return cls("power", alpha=float(alpha), beta=float(beta), p=float(p), dim=dim)

    @classmethod
    def isotropic_normal(cls, a: float, dim: int) -> "DisplacementLaw":
        return cls("isonormal", a=float(a), dim=int(dim))

    @classmethod
    def deterministic(cls, q: float, dim: int = 1) -> "DisplacementLaw":
        """|psi| = q with a uniformly random direction."""
        return cls("deterministic", q=float(q), dim=dim)

    # numba view -------------------------------------------------------
    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a, self.alpha, self.beta, self.p, self.q, float(self.dim)])

    def shrinks(self) -> bool:
        """True when P(min(eta, 1) < 1) > 0."""
        return self.kind != "deterministic" or self.q < 1

    # text form used by the CLI -----------------------------------------
    def __str__(self) -> str:
        keys = {"uniform": (), "normal": ("a",), "power": ("alpha", "beta", "p", "dim"),
                "isonormal": ("a", "dim"), "deterministic": ("q", "dim")}[self.kind]
        if not keys:
            return self.kind
        return self.kind + ":" + ",".join(f"{k}={getattr(self, k)!r}" for k in keys)

    @classmethod
    def parse(cls, text: str) -> "DisplacementLaw":
        kind, _, rest = text.strip().partition(":")
        kw = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            k, eq, v = item.partition("=")
            if not eq:
                raise ValueError(f"malformed law parameter {item!r}")
            kw[k.strip()] = int(v) if k.strip() == "dim" else float(v)
        return cls(kind.strip(), **kw)


# ----------------------------------------------------------------------
# sampling kernels


@njit(cache=True, nogil=True)
def _direction(dim, rng, out):
    if dim == 1:
        out[0] = -1.0 if rng.random() < 0.5 else 1.0
        return
    s = 0.0
    for k in range(dim):
        z = rng.standard_normal()
        out[k] = z
        s += z * z
    s = np.sqrt(s)
    for k in range(dim):
        out[k] /= s


@njit(cache=True, nogil=True)
def draw_psi(code, prm, rng, out):
    """Write one draw of psi into ``out`` and return eta = |psi|."""
    if code == UNIFORM:
        v = 2.0 * rng.random() - 1.0
        out[0] = v
        return abs(v)
    if code == NORMAL:
        v = prm[0] * rng.standard_normal()
        out[0] = v
        return abs(v)
    if code == ISONORMAL:
        s = 0.0
        for k in range(out.shape[0]):
            v = prm[0] * rng.standard_normal()
            out[k] = v
            s += v * v
        if out.shape[0] == 1:
            return abs(out[0])
        return np.sqrt(s)
    if code == POWER:
        u = rng.random()
        alpha, beta, p = prm[1], prm[2], prm[3]
        if u < 1.0 - p:
            eta = (u / (1.0 - p)) ** (1.0 / beta)
        else:
            eta = (p / (1.0 - u)) ** (1.0 / alpha)
    else:
        eta = prm[4]
    _direction(out.shape[0], rng, out)
    for k in range(out.shape[0]):
        out[k] *= eta
    return eta


@njit(cache=True, nogil=True)
def _draw_eta_many(code, prm, dim, rng, n):
    out = np.empty(n)
    buf = np.empty(dim)
    for i in range(n):
        out[i] = draw_psi(code, prm, rng, buf)
    return out


@njit(cache=True, nogil=True)
def _draw_psi_many(code, prm, dim, rng, n):
    out = np.empty((n, dim))
    for i in range(n):
        draw_psi(code, prm, rng, out[i])
    return out


@njit(cache=True, nogil=True)
def _sample_H_many(code, prm, dim, rng, n, tail_eps):
    out = np.empty(n)
    buf = np.empty(dim)
    for i in range(n):
        h = 0.0
        prod = 1.0
        while prod >= tail_eps:
            eta = draw_psi(code, prm, rng, buf)
            v = prod * eta
            if v > h:
                h = v
            if eta < 1.0:
                prod *= eta
        out[i] = h
    return out


def sample_psi(law: DisplacementLaw, rng):
    """One draw of psi: a signed float in 1D, a ``dim``-vector otherwise."""
    rng = as_stream(rng)
    out = _draw_psi_many(law.code, law.params, law.dim, rng, 1)[0]
    return float(out[0]) if law.dim == 1 else out


def sample_psi_many(law: DisplacementLaw, n: int, rng) -> np.ndarray:
    return _draw_psi_many(law.code, law.params, law.dim, as_stream(rng), int(n))


def sample_eta(law: DisplacementLaw, n: int, rng) -> np.ndarray:
    return _draw_eta_many(law.code, law.params, law.dim, as_stream(rng), int(n))


def sample_H(law: DisplacementLaw, rng, n: int | None = None, tail_eps: float = 1e-12):
    """Realisations of H = max_k eta_k * prod_{i<k} min(eta_i, 1).

    The running product is stopped once it falls below ``tail_eps``; later
    terms are then at most ``tail_eps`` times an eta draw.
    """
    if not law.shrinks():
        raise NonTerminatingLawError("min(eta, 1) = 1 almost surely")
    rng = as_stream(rng)
    out = _sample_H_many(law.code, law.params, law.dim, rng, 1 if n is None else int(n), tail_eps)
    return float(out[0]) if n is None else out


# ----------------------------------------------------------------------
# moments


def _chi_moment(a: float, dim: int, t: float) -> float:
    log_m = (t * math.log(a) + 0.5 * t * math.log(2.0)
             + special.gammaln(0.5 * (dim + t)) - special.gammaln(0.5 * dim))
    return math.exp(log_m) if log_m < 709.0 else math.inf


def _truncated_chi_moment(a: float, d2: float, t: float, x: float) -> float:
    """E[eta^t; eta < 1] in log space; the full moment overflows for large t."""
    s = d2 + 0.5 * t
    g = special.gammainc(s, x)
    # leading series term of the lower incomplete gamma once gammainc underflows
    log_low = math.log(g) + special.gammaln(s) if g > 0 else s * math.log(x) - x - math.log(s)
    return math.exp(0.5 * t * math.log(2 * a * a) + log_low - special.gammaln(d2))


def eta_moment(law: DisplacementLaw, t: float) -> float:
    """E eta^t."""
    if not t > 0:
        raise ValueError("t must be positive")
    k = law.kind
    if k == "uniform":
        return 1.0 / (t + 1.0)
    if k in ("normal", "isonormal"):
        return _chi_moment(law.a, law.dim, t)
    if k == "power":
        if t >= law.alpha:
            raise DivergentMomentError(f"E eta^{t} diverges for alpha={law.alpha}")
        return (1 - law.p) * law.beta / (law.beta + t) + law.p * law.alpha / (law.alpha - t)
    return law.q ** t


def eta_hat_moment(law: DisplacementLaw, t: float) -> float:
    """E min(eta, 1)^t."""
    if not t > 0:
        raise ValueError("t must be positive")
    k = law.kind
    if k == "uniform":
        return 1.0 / (t + 1.0)
    if k in ("normal", "isonormal"):
        x = 0.5 / law.a ** 2
        d2 = 0.5 * law.dim
        return _truncated_chi_moment(law.a, d2, t, x) + special.gammaincc(d2, x)
    if k == "power":
        return (1 - law.p) * law.beta / (law.beta + t) + law.p
    return min(law.q, 1.0) ** t


def phi_value(law: DisplacementLaw, t: float) -> float:
    return 1.0 - (eta_moment(law, t) + eta_hat_moment(law, t))


@dataclass(frozen=True)
class TheoryConstants:
    C: float
    C_hat: float
    law: DisplacementLaw = field(repr=False)

    @property
    def phi(self) -> Callable[[float], float]:
        return lambda t: phi_value(self.law, t)

    @property
    def sigma(self) -> float | None:
        from .theory import sigma_exponent
        return sigma_exponent(self.law)


def constants(law: DisplacementLaw) -> TheoryConstants:
    return TheoryConstants(eta_moment(law, 1.0), eta_hat_moment(law, 1.0), law)


# ----------------------------------------------------------------------
# closed-form law of H for the power mixture


@dataclass(frozen=True)
class HLaw:
    """Closed forms for the power-mixture eta.

    ``F`` is the cdf of log(eta), ``G(t) = P(log H < t)`` and ``H(x) = P(H < x)``.
    With ``printed=True`` the t < 0 branch of ``G`` carries the constant factor
    ``e^beta`` instead of ``e^(beta t)``; that variant is kept only to show that
    it does not solve the integral equation.
    """

    alpha: float
    beta: float
    p: float
    printed: bool = False

    @property
    def _k(self) -> float:
        return (self.p / (1 - self.p) + 1) ** (-1 - self.beta / self.alpha)

    def F(self, t):
        t = np.asarray(t, dtype=float)
        neg = (1 - self.p) * np.exp(self.beta * np.minimum(t, 0.0))
        pos = 1 - self.p * np.exp(-self.alpha * np.maximum(t, 0.0))
        return np.where(t <= 0, neg, pos)

    def G(self, t):
        t = np.asarray(t, dtype=float)
        e = -1 - self.beta / self.alpha
        if self.printed:
            neg = np.full_like(t, self._k * math.exp(self.beta))
        else:
            neg = self._k * np.exp(self.beta * np.minimum(t, 0.0))
        pos = (self.p / (1 - self.p) * np.exp(-self.alpha * np.maximum(t, 0.0)) + 1) ** e
        return np.where(t < 0, neg, pos)

    def H(self, x):
        x = np.asarray(x, dtype=float)
        e = -1 - self.beta / self.alpha
        low = self._k * np.maximum(x, 0.0) ** self.beta
        with np.errstate(divide="ignore"):
            high = (self.p / (1 - self.p) * np.maximum(x, 1.0) ** (-self.alpha) + 1) ** e
        return np.where(x < 0, 0.0, np.where(x < 1, low, high))


def h_law_analytic(alpha: float, beta: float, p: float, printed: bool = False) -> HLaw:
    DisplacementLaw.power_mixture(alpha, beta, p)  # domain check
    return HLaw(float(alpha), float(beta), float(p), printed)
