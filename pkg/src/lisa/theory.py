"""Analytic side: phi and sigma, boundedness bounds and thresholds, the
integral equation for the law of H, the Dubbins–Freedman random CDF and the
coupled spacing-bound array."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import optimize, special

from .distributions import (
    DisplacementLaw,
    DivergentMomentError,
    TheoryConstants,
    constants,
    eta_hat_moment,
    eta_moment,
    phi_value,
)
from .engine import Trace
from .nn_index import NeighborIndex, idx_insert
from .rng import as_stream, stream


class ConditionViolatedError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    pass


class DecoupledStreamError(ValueError):
    """The spacing array and the trace disagree on the step being applied."""


def _consts(law_or_consts) -> TheoryConstants:
    if isinstance(law_or_consts, TheoryConstants):
        return law_or_consts
    return constants(law_or_consts)


# ----------------------------------------------------------------------
# phi and sigma


def phi(law: DisplacementLaw, t: float) -> float:
    return phi_value(law, t)


def _t_upper(law: DisplacementLaw) -> float:
    if law.kind == "power":
        return min(1e3, law.alpha * (1 - 1e-9))
    return 1e3


def sigma_exponent(law: DisplacementLaw, return_t: bool = False):
    """sup over t > 0 of phi(t)/t, or None when phi <= 0 on the whole range.

    A coarse scan over log t in [1e-3, 1e3] (capped below alpha for the power
    mixture) brackets the maximum, which bounded Brent refinement then locates
    to 1e-9 in log t.
    """
    lo, hi = math.log(1e-3), math.log(_t_upper(law))

    def ratio(s):
        t = math.exp(s)
        try:
            v = phi_value(law, t) / t
        except DivergentMomentError:
            return -np.inf
        return v if v == v else -np.inf

    grid = np.linspace(lo, hi, 801)
    vals = np.array([ratio(s) for s in grid])
    j = int(np.argmax(vals))
    if not vals[j] > 0:
        return (None, None) if return_t else None
    a, b = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda s: -ratio(s), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-10})
    s_best, v_best = (res.x, -res.fun) if -res.fun >= vals[j] else (grid[j], vals[j])
    return (float(v_best), math.exp(s_best)) if return_t else float(v_best)


# ----------------------------------------------------------------------
# bounds


def markov_bound(law, E_phi1: float) -> float:
    """C (1 + E phi_1) / (1 - C_hat)."""
    c = _consts(law)
    if c.C_hat >= 1:
        raise ConditionViolatedError("needs C_hat < 1")
    return c.C * (1 + E_phi1) / (1 - c.C_hat)


def initial_constants(points) -> tuple[float, float, int]:
    """(A0, D0, n0): largest initial norm, largest initial nearest distance, size."""
    from .nn_index import brute_nearest
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    A0 = float(np.sqrt((pts ** 2).sum(axis=1)).max())
    D0 = float(brute_nearest(pts).max()) if len(pts) > 1 else 0.0
    return A0, D0, len(pts)


def sup_bound_th2(law, A0: float, D0: float, n0: int) -> float:
    """A0 + n0 D0 C / (1 - C_hat - C); requires C + C_hat < 1."""
    c = _consts(law)
    if c.C + c.C_hat >= 1:
        raise ConditionViolatedError(f"C + C_hat = {c.C + c.C_hat:.6g} >= 1")
    return A0 + n0 * D0 * c.C / (1 - c.C_hat - c.C)


# ----------------------------------------------------------------------
# thresholds for the scaled-normal family


@dataclass(frozen=True)
class ThresholdResult:
    criterion: str
    root: float
    ci: tuple[float, float]
    evaluations: int
    replicas: int = 0


def moment_sum(a: float) -> float:
    law = DisplacementLaw.normal(a)
    return eta_moment(law, 1.0) + eta_hat_moment(law, 1.0)


@njit(cache=True, nogil=True)
def _max_functional_normal(a, z, tail_eps):
    """H for eta_k = a |z_k|; a row that runs out of draws keeps its partial max."""
    R, K = z.shape
    out = np.empty(R)
    for r in range(R):
        h = 0.0
        prod = 1.0
        for k in range(K):
            eta = a * z[r, k]
            v = prod * eta
            if v > h:
                h = v
            if eta < 1.0:
                prod *= eta
            if prod < tail_eps:
                break
        out[r] = h
    return out


class CommonNormals:
    """Fixed |Z| draws reused for every scale a, regenerated chunk by chunk."""

    def __init__(self, replicas: int, seed: int, depth: int = 96, chunk: int = 100_000):
        self.replicas, self.seed, self.depth, self.chunk = replicas, seed, depth, chunk

    def chunks(self):
        for c, start in enumerate(range(0, self.replicas, self.chunk)):
            m = min(self.chunk, self.replicas - start)
            yield np.abs(stream(self.seed, c).standard_normal((m, self.depth)))

    def mean_H(self, a: float, tail_eps: float = 1e-12) -> tuple[float, float]:
        s = s2 = 0.0
        for z in self.chunks():
            h = _max_functional_normal(a, z, tail_eps)
            s += h.sum()
            s2 += (h * h).sum()
        n = self.replicas
        m = s / n
        return m, math.sqrt(max(s2 / n - m * m, 0.0) / n)


def boundedness_threshold(criterion: str = "moment-sum", replicas: int = 1_000_000,
                          seed: int = 0, xtol: float = 1e-5,
                          bracket: tuple[float, float] = (0.05, 3.0)) -> ThresholdResult:
    """Root in a of C(a) + C_hat(a) = 1 or of E H(a) = 1 for psi ~ N(0, a^2)."""
    lo, hi = bracket
    if criterion == "moment-sum":
        f = lambda a: moment_sum(a) - 1.0
        if not f(lo) < 0 < f(hi):
            raise ValueError("bracket does not straddle the root")
        root, info = optimize.bisect(f, lo, hi, xtol=xtol * 1e-2, full_output=True)
        return ThresholdResult(criterion, float(root), (float(root - xtol), float(root + xtol)), info.iterations)
    if criterion != "max-functional":
        raise ValueError(f"unknown criterion {criterion!r}")
    crn = CommonNormals(replicas, seed)
    evals = 0

    def f(a):
        nonlocal evals
        evals += 1
        return crn.mean_H(a)[0] - 1.0

    if not f(lo) < 0 < f(hi):
        raise ValueError("bracket does not straddle the root")
    # with common draws E H(a) is monotone in a, so bisection is well posed
    root = optimize.bisect(f, lo, hi, xtol=xtol)
    m, se = crn.mean_H(root)
    h = max(1e-3, 10 * xtol)
    slope = (crn.mean_H(root + h)[0] - crn.mean_H(root - h)[0]) / (2 * h)
    evals += 3
    half = 1.96 * se / slope + xtol
    return ThresholdResult(criterion, float(root), (float(root - half), float(root + half)), evals, replicas)


def moment_sum_grid_root(lo: float = 0.05, hi: float = 3.0, points: int = 200_001) -> float:
    """Dense-grid root of C(a) + C_hat(a) = 1 from numerical quadrature of the half-normal."""
    from scipy import integrate

    def total(a):
        dens = lambda y: math.sqrt(2 / math.pi) / a * math.exp(-y * y / (2 * a * a))
        c = integrate.quad(lambda y: y * dens(y), 0, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
        below = integrate.quad(lambda y: y * dens(y), 0, 1, epsabs=1e-13, epsrel=1e-12)[0]
        above = integrate.quad(dens, 1, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
        return c + below + above - 1.0

    # coarse grid to bracket, then a dense grid inside the bracket
    g = np.linspace(lo, hi, 301)
    v = np.array([total(a) for a in g])
    j = int(np.flatnonzero(np.diff(np.sign(v)))[0])
    fine = np.linspace(g[j], g[j + 1], 201)
    fv = np.array([total(a) for a in fine])
    k = int(np.flatnonzero(np.diff(np.sign(fv)))[0])
    a0, a1, f0, f1 = fine[k], fine[k + 1], fv[k], fv[k + 1]
    return float(a0 - f0 * (a1 - a0) / (f1 - f0))


# ----------------------------------------------------------------------
# integral equation for G(t) = P(log H < t)


@dataclass
class GSolution:
    t: np.ndarray
    G: np.ndarray
    iterations: int

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.t, self.G, left=0.0, right=1.0)


def _grid(lim: float, points: int):
    t = np.linspace(-lim, lim, points)
    i0 = int(np.argmin(np.abs(t)))
    t = t - t[i0]  # put an exact zero on the grid
    return t, i0


def _cell_masses(F, t):
    h = t[1] - t[0]
    edges = np.concatenate([[-np.inf], 0.5 * (t[1:] + t[:-1]), [np.inf]])
    w = np.diff(np.asarray(F(edges), dtype=float))
    # lower half of each cell, used where the integration range ends at a node
    w_low = np.asarray(F(t), dtype=float) - np.asarray(F(t - 0.5 * h), dtype=float)
    w_low[0] = float(F(t[0]))
    return w, w_low


def _conv(a, b, n):
    m = 1 << int(math.ceil(math.log2(len(a) + len(b))))
    return np.fft.irfft(np.fft.rfft(a, m) * np.fft.rfft(b, m), m)[:n]


def int_eq_rhs(Gv: np.ndarray, t: np.ndarray, i0: int, w, w_low, Ft) -> np.ndarray:
    """Right-hand side of the fixed-point map on the grid.

    t < 0:  G(t) = int_{z<t} G(t-z) dF(z)
    t >= 0: G(t) = int_{z<0} G(t-z) dF(z) / (1 - (F(t) - F(0)))
    where F is the cdf of log(eta).  G is taken as 1 beyond the grid.
    """
    N = len(t)
    ext = np.concatenate([Gv, np.ones(N + 1)])
    # t_i - z_j = t_{i - j + i0}
    # t < 0: sum over j < i of w_j ext[i - j + i0], plus the half cell at j = i
    pos = ext[i0 + 1: i0 + 1 + N]              # ext[m + i0] for m = 1..N
    neg_full = _conv(w, pos, N)                # index i -> sum_{m=1..i} w_{i-m} pos[m-1]
    neg = np.concatenate([[0.0], neg_full[:-1]]) + w_low * Gv[i0]
    # t >= 0: sum over j < i0 of w_j ext[i - j + i0], plus the half cell at j = i0
    wl = np.zeros(N)
    wl[:i0] = w[:i0]
    full = _conv(wl, ext[: 2 * N + 1], 2 * N + 1)   # index k -> sum_j wl_j ext[k - j]
    posv = full[i0: i0 + N] + w_low[i0] * Gv
    denom = 1.0 - (Ft - Ft[i0])
    out = np.where(np.arange(N) < i0, neg, posv / np.maximum(denom, 1e-300))
    return np.clip(out, 0.0, 1.0), denom


def solve_G(F, lim: float = 30.0, points: int = 16385, damping: float = 0.5,
            tol: float = 1e-10, max_iter: int = 100_000) -> GSolution:
    """Damped fixed-point iteration for the law of log H on a uniform grid."""
    t, i0 = _grid(lim, points)
    w, w_low = _cell_masses(F, t)
    Ft = np.asarray(F(t), dtype=float)
    if not Ft[i0] > 0:
        raise ValueError("needs P(log eta < 0) > 0")
    G = np.clip(Ft, 0.0, 1.0)
    for it in range(1, max_iter + 1):
        T, denom = int_eq_rhs(G, t, i0, w, w_low, Ft)
        if it == 1 and not denom[i0:].min() > 0:
            raise ValueError("denominator 1 - (F(t) - F(0)) vanishes")
        new = (1 - damping) * G + damping * T
        change = np.max(np.abs(new - G))
        G = new
        if change < tol:
            return GSolution(t, G, it)
    raise NonConvergenceError(f"no convergence after {max_iter} iterations (change {change:.3g})")


def int_eq_residual(G, F, lim: float = 30.0, points: int = 16385) -> float:
    """sup |G - T G| on the grid for a candidate cdf G of log H."""
    t, i0 = _grid(lim, points)
    w, w_low = _cell_masses(F, t)
    Gv = np.asarray(G(t), dtype=float)
    T, _ = int_eq_rhs(Gv, t, i0, w, w_low, np.asarray(F(t), dtype=float))
    return float(np.max(np.abs(T - Gv)))


# ----------------------------------------------------------------------
# Dubbins–Freedman random distribution function


@dataclass
class DFTree:
    """Random CDF through nested uniform points; ``x``/``y`` sorted by abscissa,
    endpoints (0,0) and (1,1) included."""

    depth: int
    x: np.ndarray
    y: np.ndarray

    @property
    def root(self) -> tuple[float, float]:
        k = len(self.x) // 2
        return float(self.x[k]), float(self.y[k])

    def cdf(self, s):
        return np.interp(np.asarray(s, dtype=float), self.x, self.y)


def df_sample(depth: int, seed=0, first=None) -> DFTree:
    """Split each diagonal rectangle at a uniform point, ``depth`` levels deep.

    Level by level the node of rectangle [x0,x1]x[y0,y1] is
    (x0 + u (x1-x0), y0 + v (y1-y0)) with u, v independent uniforms.  ``first``
    injects (u, v) for the level-1 node.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rng = as_stream(seed)
    xs = np.array([0.0, 1.0])
    ys = np.array([0.0, 1.0])
    for level in range(depth):
        uv = rng.random((len(xs) - 1, 2))
        if level == 0 and first is not None:
            uv[0] = first
        nx = xs[:-1] + uv[:, 0] * np.diff(xs)
        ny = ys[:-1] + uv[:, 1] * np.diff(ys)
        X = np.empty(2 * len(xs) - 1)
        Y = np.empty_like(X)
        X[0::2], X[1::2] = xs, nx
        Y[0::2], Y[1::2] = ys, ny
        xs, ys = X, Y
    return DFTree(depth, xs, ys)


def df_level1_many(replicas: int, seed: int = 0) -> np.ndarray:
    """Level-1 nodes of independent trees; they depend on the first (u, v) only."""
    return stream(seed, 0).random((replicas, 2))


# ----------------------------------------------------------------------
# spacing-bound array coupled to a trace


class SpacingBoundArray:
    """Delta_{n,k}: per-particle upper bounds for the nearest distances.

    Each step multiplies the parent's entry by min(eta, 1) and gives the child
    the parent's old entry times eta.  ``log_martingale`` is
    log( prod_{n0<=j<n} (1 - phi(t)/j)^-1 * sum_k Delta_{n,k}^t ).
    """

    def __init__(self, initial_nearest, t: float, phi_t: float):
        d = np.asarray(initial_nearest, dtype=float)
        self.values = list(d)
        self.t = float(t)
        self.phi_t = float(phi_t)
        self.n0 = len(d)
        self.power_sum = float(np.sum(d ** t))

    @classmethod
    def for_law(cls, initial_nearest, law: DisplacementLaw, t: float) -> "SpacingBoundArray":
        return cls(initial_nearest, t, phi_value(law, t))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def log_martingale(self) -> float:
        n, n0, f = self.n, self.n0, self.phi_t
        log_norm = (special.gammaln(n - f) - special.gammaln(n0 - f)
                    - special.gammaln(n) + special.gammaln(n0))
        return math.log(self.power_sum) - log_norm

    @property
    def martingale(self) -> float:
        return math.exp(self.log_martingale)

    def step(self, chi: int, eta: float, eta_hat: float | None = None, n: int | None = None):
        return spacing_array_step(self, chi, eta, eta_hat, n)


def spacing_array_step(arr: SpacingBoundArray, chi: int, eta: float, eta_hat: float | None = None,
                       n: int | None = None) -> SpacingBoundArray:
    """Apply one step in place; ``chi`` is 1-based, ``n`` the trace's size before the step."""
    if n is not None and n != arr.n:
        raise DecoupledStreamError(f"array holds {arr.n} particles, step expects {n}")
    if not 1 <= chi <= arr.n:
        raise DecoupledStreamError(f"parent {chi} does not exist among {arr.n} particles")
    eh = min(eta, 1.0) if eta_hat is None else eta_hat
    old = arr.values[chi - 1]
    t = arr.t
    arr.values[chi - 1] = old * eh
    arr.values.append(old * eta)
    arr.power_sum += (old * eh) ** t + (old * eta) ** t - old ** t
    return arr


@njit(cache=True)
def _replay(pts0, nn0, xs, chi, eta, t, check_every, cps, s):
    n0 = pts0.shape[0]
    steps = chi.shape[0]
    delta = np.empty(n0 + steps)
    delta[:n0] = nn0
    psum = 0.0
    for k in range(n0):
        psum += nn0[k] ** t
    worst = 0.0
    violations = 0
    out = np.empty(cps.shape[0])
    c = 0
    p = np.empty(1)
    for k in range(steps):
        n = n0 + k
        j = chi[k] - 1
        old = delta[j]
        eh = min(eta[k], 1.0)
        delta[j] = old * eh
        delta[n] = old * eta[k]
        psum += delta[j] ** t + delta[n] ** t - old ** t
        p[0] = xs[k]
        idx_insert(s, p, j)
        # the child's coordinate is rounded at ulp(|x|), which can be large next to d
        slack = 8 * 2.220446049250313e-16 * (1.0 + abs(xs[k]))
        for i in (j, n):
            if s.nn[i] > delta[i] * (1 + 1e-12) + slack:
                violations += 1
            if delta[i] > 0 and s.nn[i] / delta[i] > worst:
                worst = s.nn[i] / delta[i]
        if (k + 1) % check_every == 0:
            psum = 0.0
            for i in range(n + 1):
                psum += delta[i] ** t
        while c < cps.shape[0] and cps[c] == n + 1:
            out[c] = psum
            c += 1
    return violations, worst, out


@dataclass(frozen=True)
class DominationReport:
    violations: int
    worst_ratio: float
    checkpoints: np.ndarray
    log_martingale: np.ndarray


def domination_replay(trace: Trace, t: float, checkpoints=(), law: DisplacementLaw | None = None
                      ) -> DominationReport:
    """Rebuild a 1D CL* trace with a fresh index next to the Delta array.

    Only the two entries touched by a step change, and nearest distances never
    increase, so checking d(x) <= Delta at those two entries after each step
    checks the whole array at all times.
    """
    rec = trace.records
    if rec.chi is None or rec.x is None or rec.psi is None:
        raise ValueError("trace needs the chi, x and psi recorders")
    if trace.model.dim != 1:
        raise ValueError("replay is one-dimensional")
    law = law or trace.model.law
    pts0 = np.asarray(trace.model.initial, dtype=float)
    idx = NeighborIndex(1, "sorted", len(pts0) + len(rec))
    idx.insert_many(pts0)
    idx.reserve(len(rec) + 1)
    nn0 = idx.nearest_all()
    eta = np.abs(rec.psi[:, 0])
    cps = np.asarray(sorted(checkpoints), dtype=np.int64)
    viol, worst, psums = _replay(pts0, nn0, rec.x[:, 0].copy(), rec.chi.astype(np.int64), eta,
                                 float(t), 4096, cps, idx.state)
    f = phi_value(law, t)
    n0 = len(pts0)
    lnorm = (special.gammaln(cps - f) - special.gammaln(n0 - f)
             - special.gammaln(cps) + special.gammaln(n0))
    return DominationReport(int(viol), float(worst), cps, np.log(psums) - lnorm)
