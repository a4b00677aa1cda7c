"""Statistics over configurations: empirical and mixture CDFs, KS and
Lévy–Prokhorov distances, interval masses and a mass-scaling dimension estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special, stats

from .distributions import DisplacementLaw
from .engine import ModelSpec, ParticleConfig, Simulation
from .rng import as_stream

LP_MAX_ATOMS = 14


class SupportTooLargeError(ValueError):
    pass


class CoincidentPointError(ValueError):
    """A mixture component has zero scale."""


def _as_1d_points(config) -> np.ndarray:
    pts = config.points if isinstance(config, ParticleConfig) else np.asarray(config, dtype=float)
    if pts.ndim == 2:
        if pts.shape[1] != 1:
            raise ValueError("configuration must be one-dimensional")
        pts = pts[:, 0]
    return np.asarray(pts, dtype=float)


# ----------------------------------------------------------------------
# empirical measure


class EmpiricalMeasure:
    """Atomic measure on the line with atoms merged and sorted.

    >>> m = EmpiricalMeasure.from_points([0.0, 1.0])
    >>> m.cdf([-1.0, 0.0, 0.5, 1.0]).tolist()
    [0.0, 0.5, 0.5, 1.0]
    """

    def __init__(self, atoms, weights=None, normalized: bool = True):
        x = np.asarray(atoms, dtype=float).ravel()
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
        if x.shape != w.shape:
            raise ValueError("atoms and weights differ in length")
        if len(x) == 0:
            raise ValueError("empty measure")
        if np.any(~(w > 0)):
            raise ValueError("weights must be positive")
        if normalized:
            w = w / w.sum()
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        u, start = np.unique(x, return_index=True)
        self.atoms = u
        self.weights = np.add.reduceat(w, start)
        self.normalized = normalized
        self._cum = np.cumsum(self.weights)
        if normalized:
            self._cum[-1] = 1.0

    @classmethod
    def from_points(cls, points, normalized: bool = True) -> "EmpiricalMeasure":
        return cls(_as_1d_points(points), None, normalized)

    @property
    def total(self) -> float:
        return float(self._cum[-1])

    def cdf(self, t):
        """Mass of (-inf, t]."""
        i = np.searchsorted(self.atoms, np.asarray(t, dtype=float), side="right")
        return np.where(i > 0, self._cum[np.maximum(i - 1, 0)], 0.0)

    def cdf_left(self, t):
        """Mass of (-inf, t)."""
        i = np.searchsorted(self.atoms, np.asarray(t, dtype=float), side="left")
        return np.where(i > 0, self._cum[np.maximum(i - 1, 0)], 0.0)

    def knots(self) -> np.ndarray:
        return self.atoms

    __call__ = cdf


def empirical_cdf(config) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_points(config)


# ----------------------------------------------------------------------
# mixture CDF of the next-point law


def _psi_cdf(law: DisplacementLaw, s: np.ndarray) -> np.ndarray:
    """P(psi <= s) for a symmetric one-dimensional displacement law."""
    k = law.kind
    if k == "uniform":
        return np.clip(0.5 * (s + 1.0), 0.0, 1.0)
    if k in ("normal", "isonormal"):
        return special.ndtr(s / law.a)
    r = np.abs(s)
    if k == "power":
        with np.errstate(divide="ignore", over="ignore"):
            g = np.where(r < 1, (1 - law.p) * r ** law.beta, 1 - law.p * np.maximum(r, 1.0) ** -law.alpha)
        # psi has no atom at 0 or at +-r, so the radial cdf is continuous
        return np.where(s >= 0, 0.5 + 0.5 * g, 0.5 - 0.5 * g)
    q = law.q
    return np.where(s >= q, 1.0, np.where(s >= -q, 0.5, 0.0))


@njit(cache=True)
def _ramp_sweep(c, d, lo_order, hi_order, ts):
    """Sum over k of clip((t - c_k + d_k) / (2 d_k), 0, 1) for sorted ``ts``."""
    n = c.shape[0]
    active = np.empty(n, np.int64)
    na = 0
    ia = 0
    ih = 0
    full = 0
    out = np.empty(ts.shape[0])
    for q in range(ts.shape[0]):
        t = ts[q]
        while ia < n and c[lo_order[ia]] - d[lo_order[ia]] < t:
            active[na] = lo_order[ia]
            na += 1
            ia += 1
        while ih < n and c[hi_order[ih]] + d[hi_order[ih]] <= t:
            full += 1
            ih += 1
        v = 0.0
        keep = 0
        for j in range(na):
            k = active[j]
            if c[k] + d[k] > t:
                active[keep] = k
                keep += 1
                v += (t - c[k] + d[k]) / (2.0 * d[k])
        na = keep
        out[q] = full + v
    return out


class MixtureCdf:
    """t -> (1/n) sum_k F_psi((t - x_k) / d_k).

    For the uniform law every component is a ramp on ``[x_k - d_k, x_k + d_k]``.
    Abscissae are then evaluated in one sweep that keeps the set of ramps
    covering the current abscissa; each ramp term is computed directly, so tiny
    scales cause no cancellation.  In a 1D nearest-neighbour configuration a
    point is covered by at most a few ramps, so a sweep costs O((n + m) log).

    A component with d_k = 0 is an error unless ``zero_scale="atom"``, in which
    case it is replaced by its d -> 0 limit, the point mass at x_k.
    """

    def __init__(self, centers, scales, law: DisplacementLaw, zero_scale: str = "error"):
        centers = np.asarray(centers, dtype=float)
        scales = np.asarray(scales, dtype=float)
        if law.dim != 1:
            raise ValueError("mixture CDF is one-dimensional")
        if np.any(scales < 0) or np.any(np.isnan(scales)):
            raise ValueError("scales must be non-negative")
        zero = scales == 0
        if zero.any() and zero_scale != "atom":
            raise CoincidentPointError("zero nearest distance: mixture component degenerates")
        self.n = len(centers)
        self.atoms = np.sort(centers[zero])
        self.centers = centers[~zero]
        self.scales = scales[~zero]
        self.law = law
        if law.kind == "uniform":
            lo = self.centers - self.scales
            self._lo_order = np.argsort(lo, kind="stable")
            self._hi_order = np.argsort(self.centers + self.scales, kind="stable")

    def _continuous_sum(self, t):
        if len(self.centers) == 0:
            return np.zeros(np.shape(t))
        if self.law.kind == "uniform":
            flat = np.atleast_1d(t).ravel()
            order = np.argsort(flat, kind="stable")
            out = np.empty(flat.shape)
            out[order] = _ramp_sweep(self.centers, self.scales, self._lo_order,
                                     self._hi_order, flat[order])
            return out.reshape(np.shape(t))
        flat = np.atleast_1d(t).ravel()
        out = np.empty(flat.shape)
        step = max(1, 2_000_000 // len(self.centers))
        for s in range(0, len(flat), step):
            # tiny scales send z to +-inf, which is the right limit
            with np.errstate(over="ignore"):
                z = (flat[s:s + step, None] - self.centers[None, :]) / self.scales[None, :]
                out[s:s + step] = _psi_cdf(self.law, z).sum(axis=1)
        return out.reshape(np.shape(t))

    def _eval(self, t, side):
        t = np.asarray(t, dtype=float)
        c = self._continuous_sum(t) + np.searchsorted(self.atoms, t, side=side)
        return np.clip(c / self.n, 0.0, 1.0)

    def cdf(self, t):
        return self._eval(t, "right")

    def cdf_left(self, t):
        return self._eval(t, "left")

    __call__ = cdf

    def knots(self) -> np.ndarray:
        parts = [self.atoms]
        if self.law.kind == "uniform":
            parts += [self.centers - self.scales, self.centers + self.scales]
        elif self.law.kind == "deterministic":
            parts += [self.centers - self.law.q * self.scales, self.centers + self.law.q * self.scales]
        return np.concatenate(parts)


def mixture_cdf(config, law: DisplacementLaw, zero_scale: str = "error") -> MixtureCdf:
    """CDF of the next particle's law given the configuration (1D)."""
    if isinstance(config, ParticleConfig):
        if config.dim != 1:
            raise ValueError("configuration must be one-dimensional")
        return MixtureCdf(config.points[:, 0], config.nearest(), law, zero_scale)
    from .nn_index import brute_nearest
    pts = _as_1d_points(config)
    return MixtureCdf(pts, brute_nearest(pts), law, zero_scale)


# ----------------------------------------------------------------------
# Kolmogorov–Smirnov


def _cdf_pair(F, t):
    if hasattr(F, "cdf"):
        return np.asarray(F.cdf(t)), np.asarray(getattr(F, "cdf_left", F.cdf)(t))
    v = np.asarray(F(t), dtype=float)
    return v, v


def ks_distance(F, G, grid: int = 4001) -> float:
    """Sup-distance between two CDFs.

    Arguments are EmpiricalMeasure, MixtureCdf or plain callables (treated as
    continuous).  Both one-sided limits are compared at every atom and knot;
    when neither argument has atoms a uniform grid over the knot span (or
    [-10, 10]) is added.
    """
    knots = [np.asarray(K.knots()) for K in (F, G) if hasattr(K, "knots")]
    pts = np.unique(np.concatenate(knots)) if knots else np.empty(0)
    atomic = any(isinstance(K, EmpiricalMeasure) or len(getattr(K, "atoms", ())) for K in (F, G))
    if not atomic:
        lo, hi = (pts.min(), pts.max()) if len(pts) else (-10.0, 10.0)
        pts = np.unique(np.concatenate([pts, np.linspace(lo, hi, grid)]))
    if len(pts) == 0:
        return 0.0
    f, fl = _cdf_pair(F, pts)
    g, gl = _cdf_pair(G, pts)
    return float(min(1.0, max(np.max(np.abs(f - g)), np.max(np.abs(fl - gl)))))


# ----------------------------------------------------------------------
# Lévy–Prokhorov


def _subset_sums(values: np.ndarray) -> np.ndarray:
    out = np.zeros(1)
    for v in values:
        out = np.concatenate([out, out + v])
    return out


def _subset_unions(masks: np.ndarray) -> np.ndarray:
    out = np.zeros(1, np.int64)
    for m in masks:
        out = np.concatenate([out, out | m])
    return out


def lp_oracle(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact Lévy–Prokhorov distance between two atomic measures on the line.

    The enlargement A^eps of a union of atoms only changes when eps crosses a
    pairwise distance D_i.  On [D_i, D_{i+1}) the constraint is eps >= req_i
    with req_i the largest violation over all 2^k unions, so the distance is
    min_i max(D_i, req_i).  Weights need not sum to one.
    """
    xs = np.union1d(mu.atoms, nu.atoms)
    k = len(xs)
    if k > LP_MAX_ATOMS:
        raise SupportTooLargeError(f"combined support {k} exceeds {LP_MAX_ATOMS} atoms")
    a = np.zeros(k)
    b = np.zeros(k)
    a[np.searchsorted(xs, mu.atoms)] = mu.weights
    b[np.searchsorted(xs, nu.atoms)] = nu.weights
    A = _subset_sums(a)
    B = _subset_sums(b)
    dist = np.abs(xs[:, None] - xs[None, :])
    levels = np.unique(np.concatenate([[0.0], dist.ravel()]))
    best = np.inf
    bits = 1 << np.arange(k, dtype=np.int64)
    for D in levels:
        if D >= best:
            break
        near = ((dist <= D).astype(np.int64) * bits[None, :]).sum(axis=1)
        enl = _subset_unions(near)
        req = max(np.max(A - B[enl]), np.max(B - A[enl]), 0.0)
        best = min(best, max(D, req))
    return float(best)


def lp_consecutive_formula(n: int, dstar: float) -> float:
    if n < 1 or dstar < 0:
        raise ValueError("need n >= 1 and dstar >= 0")
    return min(1.0 / n, max(1.0 / n ** 2, dstar))


# ----------------------------------------------------------------------
# interval masses and the Beta limit


@dataclass(frozen=True)
class IntervalPartition:
    """Intervals cut out by a fixed base configuration x_1 < ... < x_a.

    I_0 = (-inf, x_1), I_j = [x_j, x_{j+1}) and I_a = [x_a, inf).
    """

    base: tuple

    def __init__(self, base):
        b = np.sort(_as_1d_points(base))
        if len(b) < 1:
            raise ValueError("empty base configuration")
        object.__setattr__(self, "base", tuple(float(v) for v in b))

    @property
    def a(self) -> int:
        return len(self.base)

    def locate(self, x) -> np.ndarray:
        return np.searchsorted(np.asarray(self.base), np.asarray(x, dtype=float), side="right")

    def mass(self, points, F) -> float:
        idx = self.locate(_as_1d_points(points))
        return float(np.isin(idx, list(F)).mean())


def beta_parameters(a: int, F) -> tuple[float, float]:
    """(b_hat, a - b_hat) with b_hat = |F| - (1(0 in F) + 1(a in F)) / 2."""
    F = set(F)
    if not F or not F <= set(range(a + 1)) or len(F) == a + 1:
        raise ValueError("F must be a nonempty proper subset of {0..a}")
    b_hat = len(F) - 0.5 * ((0 in F) + (a in F))
    return b_hat, a - b_hat


def interval_mass_estimate(model: ModelSpec, base: IntervalPartition, F, steps: int,
                           replicas: int, seed: int, checkpoints=None) -> np.ndarray:
    """Fraction of particles in the union of I_j, j in F, after ``steps`` steps.

    With ``checkpoints`` (step counts) a (replicas, len(checkpoints)) array is
    returned instead.
    """
    beta_parameters(base.a, F)
    if model.variant != "CLU":
        raise ValueError("interval masses are defined for the CLU model")
    model = ModelSpec.clu(initial=[(x,) for x in base.base])
    cps = [steps] if checkpoints is None else sorted(int(c) for c in checkpoints)
    out = np.empty((replicas, len(cps)))
    Fl = list(F)
    for r in range(replicas):
        sim = Simulation(model, seed, r, recorders=())
        for j, c in enumerate(cps):
            sim.advance_to(base.a + c)
            out[r, j] = base.mass(sim.config.points[:, 0], Fl)
    return out[:, 0] if checkpoints is None else out


def beta_ks(masses, a: int, F) -> stats._stats_py.KstestResult:
    b1, b2 = beta_parameters(a, F)
    return stats.kstest(np.asarray(masses), stats.beta(b1, b2).cdf)


# ----------------------------------------------------------------------
# mass-scaling dimension


def local_dimension(config, probes: int = 200, radii=None, rng=0) -> float:
    """Average least-squares slope of log nu_n(B(x, r)) against log r.

    Probe centres are particles drawn uniformly from the configuration; the
    probe itself is excluded from the ball count.  Radii with an empty ball are
    dropped for that probe, and probes with fewer than 3 usable radii are
    skipped.
    """
    pts = np.sort(_as_1d_points(config))
    n = len(pts)
    if n < 2:
        raise ValueError("need at least two points")
    if radii is None:
        span = pts[-1] - pts[0]
        radii = np.geomspace(1e-8, 1e-2, 13) * (span if span > 0 else 1.0)
    radii = np.asarray(radii, dtype=float)
    lr = np.log(radii)
    rng = as_stream(rng)
    centers = pts[rng.integers(0, n, size=probes)]
    hi = np.searchsorted(pts, centers[:, None] + radii[None, :], side="right")
    lo = np.searchsorted(pts, centers[:, None] - radii[None, :], side="left")
    counts = hi - lo - 1
    slopes = []
    for c in counts:
        ok = c > 0
        if ok.sum() < 3:
            continue
        slopes.append(np.polyfit(lr[ok], np.log(c[ok] / n), 1)[0])
    if not slopes:
        raise ValueError("fewer than 3 radii with non-empty balls for every probe")
    return float(np.mean(slopes))
