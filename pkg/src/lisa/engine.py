"""Sequential construction of LISA configurations.

At each step a parent is chosen uniformly among the ``n`` current particles and
a child is placed by the variant's local rule.  All random draws for a step are
taken from the replica's stream in a fixed order inside one compiled kernel:

1. the holding time ``Exp(n)`` (continuous-time runs only),
2. the parent ``chi`` (``rng.integers(0, n)``),
3. the variant's draws: ``psi`` (CLU/CLN/CLD), one uniform (RNU, BMQ) plus
   the fresh base draw for BMQ, or the rejection-sampling uniforms (CSA).

Particle ids are 1-based insertion ranks; parent id 0 marks an initial point.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .distributions import DisplacementLaw, draw_psi
from .nn_index import (
    NeighborIndex,
    M_N,
    idx_count_within,
    idx_insert,
    idx_max_spacing,
    idx_right_gap,
    idx_room,
)
from .rng import as_stream

RNU, CLU, CLN, CLD, BMQ, CSA = range(6)
VARIANTS = {"RNU": RNU, "CLU": CLU, "CLN": CLN, "CLD": CLD, "BMQ": BMQ, "CSA": CSA}

# recorder bits
F_CHI, F_D, F_X, F_DSTAR, F_EXT, F_PSI, F_TIMED, F_INJ = (1 << k for k in range(8))
RECORDERS = {"chi": F_CHI, "d": F_D, "x": F_X, "dstar": F_DSTAR, "extrema": F_EXT, "psi": F_PSI}
DEFAULT_RECORDERS = frozenset({"chi", "d", "x"})

# kernel status
DONE, NEED_ROOM, HORIZON, REJECT_FAILED, OVERFLOW = 0, 1, 2, -1, -2

# running summary slots
S_MIN, S_MAX, S_NORM, S_TIME = range(4)

CSA_ATTEMPTS = 10_000


class CSARejectionError(RuntimeError):
    """No CSA proposal accepted within the attempt budget."""


class SimulationOverflowError(FloatingPointError):
    """A coordinate left the finite binary64 range."""


class MissingRecorderError(ValueError):
    pass


# ----------------------------------------------------------------------
# model description


@dataclass(frozen=True)
class ModelSpec:
    """One LISA variant with its parameters and initial configuration.

    ``initial`` holds the coordinates of the initial particles as a tuple of
    tuples.  ``box`` is the window ``W`` (lower and upper corner) for BMQ and
    CSA.  ``base`` selects the BMQ base measure: ``"uniform"`` on the box or
    ``"normal"`` with standard deviation ``base_scale`` around the origin.
    """

    variant: str
    initial: tuple
    law: DisplacementLaw | None = None
    box: tuple = ()
    radius: float = 0.0
    weights: tuple = ()
    base: str = "uniform"
    base_scale: float = 1.0

    def __post_init__(self):
        v = self.variant
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
        init = np.asarray(self.initial, dtype=float)
        if init.ndim != 2 or len(init) == 0:
            raise ValueError("initial configuration must be a non-empty list of points")
        if not np.all(np.isfinite(init)):
            raise ValueError("initial coordinates must be finite")
        dim = init.shape[1]
        need = {"RNU": 1, "CLU": 2, "CLN": 2, "CLD": 2, "BMQ": 1, "CSA": 1}[v]
        if len(init) < need:
            raise ValueError(f"{v} needs at least {need} initial points")
        if v in ("RNU", "CLU", "CLN") and dim != 1:
            raise ValueError(f"{v} is one-dimensional")
        if v in ("CLU", "CLN", "CLD"):
            if self.law is None or self.law.dim != dim:
                raise ValueError("displacement law dimension must match the configuration")
            from .distributions import eta_moment
            if not np.isfinite(eta_moment(self.law, 1.0)):
                raise ValueError("displacement law must have finite mean radius")
        if v == "RNU" and (np.any(init < 0) or np.any(init > 1)):
            raise ValueError("RNU initial points must lie in [0, 1]")
        if v in ("BMQ", "CSA"):
            lo, hi = self.box_arrays
            if lo.shape != (dim,) or np.any(hi <= lo):
                raise ValueError("box must give lower < upper corners of the right dimension")
            if np.any(init < lo) or np.any(init > hi):
                raise ValueError("initial points must lie in the box")
        if v == "BMQ":
            if self.base not in ("uniform", "normal"):
                raise ValueError("BMQ base measure must be 'uniform' or 'normal'")
            if not self.base_scale > 0:
                raise ValueError("base_scale must be positive")
        if v == "CSA":
            if not self.radius > 0:
                raise ValueError("interaction radius must be positive")
            w = np.asarray(self.weights, dtype=float)
            if len(w) == 0 or np.any(~(w > 0)) or not np.all(np.isfinite(w)):
                raise ValueError("CSA weights must be positive and finite")

    # constructors ----------------------------------------------------
    @classmethod
    def rnu(cls, initial=((0.0,),)) -> "ModelSpec":
        return cls("RNU", _points(initial, 1))

    @classmethod
    def clu(cls, initial=((0.0,), (1.0,))) -> "ModelSpec":
        return cls("CLU", _points(initial, 1), DisplacementLaw.uniform())

    @classmethod
    def cln(cls, a: float, initial=((0.0,), (1.0,))) -> "ModelSpec":
        return cls("CLN", _points(initial, 1), DisplacementLaw.normal(a))

    @classmethod
    def cld(cls, law: DisplacementLaw, initial=None) -> "ModelSpec":
        if initial is None:
            e = np.zeros((2, law.dim))
            e[1, 0] = 1.0
            initial = e
        return cls("CLD", _points(initial, law.dim), law)

    @classmethod
    def bmq(cls, box=((0.0,), (1.0,)), initial=None, base="uniform", base_scale=1.0) -> "ModelSpec":
        lo, hi = (tuple(float(v) for v in np.atleast_1d(c)) for c in box)
        if initial is None:
            initial = [tuple(0.5 * (a + b) for a, b in zip(lo, hi))]
        return cls("BMQ", _points(initial, len(lo)), box=(lo, hi), base=base,
                   base_scale=float(base_scale))

    @classmethod
    def csa(cls, radius: float, weights, box=((0.0,), (1.0,)), initial=None) -> "ModelSpec":
        lo, hi = (tuple(float(v) for v in np.atleast_1d(c)) for c in box)
        if initial is None:
            initial = [tuple(0.5 * (a + b) for a, b in zip(lo, hi))]
        return cls("CSA", _points(initial, len(lo)), box=(lo, hi), radius=float(radius),
                   weights=tuple(float(w) for w in np.atleast_1d(weights)))

    # derived ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.initial[0])

    @property
    def n0(self) -> int:
        return len(self.initial)

    @property
    def box_arrays(self):
        if not self.box:
            z = np.zeros(self.dim)
            return z, z.copy()
        return np.asarray(self.box[0], dtype=float), np.asarray(self.box[1], dtype=float)

    def scaled(self, a: float, shift=0.0) -> "ModelSpec":
        """Same model started from ``a * X + shift`` (CL* variants)."""
        init = np.asarray(self.initial) * a + np.asarray(shift, dtype=float)
        return ModelSpec(self.variant, _points(init, self.dim), self.law)

    def kernel_args(self):
        v = VARIANTS[self.variant]
        law = self.law
        if v in (CLU, CLN, CLD):
            code, prm = law.code, law.params
        elif v == BMQ:
            code = 0 if self.base == "uniform" else 1
            prm = np.array([self.base_scale, 0, 0, 0, 0, self.dim], dtype=float)
        else:
            code, prm = 0, np.zeros(6)
        lo, hi = self.box_arrays
        w = np.asarray(self.weights if self.weights else (1.0,), dtype=float)
        return v, code, prm, lo, hi, float(self.radius), w, np.maximum.accumulate(w)

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "initial": [list(p) for p in self.initial]}
        if self.variant == "CLD":
            d["law"] = str(self.law)
        elif self.variant == "CLN":
            d["a"] = self.law.a
        if self.variant in ("BMQ", "CSA"):
            d["box"] = [list(self.box[0]), list(self.box[1])]
        if self.variant == "BMQ":
            d["base"] = self.base
            d["base_scale"] = self.base_scale
        if self.variant == "CSA":
            d["radius"] = self.radius
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        v = d["variant"].upper()
        init = d.get("initial")
        kw = {} if init is None else {"initial": init}
        if v == "RNU":
            return cls.rnu(**kw)
        if v == "CLU":
            return cls.clu(**kw)
        if v == "CLN":
            return cls.cln(float(d["a"]), **kw)
        if v == "CLD":
            law = d["law"]
            law = law if isinstance(law, DisplacementLaw) else DisplacementLaw.parse(law)
            return cls.cld(law, kw.get("initial"))
        box = d.get("box", ((0.0,), (1.0,)))
        if v == "BMQ":
            return cls.bmq(box, kw.get("initial"), d.get("base", "uniform"),
                           float(d.get("base_scale", 1.0)))
        if v == "CSA":
            return cls.csa(float(d["radius"]), d["weights"], box, kw.get("initial"))
        raise ValueError(f"unknown variant {v!r}")


def _points(pts, dim: int) -> tuple:
    a = np.asarray(pts, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if dim == 1 else a.reshape(1, -1)
    return tuple(tuple(float(v) for v in row) for row in a)


# ----------------------------------------------------------------------
# configuration


class ParticleConfig:
    """Growing configuration: points in insertion order, parent links and the index."""

    def __init__(self, dim: int, backend: str | None = None, capacity: int = 16):
        self.dim = dim
        self.index = NeighborIndex(dim, backend, capacity)
        self.parent = np.zeros(max(capacity, 2), np.int64)
        self.birth = np.zeros(max(capacity, 2))

    @classmethod
    def from_points(cls, points, backend: str | None = None, capacity: int = 16) -> "ParticleConfig":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        cfg = cls(pts.shape[1], backend, max(capacity, len(pts)))
        cfg.index.insert_many(pts)
        return cfg

    @classmethod
    def initial(cls, model: ModelSpec, capacity: int = 16) -> "ParticleConfig":
        backend = "grid" if model.variant == "CSA" and model.dim > 1 else None
        return cls.from_points(np.asarray(model.initial), backend, capacity)

    def __len__(self) -> int:
        return len(self.index)

    @property
    def points(self) -> np.ndarray:
        return self.index.points

    @property
    def parents(self) -> np.ndarray:
        return self.parent[: len(self)]

    @property
    def births(self) -> np.ndarray:
        return self.birth[: len(self)]

    def nearest(self) -> np.ndarray:
        return self.index.nearest_all()

    def max_spacing(self) -> float:
        return self.index.max_spacing()

    def reserve(self, extra: int) -> None:
        self.index.reserve(extra)
        cap = self.index.state.pts.shape[0]
        if self.parent.shape[0] < cap:
            self.parent = np.concatenate([self.parent, np.zeros(cap - self.parent.shape[0], np.int64)])
            self.birth = np.concatenate([self.birth, np.zeros(cap - self.birth.shape[0])])

    def copy(self) -> "ParticleConfig":
        other = object.__new__(ParticleConfig)
        other.dim = self.dim
        other.index = self.index.copy()
        other.parent = self.parent.copy()
        other.birth = self.birth.copy()
        return other


# ----------------------------------------------------------------------
# kernel


@njit(cache=True, nogil=True)
def _advance(s, parent, birth, variant, code, prm, lo, hi, radius, w, wmax, rng,
             target_n, horizon, flags, summ, rec_chi, rec_d, rec_x, rec_dstar,
             rec_m, rec_M, rec_psi, rec_cap, out_k, inj_chi, inj_val):
    dim = s.pts.shape[1]
    buf = np.empty(dim)
    xn = np.empty(dim)
    k = 0
    timed = (flags & F_TIMED) != 0
    inject = (flags & F_INJ) != 0
    while True:
        n = s.meta[M_N]
        if n >= target_n:
            out_k[0] = k
            return DONE
        if k >= rec_cap or not idx_room(s):
            out_k[0] = k
            return NEED_ROOM
        if timed:
            tau = rng.exponential() / n
            if summ[S_TIME] + tau > horizon:
                summ[S_TIME] = horizon
                out_k[0] = k
                return HORIZON
            summ[S_TIME] += tau
        if inject and inj_chi >= 0:
            chi = inj_chi
        else:
            chi = rng.integers(0, n)
        d = 0.0
        hint = chi
        if variant == CLU or variant == CLN or variant == CLD:
            d = s.nn[chi]
            if inject and not np.isnan(inj_val[0]):
                for j in range(dim):
                    buf[j] = inj_val[j]
            else:
                draw_psi(code, prm, rng, buf)
            for j in range(dim):
                xn[j] = s.pts[chi, j] + d * buf[j]
        elif variant == RNU:
            d = s.nn[chi]
            u = inj_val[0] if inject and not np.isnan(inj_val[0]) else rng.random()
            gap = idx_right_gap(s, chi)
            x = s.pts[chi, 0]
            if gap == np.inf:
                gap = 1.0 - x
            xn[0] = x + u * gap
            buf[0] = u
        elif variant == BMQ:
            u = inj_val[0] if inject and not np.isnan(inj_val[0]) else rng.random()
            buf[0] = u
            if u < 1.0 / n:
                hint = -1
                for j in range(dim):
                    if code == 0:
                        xn[j] = lo[j] + (hi[j] - lo[j]) * rng.random()
                    else:
                        xn[j] = prm[0] * rng.standard_normal()
            else:
                for j in range(dim):
                    xn[j] = s.pts[chi, j]
        else:  # CSA
            hint = -1
            top = wmax[min(n, wmax.shape[0] - 1)]
            ok = False
            for _ in range(CSA_ATTEMPTS):
                for j in range(dim):
                    xn[j] = lo[j] + (hi[j] - lo[j]) * rng.random()
                c = idx_count_within(s, xn, radius)
                if rng.random() * top < w[min(c, w.shape[0] - 1)]:
                    ok = True
                    break
            if not ok:
                out_k[0] = k
                return REJECT_FAILED
        for j in range(dim):
            if not np.isfinite(xn[j]):
                out_k[0] = k
                return OVERFLOW
        i = idx_insert(s, xn, hint)
        parent[i] = chi + 1
        birth[i] = summ[S_TIME]
        if dim == 1:
            if xn[0] < summ[S_MIN]:
                summ[S_MIN] = xn[0]
            if xn[0] > summ[S_MAX]:
                summ[S_MAX] = xn[0]
            a = abs(xn[0])
        else:
            a = 0.0
            for j in range(dim):
                a += xn[j] * xn[j]
            a = np.sqrt(a)
        if a > summ[S_NORM]:
            summ[S_NORM] = a
        if flags & F_CHI:
            rec_chi[k] = chi + 1
        if flags & F_D:
            rec_d[k] = d
        if flags & F_X:
            for j in range(dim):
                rec_x[k, j] = xn[j]
        if flags & F_DSTAR:
            rec_dstar[k] = idx_max_spacing(s)
        if flags & F_EXT:
            if dim == 1:
                rec_m[k] = summ[S_MIN]
                rec_M[k] = summ[S_MAX]
            else:
                rec_m[k] = np.nan
                rec_M[k] = summ[S_NORM]
        if flags & F_PSI:
            for j in range(dim):
                rec_psi[k, j] = buf[j]
        k += 1


# ----------------------------------------------------------------------
# records and traces

StepRecord = namedtuple("StepRecord", "n chi d x_new dstar m M")


@dataclass
class Records:
    """Columnar step records; unrecorded columns are ``None``.

    ``n`` is the configuration size before the step, so the new particle gets
    id ``n + 1``.  ``dstar``, ``m`` and ``M`` describe the configuration after
    the step.  For dimension > 1, ``M`` holds the running maximal norm and ``m``
    is NaN.  ``psi`` holds the displacement for CL* variants and the uniform
    used by RNU/BMQ.
    """

    n: np.ndarray
    chi: np.ndarray | None = None
    d: np.ndarray | None = None
    x: np.ndarray | None = None
    dstar: np.ndarray | None = None
    m: np.ndarray | None = None
    M: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.n)

    def __getitem__(self, k: int) -> StepRecord:
        g = lambda a: None if a is None else float(a[k])
        x = None if self.x is None else self.x[k]
        return StepRecord(int(self.n[k]), None if self.chi is None else int(self.chi[k]),
                          g(self.d), None if x is None else (float(x[0]) if len(x) == 1 else x),
                          g(self.dstar), g(self.m), g(self.M))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def columns(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def concat(cls, chunks: list["Records"], n_start: int, dim: int, flags: int) -> "Records":
        total = sum(len(c) for c in chunks)
        recs = cls(np.arange(n_start, n_start + total, dtype=np.int64))
        for name, bit, shape in (("chi", F_CHI, ()), ("d", F_D, ()), ("x", F_X, (dim,)),
                                 ("dstar", F_DSTAR, ()), ("m", F_EXT, ()), ("M", F_EXT, ()),
                                 ("psi", F_PSI, (dim,))):
            if flags & bit:
                arrs = [getattr(c, name) for c in chunks]
                dtype = np.int64 if name == "chi" else float
                setattr(recs, name, np.concatenate(arrs) if arrs else np.zeros((0,) + shape, dtype))
        return recs


@dataclass
class Trace:
    model: ModelSpec
    seed: int
    records: Records
    final: ParticleConfig
    replica: int = 0
    recorders: frozenset = DEFAULT_RECORDERS
    summary: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.records)


def _flags(recorders) -> int:
    f = 0
    for r in recorders:
        if r not in RECORDERS:
            raise ValueError(f"unknown recorder {r!r}; choose from {sorted(RECORDERS)}")
        f |= RECORDERS[r]
    return f


class Simulation:
    """A resumable run of one replica.

    >>> sim = Simulation(ModelSpec.clu(), seed=1)
    >>> sim.advance(100); len(sim.config)
    102
    """

    def __init__(self, model: ModelSpec, seed: int = 0, replica: int = 0,
                 recorders=DEFAULT_RECORDERS, rng=None, config: ParticleConfig | None = None,
                 timed: bool = False):
        self.model = model
        self.seed = int(seed)
        self.replica = int(replica)
        self.recorders = frozenset(recorders)
        self.flags = _flags(self.recorders) | (F_TIMED if timed else 0)
        self.rng = as_stream(self.seed, self.replica) if rng is None else rng
        self.config = ParticleConfig.initial(model) if config is None else config
        self.n_start = len(self.config)
        pts = self.config.points
        self.summ = np.array([pts[:, 0].min(), pts[:, 0].max(),
                              float(np.sqrt((pts ** 2).sum(axis=1)).max()), 0.0])
        if model.dim > 1:
            self.summ[S_MIN] = self.summ[S_MAX] = np.nan
        self._chunks: list[Records] = []
        self._kargs = model.kernel_args()

    @property
    def time(self) -> float:
        return float(self.summ[S_TIME])

    def _chunk(self, size: int) -> tuple:
        dim = self.model.dim
        f = self.flags
        def mk(bit, shape, dt=float):
            if not f & bit:
                shape = (0,) * len(shape) if isinstance(shape, tuple) else 0
            return np.empty(shape, dt)

        return (mk(F_CHI, size, np.int64), mk(F_D, size), mk(F_X, (size, dim)),
                mk(F_DSTAR, size), mk(F_EXT, size), mk(F_EXT, size), mk(F_PSI, (size, dim)))

    def _run_kernel(self, target_n: int, horizon: float = np.inf, inj_chi: int = -1,
                    inj_val=None, extra_flags: int = 0) -> int:
        v, code, prm, lo, hi, radius, w, wmax = self._kargs
        dim = self.model.dim
        inj = np.full(dim, np.nan) if inj_val is None else np.asarray(inj_val, dtype=float).reshape(dim)
        out_k = np.zeros(1, np.int64)
        flags = self.flags | extra_flags
        while True:
            n = len(self.config)
            want = target_n - n
            if np.isfinite(horizon):
                want = min(want, max(256, n))
            want = int(min(want, 1 << 20))
            self.config.reserve(max(want, 1))
            size = max(want, 1)
            chi, d, x, ds, m, M, psi = self._chunk(size)
            st = self.config.index.state
            status = _advance(st, self.config.parent, self.config.birth, v, code, prm, lo, hi,
                              radius, w, wmax, self.rng, target_n, horizon, flags, self.summ,
                              chi, d, x, ds, m, M, psi, size, out_k, inj_chi, inj)
            k = int(out_k[0])
            if k:
                cut = lambda a, bit: a[:k] if flags & bit else None
                self._chunks.append(Records(np.zeros(k, np.int64), cut(chi, F_CHI), cut(d, F_D),
                                            cut(x, F_X), cut(ds, F_DSTAR), cut(m, F_EXT),
                                            cut(M, F_EXT), cut(psi, F_PSI)))
            if status == NEED_ROOM:
                continue
            if status == REJECT_FAILED:
                raise CSARejectionError(f"no CSA proposal accepted in {CSA_ATTEMPTS} attempts")
            if status == OVERFLOW:
                raise SimulationOverflowError("coordinate overflow; the configuration diverged")
            return status

    def advance(self, steps: int) -> None:
        if steps < 0:
            raise ValueError("steps must be non-negative")
        self._run_kernel(len(self.config) + int(steps))

    def advance_to(self, n: int) -> None:
        self._run_kernel(max(int(n), len(self.config)))

    def advance_until(self, horizon: float, cap: int) -> bool:
        """Continuous-time run up to ``horizon``; False if the population cap was hit."""
        status = self._run_kernel(cap, horizon)
        return status == HORIZON or self.time >= horizon

    def max_spacing(self) -> float:
        return self.config.max_spacing()

    @property
    def records(self) -> Records:
        recs = Records.concat(self._chunks, self.n_start, self.model.dim, self.flags)
        self._chunks = [recs] if len(recs) else []
        if len(recs):
            recs.n = np.arange(self.n_start, self.n_start + len(recs), dtype=np.int64)
        return recs

    def summary(self) -> dict:
        out = {"n": len(self.config), "max_norm": float(self.summ[S_NORM])}
        if self.model.dim == 1:
            out.update(min=float(self.summ[S_MIN]), max=float(self.summ[S_MAX]))
        if len(self.config) >= 2:
            out["dstar"] = self.max_spacing()
        return out

    def trace(self) -> Trace:
        return Trace(self.model, self.seed, self.records, self.config, self.replica,
                     self.recorders, self.summary())


def step(config: ParticleConfig, model: ModelSpec, rng, chi: int | None = None,
         psi=None, u: float | None = None) -> StepRecord:
    """Advance ``config`` in place by one step and return its record.

    ``chi`` (1-based), ``psi`` (CL* variants) and ``u`` (RNU/BMQ) inject the
    corresponding draws instead of taking them from ``rng``.
    """
    if len(config) < {"CLU": 2, "CLN": 2, "CLD": 2}.get(model.variant, 1):
        raise ValueError(f"{model.variant} needs more particles to step")
    if chi is not None and not 1 <= chi <= len(config):
        raise ValueError(f"chi={chi} is not a particle id")
    sim = Simulation.__new__(Simulation)
    sim.model, sim.seed, sim.replica = model, 0, 0
    sim.recorders = frozenset(RECORDERS)
    sim.flags = _flags(sim.recorders)
    sim.rng = as_stream(rng)
    sim.config = config
    sim.n_start = len(config)
    pts = config.points
    sim.summ = np.array([pts[:, 0].min(), pts[:, 0].max(),
                         float(np.sqrt((pts ** 2).sum(axis=1)).max()), 0.0])
    if model.dim > 1:
        sim.summ[S_MIN] = sim.summ[S_MAX] = np.nan
    sim._chunks = []
    sim._kargs = model.kernel_args()
    inj = None
    if psi is not None:
        inj = np.atleast_1d(np.asarray(psi, dtype=float))
    elif u is not None:
        inj = np.full(model.dim, float(u))
    injecting = chi is not None or inj is not None
    sim._run_kernel(len(config) + 1, inj_chi=-1 if chi is None else chi - 1, inj_val=inj,
                    extra_flags=F_INJ if injecting else 0)
    return sim.records[0]


def run(model: ModelSpec, steps: int, seed: int = 0, recorders=DEFAULT_RECORDERS,
        replica: int = 0) -> Trace:
    """Run ``steps`` steps of ``model``; deterministic in ``(model, steps, seed, replica)``."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    sim = Simulation(model, seed, replica, recorders)
    sim.advance(steps)
    return sim.trace()


def embedded_maxima(source, initial: float | None = None) -> list[tuple[int, float]]:
    """Jump times and values of a running maximum.

    ``source`` is either a Trace recorded with ``extrema`` or a sequence of
    running maxima whose first element is the initial value.  Jump times are
    1-based positions in the sequence, or step indices ``n`` for a trace.
    """
    if isinstance(source, Trace):
        if source.records.M is None:
            raise MissingRecorderError("trace was run without the 'extrema' recorder")
        pts = np.asarray(source.model.initial)
        m0 = float(pts[:, 0].max()) if source.model.dim == 1 else float(np.sqrt((pts ** 2).sum(1)).max())
        seq = source.records.M
        idx = np.flatnonzero(np.diff(np.concatenate([[m0], seq])) > 0)
        return [(int(source.records.n[i]), float(seq[i])) for i in idx]
    seq = np.asarray(source, dtype=float)
    if len(seq) == 0:
        return []
    idx = np.flatnonzero(np.diff(seq) > 0) + 1
    return [(int(i) + 1, float(seq[i])) for i in idx]
