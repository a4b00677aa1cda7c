"""Trace serialization, flat key=value experiment configs and SVG scatter plots.

Floats are written with ``repr``, the shortest decimal string that reads back
to the same binary64 value, so files replay bit for bit.  All text is UTF-8
with LF line endings.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import DisplacementLaw
from .engine import RECORDERS, ModelSpec, ParticleConfig, Records, Trace

# ----------------------------------------------------------------------
# number formatting


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v != v:
        return "nan"
    return repr(v)


def _parse_float(s: str) -> float:
    return float(s) if s else np.nan


# ----------------------------------------------------------------------
# step records and final configurations


def step_columns(dim: int) -> list[str]:
    xs = ["x_new"] if dim == 1 else [f"x_new_{j + 1}" for j in range(dim)]
    return ["n", "chi", "d", *xs, "dstar", "m", "M"]


def write_steps_csv(path, trace: Trace) -> None:
    rec = trace.records
    dim = trace.model.dim
    cols = [rec.n, rec.chi, rec.d]
    cols += [None if rec.x is None else rec.x[:, j] for j in range(dim)]
    cols += [rec.dstar, rec.m, rec.M]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(step_columns(dim)) + "\n")
        for k in range(len(rec)):
            fh.write(",".join("" if c is None else fmt(c[k]) for c in cols) + "\n")


def read_steps_csv(path, dim: int | None = None) -> Records:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    if dim is None:
        dim = sum(h.startswith("x_new") for h in head)
    col = {h: j for j, h in enumerate(head)}
    xcols = ["x_new"] if dim == 1 else [f"x_new_{j + 1}" for j in range(dim)]

    def column(name, conv=_parse_float):
        vals = [r[col[name]] for r in body]
        if body and all(v == "" for v in vals):
            return None
        return np.array([conv(v) for v in vals])

    n = np.array([int(r[col["n"]]) for r in body], dtype=np.int64)
    chi = column("chi", int)
    x = None
    if all(column(c) is not None for c in xcols) and body:
        x = np.column_stack([column(c) for c in xcols])
    return Records(n, None if chi is None else chi.astype(np.int64), column("d"), x,
                   column("dstar"), column("m"), column("M"))


def write_config_csv(path, config: ParticleConfig, births: bool = False) -> None:
    dim = config.dim
    xs = ["x"] if dim == 1 else [f"x_{j + 1}" for j in range(dim)]
    head = ["id", "parent", *xs] + (["birth"] if births else [])
    pts = config.points
    par = config.parents
    bt = config.births
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(head) + "\n")
        for i in range(len(config)):
            row = [str(i + 1), str(int(par[i]))] + [fmt(v) for v in pts[i]]
            if births:
                row.append(fmt(bt[i]))
            fh.write(",".join(row) + "\n")


def read_config_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(points, parents) from a final-configuration file."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    xcols = [j for j, h in enumerate(head) if h == "x" or h.startswith("x_")]
    body = rows[1:]
    pts = np.array([[float(r[j]) for j in xcols] for r in body]).reshape(len(body), len(xcols))
    par = np.array([int(r[1]) for r in body], dtype=np.int64)
    return pts, par


def summary_line(trace: Trace, extra: dict | None = None) -> str:
    d = {"replica": trace.replica, "seed": trace.seed, "steps": trace.steps,
         "model": trace.model.to_dict(), "recorders": sorted(trace.recorders)}
    d.update({k: float(v) if isinstance(v, (float, np.floating)) else v
              for k, v in trace.summary.items()})
    if extra:
        d.update(extra)
    return json.dumps(d, sort_keys=True, allow_nan=True)


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_trace(out_dir, replica: int = 0) -> Trace:
    """Rebuild a Trace written by ``simulate`` (records plus final configuration)."""
    out = Path(out_dir)
    meta = next(d for d in read_jsonl(out / "summary.jsonl") if d["replica"] == replica)
    model = ModelSpec.from_dict(meta["model"])
    rec = read_steps_csv(out / f"steps_r{replica}.csv", model.dim)
    pts, par = read_config_csv(out / f"final_r{replica}.csv")
    cfg = ParticleConfig.from_points(pts)
    cfg.parent[: len(par)] = par
    summ = {k: meta[k] for k in ("n", "max_norm", "min", "max", "dstar") if k in meta}
    return Trace(model, int(meta["seed"]), rec, cfg, replica, frozenset(meta["recorders"]), summ)


# ----------------------------------------------------------------------
# flat key=value configuration


class ConfigError(ValueError):
    pass


CONFIG_KEYS = {
    "model", "a", "law", "initial", "box", "radius", "weights", "base", "base_scale",
    "steps", "horizon", "replicas", "seed", "out", "recorders", "verify_id",
}


@dataclass
class ExperimentConfig:
    model: ModelSpec
    steps: int | None = None
    horizon: float | None = None
    replicas: int = 1
    seed: int = 0
    recorders: frozenset = frozenset(RECORDERS)
    out: str = "out"
    verify_id: str | None = None
    sources: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if (self.steps is None) == (self.horizon is None):
            raise ConfigError("give exactly one of steps or horizon")
        if self.steps is not None and self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if self.horizon is not None and not self.horizon >= 0:
            raise ConfigError("horizon must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


def parse_points(text: str) -> list[tuple[float, ...]]:
    """'0;1' -> [(0,), (1,)];  '0,0;1,0' -> [(0, 0), (1, 0)]."""
    return [tuple(float(v) for v in p.split(",")) for p in text.split(";") if p.strip()]


def read_config_file(path) -> dict[str, tuple[str, int]]:
    """key -> (value, line number); raises ConfigError naming file and line."""
    out: dict[str, tuple[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            key = key.strip()
            if not eq:
                raise ConfigError(f"{path}:{no}: expected key=value, got {raw.strip()!r}")
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{no}: unknown key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{no}: duplicate key {key!r} (first on line {out[key][1]})")
            out[key] = (val.strip(), no)
    return out


def build_config(values: dict[str, tuple[str, int | None]], origin: str = "<cli>") -> ExperimentConfig:
    """Turn raw key/value strings into an ExperimentConfig with located errors."""

    def where(key):
        no = values[key][1]
        return f"{origin}:{no}: " if no else f"{origin}: "

    def get(key, conv, default=None):
        if key not in values:
            return default
        try:
            return conv(values[key][0])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{where(key)}bad value for {key!r}: {e}") from None

    if "model" not in values:
        raise ConfigError(f"{origin}: missing required key 'model'")
    d = {"variant": values["model"][0].upper()}
    for k in ("a", "law", "base", "base_scale", "radius"):
        if k in values:
            d[k] = values[k][0]
    if "initial" in values:
        d["initial"] = get("initial", parse_points)
    if "box" in values:
        d["box"] = get("box", parse_points)
    if "weights" in values:
        d["weights"] = get("weights", lambda s: [float(v) for v in s.split(",")])
    try:
        model = ModelSpec.from_dict(d)
    except (ValueError, KeyError, TypeError) as e:
        key = next((k for k in ("law", "a", "initial", "box", "weights", "radius") if k in values),
                   "model")
        raise ConfigError(f"{where(key)}invalid model: {e}") from None
    recs = get("recorders", lambda s: frozenset(r.strip() for r in s.split(",") if r.strip()),
               frozenset(RECORDERS))
    bad = recs - set(RECORDERS)
    if bad:
        raise ConfigError(f"{where('recorders')}unknown recorders {sorted(bad)}")
    try:
        return ExperimentConfig(
            model=model,
            steps=get("steps", int),
            horizon=get("horizon", float),
            replicas=get("replicas", int, 1),
            seed=get("seed", int, 0),
            recorders=recs,
            out=get("out", str, "out"),
            verify_id=get("verify_id", str),
            sources={k: v[1] for k, v in values.items()},
        )
    except ConfigError as e:
        raise ConfigError(f"{origin}: {e}") from None


def law_from_text(text: str) -> DisplacementLaw:
    return DisplacementLaw.parse(text)


# ----------------------------------------------------------------------
# SVG


def write_svg(path, points, epochs: int = 4, size: int = 800, radius: float = 1.2) -> None:
    """Scatter plot with particles shaded by insertion epoch (light to dark).

    1D configurations are drawn against insertion rank.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 or pts.shape[1] == 1:
        x = pts.reshape(-1)
        pts = np.column_stack([x, np.arange(len(x)) / max(len(x) - 1, 1)])
    pts = pts[:, :2]
    n = len(pts)
    lo = pts.min(axis=0) if n else np.zeros(2)
    hi = pts.max(axis=0) if n else np.ones(2)
    span = float(max(hi - lo)) or 1.0
    pad = 0.03 * span
    scale = size / (span + 2 * pad)
    shades = np.linspace(190, 20, max(epochs, 1)).astype(int)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    bounds = np.linspace(0, n, max(epochs, 1) + 1).astype(int)
    for e in range(len(bounds) - 1):
        g = shades[e]
        lines.append(f'<g fill="rgb({g},{g},{g})">')
        for i in range(bounds[e], bounds[e + 1]):
            cx = (pts[i, 0] - lo[0] + pad) * scale
            cy = size - (pts[i, 1] - lo[1] + pad) * scale
            lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}"/>')
        lines.append("</g>")
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
