"""Command line entry point: ``lisa simulate | verify | scan | plot``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import claims, io
from .distributions import DisplacementLaw, constants, sample_H
from .engine import RECORDERS, ModelSpec, Simulation
from .io import ConfigError, ExperimentConfig


def simulate_to_dir(cfg: ExperimentConfig, out, threads: int | None = None) -> list[dict]:
    """Run all replicas of ``cfg`` and write steps/final CSVs plus summary.jsonl."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    def one(r):
        sim = Simulation(cfg.model, cfg.seed, r, cfg.recorders, timed=cfg.horizon is not None)
        if cfg.horizon is not None:
            sim.advance_until(cfg.horizon, 10_000_000)
        else:
            sim.advance(cfg.steps)
        tr = sim.trace()
        io.write_steps_csv(out / f"steps_r{r}.csv", tr)
        io.write_config_csv(out / f"final_r{r}.csv", tr.final, births=cfg.horizon is not None)
        extra = {"time": sim.time} if cfg.horizon is not None else None
        return io.summary_line(tr, extra)

    lines = claims.replica_map(one, cfg.replicas, threads)
    (out / "summary.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [json.loads(s) for s in lines]


def _cli_values(args) -> dict:
    vals = {}
    for key in ("model", "a", "law", "initial", "box", "radius", "weights", "base", "base_scale",
                "steps", "horizon", "replicas", "seed", "out", "recorders"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = (str(v), None)
    return vals


def cmd_simulate(args) -> int:
    vals = {}
    origin = "<cli>"
    if args.config:
        vals = io.read_config_file(args.config)
        origin = args.config
    # command line flags override the file
    vals.update(_cli_values(args))
    if "model" not in vals:
        vals["model"] = ("clu", None)
    cfg = io.build_config(vals, origin)
    rows = simulate_to_dir(cfg, cfg.out)
    for row in rows:
        print(json.dumps({k: row[k] for k in ("replica", "n", "dstar", "max_norm") if k in row}))
    return 0


def cmd_verify(args) -> int:
    ids = list(claims.CLAIMS) if args.claim == "all" else [args.claim]
    ok = True
    for cid in ids:
        rep = claims.verify(cid, args.budget, args.seed)
        ok &= rep.passed
        print(rep.line())
        if args.out:
            p = Path(args.out)
            p.mkdir(parents=True, exist_ok=True)
            (p / f"{cid}.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n", encoding="utf-8")
        else:
            print(json.dumps(rep.to_dict(), indent=2))
    return 0 if ok else 1


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


SCAN_SOFT_LIMIT = 2e9  # replica-steps before a budget warning


def cmd_scan(args) -> int:
    """C, C_hat, E H and median diameter over a grid of law parameters.

    ``--family normal`` scans the CLN scale a.  ``--family power`` scans the
    tail index alpha of the power mixture at fixed beta, over every p in
    ``--p-grid`` (default: the single value ``--p``).
    """
    grid = _floats(args.grid) if args.grid else []
    if args.family == "normal":
        points = [(DisplacementLaw.normal(a), (a,)) for a in grid]
        head = "a"
    else:
        ps = _floats(args.p_grid) if args.p_grid else [args.p]
        points = [(DisplacementLaw.power_mixture(al, args.beta, p), (al, p)) for p in ps for al in grid]
        head = "alpha,p"
    cost = len(points) * args.replicas * args.steps
    if cost > SCAN_SOFT_LIMIT:
        print(f"lisa: warning: scan needs {cost:.3g} replica-steps", file=sys.stderr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(f"{head},C,C_hat,C_plus_C_hat,mean_H,median_diameter\n")
        for law, key in points:
            c = constants(law)
            h = sample_H(law, np.random.default_rng([args.seed, 1]), n=args.draws)
            model = ModelSpec.cld(law)

            def diam(r):
                sim = Simulation(model, args.seed, r, recorders=())
                sim.advance(args.steps)
                s = sim.summary()
                return s["max"] - s["min"]

            d = np.median(claims.replica_map(diam, args.replicas)) if args.replicas else np.nan
            row = (*key, c.C, c.C_hat, c.C + c.C_hat, float(np.mean(h)), d)
            fh.write(",".join(io.fmt(x) for x in row) + "\n")
    print(out)
    return 0


def cmd_plot(args) -> int:
    pts, _ = io.read_config_csv(args.input)
    io.write_svg(args.out, pts, epochs=args.epochs)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lisa", description="Simulate and verify LISA point processes.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run replicas and write traces")
    s.add_argument("--config", help="key=value file; flags override it")
    s.add_argument("--model", help="RNU, CLU, CLN, CLD, BMQ or CSA")
    s.add_argument("--a", type=float, help="CLN scale")
    s.add_argument("--law", help="displacement law for CLD, e.g. normal:a=0.5")
    s.add_argument("--initial", help="initial points, e.g. '0;1' or '0,0;1,0'")
    s.add_argument("--box", help="box corners, e.g. '0;1'")
    s.add_argument("--radius", type=float, help="CSA interaction radius")
    s.add_argument("--weights", help="CSA weights w_1,w_2,...")
    s.add_argument("--base", help="BMQ base law: uniform or normal")
    s.add_argument("--base-scale", dest="base_scale", type=float)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--steps", type=int)
    g.add_argument("--horizon", type=float, help="continuous-time horizon")
    s.add_argument("--replicas", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--recorders", help=f"comma list from {sorted(RECORDERS)}")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run an acceptance experiment")
    v.add_argument("claim", choices=[*claims.CLAIMS, "all"])
    v.add_argument("--budget", choices=claims.BUDGETS, default="desk")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="directory for JSON reports")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("scan", help="parameter scan of C + C_hat, E H and diameters")
    c.add_argument("--family", choices=("normal", "power"), default="normal")
    c.add_argument("--grid", default="0.5,0.75,1.0,1.25", help="comma list of a (normal) or alpha (power)")
    c.add_argument("--beta", type=float, default=0.25, help="power mixture beta")
    c.add_argument("--p", type=float, default=0.3, help="power mixture p")
    c.add_argument("--p-grid", dest="p_grid", help="comma list of p values (power family)")
    c.add_argument("--steps", type=int, default=10_000)
    c.add_argument("--replicas", type=int, default=20, help="0 skips the diameter column")
    c.add_argument("--draws", type=int, default=20_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="scan.csv")
    c.set_defaults(func=cmd_scan)

    pl = sub.add_parser("plot", help="SVG scatter of a final configuration")
    pl.add_argument("input", help="final_r*.csv written by simulate")
    pl.add_argument("--out", default="config.svg")
    pl.add_argument("--epochs", type=int, default=4)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError) as e:
        print(f"lisa: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
