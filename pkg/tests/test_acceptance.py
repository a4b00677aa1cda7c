"""The twelve acceptance criteria at their stated sizes and tolerances.

Each test runs one verification claim at the ``desk`` budget and prints one
line; the lines are repeated in the pytest terminal summary.  Run directly
with ``python3 tests/test_acceptance.py`` to print only the lines.
"""

import json
import sys

import pytest

from lisa import claims

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

SEED = 20240601

# criterion -> (claim ids, runtime budget in seconds or None)
CRITERIA = {
    1: (["sigma-uniform"], 1),
    2: (["boundedness-threshold"], 600),
    3: (["beta-middle-interval", "beta-boundary-interval"], 300),
    4: (["example2-boundedness"], 300),
    5: (["lp-formula"], 120),
    6: (["spacing-decay"], 600),
    7: (["dubbins-freedman"], 600),
    8: (["dimension-rnu"], 180),
    9: (["mixture-convergence"], None),
    10: (["h-law"], 120),
    11: (["continuous-time"], 600),
    12: (["infrastructure"], None),
}

_KEYS = {
    "boundedness-threshold": ["moment_sum_root", "moment_sum_oracle", "max_functional_root",
                              "max_functional_ci"],
    "beta-middle-interval": ["p_value"], "beta-boundary-interval": ["p_value"],
    "example2-boundedness": ["mean_sup_M", "se_sup_M", "all_diameters_finite"],
    "lp-formula": ["matches", "cases"],
    "spacing-decay": ["median_scaled_dstar", "median_martingale_change", "domination_violations"],
    "dubbins-freedman": ["ks_x2_p", "ks_left_mass_p", "rnu_correlation"],
    "dimension-rnu": ["dimension"], "mixture-convergence": ["fraction_ok", "median_ks"],
    "h-law": ["sup_vs_analytic", "sup_vs_monte_carlo"],
    "continuous-time": ["yule_mean", "yule_expected", "slope", "rate_bound"],
    "infrastructure": ["nn_equal_brute", "simulate_deterministic_across_threads",
                       "bmq_mean_distinct", "harmonic_H_n", "csa_ks_p"],
    "sigma-uniform": ["sigma", "abs_error"],
}


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    return str(v)


def run_criterion(k):
    ids, budget = CRITERIA[k]
    reports = [claims.verify(c, "desk", SEED) for c in ids]
    runtime = sum(r.runtime for r in reports)
    in_time = budget is None or runtime <= budget
    ok = all(r.passed for r in reports) and in_time
    detail = "; ".join(
        f"{r.claim} " + ", ".join(f"{key}={_short(r.statistics[key])}" for key in _KEYS[r.claim])
        for r in reports)
    limit = f" (limit {budget}s)" if budget else ""
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} [{runtime:.1f}s{limit}] {detail}"
    return ok, line, reports


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    ok, line, reports = run_criterion(k)
    print(line)
    ACCEPTANCE_LINES.append(line)
    notes = [n for r in reports for n in r.notes]
    assert ok, line + ("\n" + "\n".join(notes) if notes else "")


if __name__ == "__main__":
    failed = 0
    for k in sorted(CRITERIA) if len(sys.argv) < 2 else map(int, sys.argv[1:]):
        ok, line, reports = run_criterion(k)
        failed += not ok
        print(line, flush=True)
        for r in reports:
            print("   ", json.dumps(r.statistics), flush=True)
    sys.exit(1 if failed else 0)
