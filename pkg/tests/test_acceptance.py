"""Acceptance criteria 1-10 at desk scale (n = 2, 256^2 grid, jmax = 8).

Each criterion runs the corresponding verification suites, checks every
measured value against its tolerance and the wall-clock budget, and records
one PASS/FAIL line. The lines are printed in the pytest terminal summary and
when the file is run as a script.
"""
import time

import pytest

from fnx.config import load_config
from fnx.suites import Context, run_suite

#: lines collected for the terminal summary (see conftest.py)
REPORT = []

# criterion -> (title, [(suite, check names or None for all)], budget in seconds, config)
CRITERIA = {
    1: ("kernel moments", [("moments", ["phi_moments", "psi_moments", "cone_support", "tauber_epsilon"])], 10, "default"),
    2: ("telescoping", [("moments", ["telescoping"])], 10, "default"),
    3: ("Calderon residual", [("calderon", None)], 120, "default"),
    4: ("restriction identity", [("extension", ["restriction_interior", "restriction_exact_interior"])], 300, "default"),
    5: ("extension boundedness", [("extension", ["operator_norm_finite", "operator_norm_fine", "operator_norm_deeper"])],
        900, "default"),
    6: ("norm equivalences", [("equivalence", None)], 900, "default"),
    7: ("Luxemburg norm", [("luxemburg", None)], 30, "default"),
    8: ("Hardy and mollifier lemmas", [("hardy", None), ("mollifier", None)], 120, "variable"),
    9: ("interaction decay", [("ilj", None)], 120, "default"),
    10: ("uniformity", [("uniformity", None)], 1200, "default"),
}

CONFIGS = {
    "default": lambda: load_config(),
    # variable p with constant q keeps the two mixed-norm orders distinct
    "variable": lambda: load_config().with_(p_expr="2+0.5*sin(x1)", q_expr="1.5"),
}

_contexts = {}
_results = {}


def _suite(config: str, name: str):
    """Run a suite once per configuration; returns (result, seconds including setup)."""
    key = (config, name)
    if key not in _results:
        ctx = _contexts.setdefault(config, Context(CONFIGS[config]()))
        start = time.perf_counter()
        result = run_suite(name, ctx)
        _results[key] = (result, time.perf_counter() - start)
    return _results[key]


def evaluate(number: int):
    title, parts, budget, config = CRITERIA[number]
    checks, elapsed = [], 0.0
    for suite, names in parts:
        result, seconds = _suite(config, suite)
        elapsed += seconds
        selected = [c for c in result.checks if names is None or c.name in names]
        assert names is None or len(selected) == len(names), f"missing checks in {suite}"
        checks.extend((suite, c) for c in selected)
    failed = [c for _, c in checks if not c.passed]
    in_budget = elapsed < budget
    status = "PASS" if not failed and in_budget else "FAIL"
    detail = "; ".join(f"{suite}.{c.name} {c.value:.4g} {c.relation} {c.tolerance:g}" for suite, c in checks)
    line = f"criterion {number:2d} ({title}): {status}  [{elapsed:.1f} s of {budget} s]  {detail}"
    REPORT.append(line)
    print(line)
    return failed, in_budget, elapsed, budget


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    failed, in_budget, elapsed, budget = evaluate(number)
    assert not failed, [(c.name, c.value, c.relation, c.tolerance) for c in failed]
    assert in_budget, f"took {elapsed:.1f} s, budget {budget} s"


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        evaluate(n)
