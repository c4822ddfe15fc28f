"""Runs the full acceptance suite once and asserts every criterion.

The suite prints one PASS/FAIL line per criterion; the determinism criterion
reruns everything with the same root seed and byte-compares the CSV output,
so a full pass here certifies reproducibility as well.
"""

import os

import pytest

from mmmlab.acceptance import CRITERIA, SUITES, run_suite

ROOT_SEED = 20250811


@pytest.fixture(scope="module")
def suite_results(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    results = run_suite("all", ROOT_SEED, str(out))
    return {res.number: res for res in results}, str(out)


@pytest.mark.parametrize("number", sorted(SUITES["all"]))
def test_criterion(suite_results, number):
    results, _ = suite_results
    res = results[number]
    assert res.passed, f"criterion {number} ({res.name}): {res.detail}"


def test_runtime_budgets(suite_results):
    # generous stated budgets, in seconds, per criterion
    budgets = {1: 10, 2: 10, 3: 30, 4: 5, 5: 30, 6: 60, 7: 60, 8: 300, 9: 120, 10: 1, 11: 30, 12: 600, 13: 120}
    results, _ = suite_results
    for number, cap in budgets.items():
        assert results[number].seconds < cap, (
            f"criterion {number} took {results[number].seconds:.1f}s (budget {cap}s)"
        )


def test_csv_artifacts_written(suite_results):
    results, out = suite_results
    files = sorted(os.listdir(out))
    assert len([f for f in files if f.endswith(".csv")]) == len(results)
    for name in files:
        with open(os.path.join(out, name)) as fh:
            lines = fh.read().strip().splitlines()
        assert len(lines) >= 2
        assert lines[-1].startswith("# ")


def test_every_defined_criterion_is_in_a_suite():
    covered = set(SUITES["metric"]) | set(SUITES["diagnostics"]) | set(SUITES["genealogy"])
    assert covered == set(CRITERIA)
