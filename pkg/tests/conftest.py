"""Shared fixtures and the acceptance-criteria summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from ot3d.params import Params
from ot3d.synthetic import SyntheticShapeSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_params():
    """Desk-scale parameter set: full pipeline, small dictionaries."""
    return Params(generic_words=20, topics=12, specific_words=12, seed=7)


@pytest.fixture
def mug_cloud():
    return generate_synthetic(SyntheticShapeSpec("mug", points=1200, seed=11))


@pytest.fixture
def box_cloud():
    return generate_synthetic(SyntheticShapeSpec("box", points=2000, seed=5))


def random_features(rng, n, dim=153):
    """Random L1-normalized non-negative descriptor-like rows."""
    m = rng.random((n, dim))
    return m / m.sum(axis=1, keepdims=True)


# -- acceptance reporting -----------------------------------------------------

_CRITERIA = {
    "test_p1": "P1 descriptor correctness",
    "test_p2": "P2 sampler correctness",
    "test_p3": "P3 phi / topic synthesis algebra",
    "test_p4": "P4 clustering oracles",
    "test_p5": "P5 chi-squared metric axioms",
    "test_p6": "P6 protocol state machine",
    "test_p7": "P7 end-to-end synthetic open-ended run",
    "test_p8": "P8 persistence / replay",
    "test_p9": "P9 restaurant crossval (conditional)",
}

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def record_criterion(name: str, outcome: str) -> None:
    """Override the recorded outcome, e.g. to attach measured numbers."""
    _ACCEPTANCE_RESULTS[name] = outcome


def _criterion_for(test_name: str) -> str | None:
    for prefix, label in _CRITERIA.items():
        if test_name.startswith(prefix):
            return label
    return None


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance" not in str(item.fspath):
        return
    label = _criterion_for(item.name)
    if label is None:
        return
    if report.when == "call":
        if report.failed:
            _ACCEPTANCE_RESULTS[label] = f"FAIL ({item.name})"
        elif report.passed and not _ACCEPTANCE_RESULTS.get(label, "").startswith(
                ("PASS", "FAIL")):
            _ACCEPTANCE_RESULTS.setdefault(label, "PASS")
    elif report.when == "setup" and report.skipped:
        _ACCEPTANCE_RESULTS.setdefault(label, "SKIP")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{label}: {_ACCEPTANCE_RESULTS[label]}")
