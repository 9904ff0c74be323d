"""Shared fixtures plus the acceptance summary banner.

Acceptance tests register one line per criterion via `record_criterion`;
the terminal summary prints them all, pass or fail, so a single glance
shows which criteria hold.
"""

import numpy as np
import pytest

from dmlm import SyntheticSpeechCodec, build_token_space

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        tr.write_line(f"criterion {number:2d} [{status}] {name}{suffix}")


@pytest.fixture(scope="session")
def space30():
    """Text 30 + speech 64, the workhorse layout of the toy experiments."""
    return build_token_space(30, 64, 0)


@pytest.fixture(scope="session")
def clean_codec(space30):
    return SyntheticSpeechCodec.create(space30, 3, noise=0.0, seed=7)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


def richardson_grad(f, h):
    """Richardson-extrapolated central difference, (4 D(h/2) - D(h)) / 3.

    Central differences carry an O(h^2) truncation term; combining two
    step sizes cancels it, leaving O(h^4) truncation plus the roundoff
    floor. `f` maps a scalar offset to the objective value.
    """

    def central(step):
        return (f(step) - f(-step)) / (2.0 * step)

    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def grads_close(analytic, numeric, rel_tol, abs_tol):
    """True when |a - n| <= abs_tol or relative error <= rel_tol.

    The absolute guard covers near-zero gradients whose finite-difference
    estimate is dominated by float64 roundoff rather than by any real
    disagreement.
    """
    diff = abs(analytic - numeric)
    if diff <= abs_tol:
        return True
    return diff / max(abs(analytic), abs(numeric)) <= rel_tol
