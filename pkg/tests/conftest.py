"""Shared fixtures and the acceptance-suite reporting hook."""

import numpy as np
import pytest

from icct.crystal import ChainConfig, chain_modes, com_mode, make_mode_spec

# §-IV-like linear chain: four ions, transverse/axial frequency ratio 6.0,
# sideband Rabi rate chosen so the cutoff sits near 400 us.
EXPERIMENT_ANISOTROPY = 6.0
EXPERIMENT_G = 3380.0


@pytest.fixture(scope="session")
def chain4_modes():
    modes = chain_modes(ChainConfig(4, anisotropy=EXPERIMENT_ANISOTROPY, axis="transverse"))
    return [
        make_mode_spec(vec, EXPERIMENT_G, label=f"chain4-mode{i}", frequency=freq)
        for i, (freq, vec) in enumerate(modes)
    ]


@pytest.fixture(scope="session")
def com4():
    return com_mode(4, g=EXPERIMENT_G)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_mode_eta(rng, n):
    eta = rng.normal(size=n)
    while np.linalg.norm(eta) < 1e-3:
        eta = rng.normal(size=n)
    return eta / np.linalg.norm(eta)


# one pass/fail line per acceptance criterion, printed after the run
_acceptance_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _acceptance_results[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{name}: {_acceptance_results[name]}")
