import numpy as np
import pytest

from onebit_mimo.likelihood import ObjectiveContext
from onebit_mimo.linops import DenseOperator, FFTOperator
from onebit_mimo.model import SystemConfig, make_dictionary, make_zc_training, random_paths, simulate_measurement, trial_rng


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def make_problem(M=8, N=8, T=10, B_RX=16, B_TX=16, L=2, snr_db=20.0, seed=0, trial=0, prior="map", mode="dense"):
    cfg = SystemConfig(M, N, T, L, B_RX, B_TX, seed=seed).with_snr_db(snr_db)
    d = make_dictionary(M, N, B_RX, B_TX)
    s = make_zc_training(N, T)
    paths = random_paths(trial_rng(seed, trial, 0), L)
    ms = simulate_measurement(cfg, paths, s, trial_rng(seed, trial, 1))
    op = DenseOperator(d, s) if mode == "dense" else FFTOperator(d, s)
    return cfg, d, s, paths, ObjectiveContext(ms.y_hat, ms.rho, op, prior)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small():
    return make_problem()


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Collect one summary line per acceptance criterion, printed at session end."""

    def _record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
