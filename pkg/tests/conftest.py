import numpy as np
import pytest

from pertdetect.classifier import Layer, MlpModel


def random_mlp(rng, dims=(6, 5, 3)):
    layers = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        act = "identity" if i == len(dims) - 2 else "relu"
        layers.append(Layer(rng.standard_normal((b, a)), rng.standard_normal(b) * 0.1, act))
    return MlpModel(layers)


def constant_mlp(M, K=3, favored=0):
    """Ignores its input; always predicts ``favored``."""
    b = np.zeros(K)
    b[favored] = 5.0
    return MlpModel([Layer(np.zeros((K, M)), b, "identity")])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# (criterion, passed, detail) lines recorded by test_acceptance.py
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} [{number:2d}] {name}: {detail}")
