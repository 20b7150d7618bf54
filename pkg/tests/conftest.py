import numpy as np
import pytest

from ctxvalues import scenarios
from ctxvalues.measurement import PostSelection, State

PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)


def post_vector(tan_theta: float) -> np.ndarray:
    theta = np.arctan(tan_theta)
    return np.array([np.cos(theta), np.sin(theta)])


def random_state(rng, d: int, pure: bool = False) -> np.ndarray:
    k = 1 if pure else d
    x = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def random_effect(rng, d: int) -> np.ndarray:
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    e = x @ x.conj().T
    return e / np.linalg.eigvalsh(e)[-1]


def random_unit(rng, d: int) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def ce1_setup(a="1", b="-1"):
    cf = scenarios.ce1([str(a), str(b)])
    return cf.to_context(), cf.get_observable()


def ce2_setup():
    cf = scenarios.ce2()
    return cf.to_context(), cf.get_observable()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def ce1():
    return ce1_setup()


@pytest.fixture
def ce2():
    return ce2_setup()


@pytest.fixture
def plus_state():
    return State.pure(PLUS)


@pytest.fixture
def half_post():
    return PostSelection.pure(post_vector(0.5))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
