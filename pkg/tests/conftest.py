import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_spd(rng, n, lo=0.5, hi=20.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def heat_default():
    """heat1d-default problem with a shared reference cache."""
    from trotterkit.cli import build_problem
    from trotterkit.config import preset
    from trotterkit.propagator import ReferenceCache

    problem = build_problem(preset("heat1d-default"))
    return problem, ReferenceCache(problem.A, problem.fam)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
