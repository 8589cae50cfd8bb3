import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Pretraining recipe used by the end-to-end tests on the 1-D synthetic pair.
# Architecture is the small HPO setting; the optimiser settings are the ones
# that fit the auxiliary sine well within ~1 s.
FIG3_MLP = dict(learning_rate=3e-3, epochs=1000, batch_size=64, patience=100, seed=0)


@pytest.fixture(scope="session")
def fig3_model():
    from jumbo.benchmarks import make_fig3_pair
    from jumbo.nn import MLPConfig, pretrain

    pair = make_fig3_pair()
    return pretrain(pair.offline_dataset(500, seed=0), MLPConfig(**FIG3_MLP))


_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, title, ok, detail)``; also asserts ``ok``."""

    def record(n, title, ok, detail=""):
        _ACCEPTANCE[n] = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        assert ok, _ACCEPTANCE[n]

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
