import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Small synthetic speech/noise corpus shared by dataset and CLI tests."""
    from ifasnet.sim.corpus import write_synthetic_corpus
    speech, noise = write_synthetic_corpus(tmp_path_factory.mktemp("corpus"), n_speech=6, n_noise=3,
                                           seconds=1.5, seed=5)
    return speech, noise


@pytest.fixture(scope="session")
def small_dataset(corpus, tmp_path_factory):
    """Four 0.5 s utterances with 2 and 3 microphones."""
    from ifasnet.sim.dataset import build_dataset
    out = tmp_path_factory.mktemp("ds")
    return build_dataset(4, 11, out, *corpus, duration=0.5, mics=(2, 3))


_RESULTS = "acceptance_results"


@pytest.fixture
def criterion(request):
    """``record(name, passed, detail)``: log one acceptance line, shown in the summary."""
    lines = request.config.__dict__.setdefault(_RESULTS, [])

    def record(name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line, flush=True)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get(_RESULTS)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
