import numpy as np
import pytest

from rmtspacing.eigensolver import spectrum_of
from rmtspacing.sampler import sample
from rmtspacing.spacings import semicircle_cdf


def pooled_semicircle_distance(spec, trials):
    """Kolmogorov distance between pooled normalised eigenvalues and the semicircle CDF."""
    values = np.sort(np.concatenate([spectrum_of(sample(spec, stream=t)).values for t in range(trials)]))
    m = len(values)
    f = semicircle_cdf(values)
    upper = np.arange(1, m + 1) / m
    lower = np.arange(0, m) / m
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f))))


def within_3se(samples, target):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    return abs(samples.mean() - target) <= 3 * se


def variance_within_3se(samples, target):
    """Sample variance against ``target`` using the delta-method standard error."""
    x = np.asarray(samples, dtype=float)
    c = x - x.mean()
    v = np.mean(c * c)
    se = np.sqrt((np.mean(c**4) - v * v) / len(x))
    return abs(v - target) <= 3 * se


@pytest.fixture(scope="session")
def exact_laws():
    from rmtspacing.limits import limit_law

    return {b: limit_law(b) for b in (1, 2, 4)}


SWEEP_N = (100, 200, 400, 800, 1600)


@pytest.fixture(scope="session")
def beta2_sweep():
    """Unfolded beta = 2 sweep on [-0.1, 0.1], 200 trials per size."""
    from rmtspacing.harness import ExperimentConfig, run_experiment
    from rmtspacing.sampler import EnsembleSpec

    cfg = ExperimentConfig(EnsembleSpec("beta-tridiagonal", 2, 1), SWEEP_N, 200,
                           {"mode": "unfolded", "interval": [-0.1, 0.1]}, master_seed=2024)
    return run_experiment(cfg)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
