import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from greyboxid import (
    IntegratorConfig,
    add_output_noise,
    benchmark,
    generate_multisine,
    simulate_newton,
    trim_transient,
)

SETTLE = 5
KEEP_HIGH = 10
KEEP_LOW = 3
SEED = 20


def _benchmark_run(rms, keep, seed=SEED):
    spec = benchmark.benchmark_multisine(rms=rms, periods=SETTLE + keep, seed=seed)
    u = generate_multisine(spec)
    y = simulate_newton(benchmark.duffing_benchmark(), u, IntegratorConfig(oversampling=8))
    return spec, trim_transient(u, SETTLE), trim_transient(y, SETTLE)


@pytest.fixture(scope="session")
def bench_high():
    """High-level benchmark run: spec, input and output records (10 periods)."""
    return _benchmark_run(benchmark.HIGH_LEVEL_RMS, KEEP_HIGH)


@pytest.fixture(scope="session")
def bench_low():
    return _benchmark_run(benchmark.LOW_LEVEL_RMS, KEEP_LOW)


@pytest.fixture(scope="session")
def bench_noisy(bench_high):
    """High-level run with white output noise at 40 dB SNR."""
    spec, u, y = bench_high
    noisy, sigma = add_output_noise(y, 40.0, seed=99)
    return spec, u, noisy, sigma
