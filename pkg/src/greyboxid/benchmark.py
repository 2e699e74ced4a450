"""Synthetic single-dof Duffing benchmark used throughout the test suite.

A hardening oscillator with a small quadratic asymmetry, normalized so
the static stiffness is one.  At low forcing it behaves linearly; at
the high forcing level the cubic term shifts the resonance upward by
well over 10 Hz, which is the regime the identification pipeline is
exercised in.
"""
from __future__ import annotations

import numpy as np

from .basis import Monomial
from .signals import MultisineSpec
from .simulate import MechanicalSystemSpec, NonlinearElement, greybox_from_mechanical

__all__ = [
    "NATURAL_FREQUENCY_HZ",
    "DAMPING_RATIO",
    "CUBIC_COEFF",
    "QUADRATIC_COEFF",
    "SAMPLE_RATE_HZ",
    "SAMPLES_PER_PERIOD",
    "EXCITED_BAND_HZ",
    "LOW_LEVEL_RMS",
    "HIGH_LEVEL_RMS",
    "duffing_benchmark",
    "benchmark_truth_model",
    "benchmark_multisine",
]

NATURAL_FREQUENCY_HZ = 68.57
DAMPING_RATIO = 0.0468
CUBIC_COEFF = 3.95        # hardening stiffness, normalized units
QUADRATIC_COEFF = -0.25   # small softening asymmetry
SAMPLE_RATE_HZ = 2441.0
SAMPLES_PER_PERIOD = 8192
EXCITED_BAND_HZ = (0.0, 300.0)
LOW_LEVEL_RMS = 0.005
HIGH_LEVEL_RMS = 0.15


def duffing_benchmark(cubic=CUBIC_COEFF, quadratic=QUADRATIC_COEFF,
                      f_n=NATURAL_FREQUENCY_HZ, zeta=DAMPING_RATIO):
    """Benchmark oscillator with unit static stiffness.

    The mass is 1/omega_n^2 so the displacement response to the
    benchmark forcing levels is of order one, which makes the cubic and
    quadratic terms genuinely active at the high level.
    """
    omega = 2.0 * np.pi * f_n
    mass = 1.0 / omega**2
    damping = 2.0 * zeta / omega
    stiffness = 1.0
    elements = []
    if quadratic != 0.0:
        elements.append(NonlinearElement(quadratic, Monomial([(0, 0, 2)]), [1.0]))
    if cubic != 0.0:
        elements.append(NonlinearElement(cubic, Monomial([(0, 0, 3)]), [1.0]))
    return MechanicalSystemSpec(
        [[mass]], [[damping]], [[stiffness]],
        nonlinear_elements=elements,
        input_matrix=[[1.0]],
        outputs=[("disp", 0)],
    )


def benchmark_truth_model(fs=SAMPLE_RATE_HZ, **kwargs):
    """Sampled grey-box form of the benchmark oscillator."""
    return greybox_from_mechanical(duffing_benchmark(**kwargs), 1.0 / fs)


def benchmark_multisine(rms=HIGH_LEVEL_RMS, periods=25, seed=0,
                        fs=SAMPLE_RATE_HZ, samples_per_period=SAMPLES_PER_PERIOD,
                        band=EXCITED_BAND_HZ):
    """Flat random-phase multisine over the benchmark band."""
    return MultisineSpec(
        f_min=band[0], f_max=band[1], fs=fs,
        samples_per_period=samples_per_period,
        rms_amplitude=rms, periods=periods, rng_seed=seed,
    )
