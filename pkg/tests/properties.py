"""Property checks shared between the unit tests and the acceptance suite.

Each check raises AssertionError on failure and returns quietly on
success, so they can be batched and timed by the acceptance gate.
"""
import numpy as np

from greyboxid import (
    GreyBoxModel,
    IntegratorConfig,
    MultisineSpec,
    benchmark,
    dft_lines,
    extended_frf,
    generate_multisine,
    modal_parameters,
    pack_parameters,
    simulate_greybox,
    simulate_newton,
    unpack_parameters,
)
from helpers import linear_recursion_oracle, random_stable_model, make_multisine


def check_pack_roundtrip(seed=0):
    rng = np.random.default_rng(seed)
    for n, m, p, s in [(2, 1, 1, 2), (3, 2, 2, 1), (4, 1, 3, 0), (1, 1, 1, 3)]:
        model = random_stable_model(rng, n, s, p=p, m=m)
        back = unpack_parameters(pack_parameters(model), model)
        for name in "ABCDEF":
            assert np.array_equal(getattr(back, name), getattr(model, name)), name


def check_frf_similarity_invariance(seed=1):
    rng = np.random.default_rng(seed)
    model = random_stable_model(rng, 3, 2)
    T = rng.standard_normal((3, 3)) + np.eye(3)
    other = model.similarity_transform(T)
    lines = np.arange(1, 200)
    h0 = extended_frf(model, lines, 1024)
    h1 = extended_frf(other, lines, 1024)
    assert np.linalg.norm(h1 - h0) <= 1e-10 * np.linalg.norm(h0)
    m0 = modal_parameters(model)
    m1 = modal_parameters(other)
    assert np.allclose(m0.frequencies, m1.frequencies, rtol=1e-9)
    assert np.allclose(m0.damping_ratios, m1.damping_ratios, rtol=1e-9)


def check_coefficient_similarity_invariance(seed=2):
    from greyboxid import convert_coefficients

    rng = np.random.default_rng(seed)
    truth = benchmark.benchmark_truth_model()
    T = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    other = truth.similarity_transform(T)
    lines = np.arange(1, 1007)
    a = convert_coefficients(truth, lines, 8192)
    b = convert_coefficients(other, lines, 8192)
    for ea, eb in zip(a, b):
        assert np.linalg.norm(eb.series - ea.series) <= 1e-10 * np.linalg.norm(ea.series)


def check_dft_parseval(seed=3):
    rng = np.random.default_rng(seed)
    N = 512
    x = rng.standard_normal(N)
    from greyboxid import SignalRecord

    rec = SignalRecord(x[None, :], 100.0, N)
    # oracle: full-grid DFT energy balance with the 1/N scaling
    full = np.fft.fft(x) / N
    assert abs(np.sum(np.abs(full) ** 2) - np.mean(x**2)) <= 1e-10 * np.mean(x**2)
    # the line-restricted transform agrees with the full-grid oracle
    lines = np.arange(0, N // 2 + 1)
    spec = dft_lines(rec, lines)
    assert np.allclose(spec.values[0], full[: N // 2 + 1], rtol=0, atol=1e-14)


def check_multisine_rms_control():
    for rms in (0.005, 0.15, 2.0):
        spec = MultisineSpec(0.0, 300.0, 2441.0, 2048, rms, periods=2, rng_seed=5)
        u = generate_multisine(spec)
        achieved = np.sqrt(np.mean(u.data**2))
        assert abs(achieved - rms) <= 1e-12 * rms
        period = u.per_period()
        assert np.array_equal(period[:, 0], period[:, 1])


def check_simulator_linear_consistency(seed=4):
    rng = np.random.default_rng(seed)
    model = random_stable_model(rng, 3, 0)
    u = make_multisine(N=512, periods=2, seed=9)
    y = simulate_greybox(model, u)
    oracle = linear_recursion_oracle(model, u.data)
    assert np.array_equal(y.data, oracle)


def check_rk4_order():
    sys = benchmark.duffing_benchmark()
    spec = benchmark.benchmark_multisine(rms=0.02, periods=1, seed=13,
                                         samples_per_period=512)
    u = generate_multisine(spec)
    ref = simulate_newton(sys, u, IntegratorConfig(oversampling=64)).data
    e = {}
    for ov in (4, 8):
        yo = simulate_newton(sys, u, IntegratorConfig(oversampling=ov)).data
        e[ov] = np.linalg.norm(yo - ref)
    order = np.log2(e[4] / e[8])
    assert order >= 3.5, f"observed RK4 order {order:.2f}"


ALL_CHECKS = [
    check_pack_roundtrip,
    check_frf_similarity_invariance,
    check_coefficient_similarity_invariance,
    check_dft_parseval,
    check_multisine_rms_control,
    check_simulator_linear_consistency,
    check_rk4_order,
]
