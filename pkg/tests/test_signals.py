import numpy as np
import pytest
import scipy.stats

from greyboxid import (
    MultisineSpec,
    SignalRecord,
    average_periods,
    dft_lines,
    differentiate_periodic,
    empirical_frf,
    estimate_noise_variance,
    generate_multisine,
    trim_transient,
)
from greyboxid.signals import effective_weights

from properties import check_dft_parseval, check_multisine_rms_control


def paper_style_spec(**kw):
    base = dict(f_min=0.0, f_max=300.0, fs=2441.0, samples_per_period=8192,
                rms_amplitude=0.15, periods=2, rng_seed=7)
    base.update(kw)
    return MultisineSpec(**base)


def test_excited_band_and_rms():
    spec = paper_style_spec()
    lines = spec.excited_lines()
    assert lines[0] == 1  # DC always excluded
    assert lines[-1] == int(np.floor(300.0 * 8192 / 2441.0)) == 1006
    u = generate_multisine(spec)
    assert abs(np.sqrt(np.mean(u.data**2)) - 0.15) <= 1e-12 * 0.15
    spec_full = dft_lines(u, np.arange(0, 4097))
    mags = np.abs(spec_full.values[0])
    assert np.all(mags[lines] > 1e-6)
    off = np.setdiff1d(np.arange(4097), lines)
    assert np.all(mags[off] < 1e-12)


def test_single_bin_is_pure_cosine():
    spec = MultisineSpec(10.1, 10.2, 100.0, 256, 1.0, rng_seed=3)
    lines = spec.excited_lines()
    assert lines.size == 1
    k = lines[0]
    assert k == 26
    u = generate_multisine(spec)
    # oracle reconstructs the phase from the same named generator
    phase = np.random.Generator(np.random.PCG64(3)).uniform(0, 2 * np.pi, 1)[0]
    t = np.arange(256)
    expected = np.cos(2 * np.pi * k * t / 256 + phase)
    expected *= 1.0 / np.sqrt(np.mean(expected**2))
    assert np.allclose(u.data[0], expected, atol=1e-12)


def test_same_seed_reproducible():
    a = generate_multisine(paper_style_spec())
    b = generate_multisine(paper_style_spec())
    assert np.array_equal(a.data, b.data)
    c = generate_multisine(paper_style_spec(rng_seed=8))
    assert not np.array_equal(a.data, c.data)


def test_exact_periodicity():
    u = generate_multisine(paper_style_spec(periods=3))
    blocks = u.per_period()
    assert np.array_equal(blocks[:, 0], blocks[:, 1])
    assert np.array_equal(blocks[:, 0], blocks[:, 2])


def test_rms_control_property():
    check_multisine_rms_control()


def test_nyquist_violation_rejected():
    with pytest.raises(ValueError, match="Nyquist"):
        paper_style_spec(f_max=1500.0)


def test_empty_excited_set_rejected():
    with pytest.raises(ValueError, match="empty|excited"):
        MultisineSpec(10.0, 10.0001, 100.0, 256, 1.0,
                      excluded_lines={26}, rng_seed=0)


def test_trim_transient_counts():
    u = generate_multisine(paper_style_spec(periods=25))
    kept = trim_transient(u, 5)
    assert kept.periods == 20
    assert trim_transient(u, 0) is u
    with pytest.raises(ValueError):
        trim_transient(u, 25)


def test_dft_cosine_amplitude():
    N = 256
    t = np.arange(2 * N)
    x = np.cos(2 * np.pi * 5 * t / N)
    rec = SignalRecord(x[None], 100.0, N)
    spec = dft_lines(rec, np.array([4, 5, 6]))
    assert abs(spec.values[0, 1] - 0.5) < 1e-12
    assert np.all(np.abs(spec.values[0, [0, 2]]) < 1e-12)


def test_dft_zero_signal():
    rec = SignalRecord(np.zeros((2, 512)), 10.0, 256)
    spec = dft_lines(rec, np.arange(1, 100))
    assert np.all(spec.values == 0)


def test_dft_parseval_property():
    check_dft_parseval()


def test_dft_linearity_and_symmetry():
    rng = np.random.default_rng(11)
    N = 128
    x, y = rng.standard_normal((2, N))
    lines = np.arange(0, N // 2 + 1)
    as_spec = lambda v: dft_lines(SignalRecord(v[None], 1.0, N), lines).values[0]
    assert np.allclose(as_spec(2 * x + 3 * y), 2 * as_spec(x) + 3 * as_spec(y),
                       atol=1e-14)
    full = np.fft.fft(x) / N
    assert np.allclose(full[1: N // 2], np.conj(full[N - 1: N // 2: -1]))


def test_dft_line_out_of_range():
    rec = SignalRecord(np.zeros((1, 256)), 10.0, 256)
    with pytest.raises(ValueError):
        dft_lines(rec, np.array([200]))


def test_noise_variance_identical_periods_is_zero():
    u = generate_multisine(paper_style_spec(periods=4))
    noise = estimate_noise_variance(dft_lines(u, np.arange(1, 50), "per-period"))
    assert noise.is_noiseless
    assert np.all(noise.variance == 0.0)


def test_noise_variance_two_point():
    # two periods differing by +delta/-delta at one bin: averaged-spectrum
    # variance is delta^2 there
    N = 64
    delta = 0.01
    t = np.arange(N)
    base = np.cos(2 * np.pi * 3 * t / N)
    bump = np.cos(2 * np.pi * 7 * t / N)  # DFT value 0.5 at bin 7
    x = np.concatenate([base + 2 * delta * bump, base - 2 * delta * bump])
    rec = SignalRecord(x[None], 1.0, N)
    noise = estimate_noise_variance(dft_lines(rec, np.arange(1, 32), "per-period"))
    k7 = 7 - 1
    assert abs(noise.variance[k7, 0] - delta**2) < 1e-15
    others = np.delete(noise.variance[:, 0], k7)
    assert np.all(others < 1e-20)


def test_noise_variance_chi_square_coverage():
    # white-noise oracle: the sample variance over P periods follows
    # sigma^2 chi^2_{2(P-1)} / (2(P-1)) per line; check the 95% interval
    rng = np.random.default_rng(42)
    N, P, sigma = 256, 20, 0.05
    signal = np.cos(2 * np.pi * 9 * np.arange(N) / N)
    x = np.tile(signal, P) + sigma * rng.standard_normal(P * N)
    rec = SignalRecord(x[None], 1.0, N)
    lines = np.arange(1, N // 2)
    noise = estimate_noise_variance(dft_lines(rec, lines, "per-period"))
    true_var = sigma**2 / N / P  # averaged-spectrum variance per line
    ratio = noise.variance[:, 0] / true_var
    dof = 2 * (P - 1)
    lo, hi = scipy.stats.chi2.ppf([0.025, 0.975], dof) / dof
    coverage = np.mean((ratio > lo) & (ratio < hi))
    assert coverage > 0.90  # binomial slack around the nominal 95 %
    # oracle-computed probability of the +-35 % band quoted for 19 periods
    p35 = scipy.stats.chi2.cdf(1.35 * dof, dof) - scipy.stats.chi2.cdf(0.65 * dof, dof)
    frac35 = np.mean(np.abs(ratio - 1) < 0.35)
    assert abs(frac35 - p35) < 0.06


def test_noise_variance_single_period_rejected():
    u = generate_multisine(paper_style_spec(periods=1))
    with pytest.raises(ValueError, match="2 periods|per-period"):
        estimate_noise_variance(dft_lines(u, np.arange(1, 50), "per-period"))
    with pytest.raises(ValueError, match="per-period"):
        estimate_noise_variance(dft_lines(u, np.arange(1, 50)))


def test_variance_invariant_under_coherent_component():
    rng = np.random.default_rng(5)
    N, P = 128, 8
    noise = 0.1 * rng.standard_normal(P * N)
    coherent = np.tile(np.sin(2 * np.pi * 5 * np.arange(N) / N), P)
    lines = np.arange(1, 60)
    va = estimate_noise_variance(
        dft_lines(SignalRecord(noise[None], 1.0, N), lines, "per-period"))
    vb = estimate_noise_variance(
        dft_lines(SignalRecord((noise + coherent)[None], 1.0, N), lines, "per-period"))
    assert np.allclose(va.variance, vb.variance, rtol=1e-9, atol=1e-18)


def test_effective_weights_suppresses_numerical_noise():
    u = generate_multisine(paper_style_spec(periods=4))
    per = dft_lines(u, np.arange(1, 50), "per-period")
    tweaked = per.values.copy()
    tweaked[0] *= 1 + 1e-14  # machine-level scatter
    from greyboxid import SpectrumRecord

    per2 = SpectrumRecord(tweaked, per.lines, per.n_grid, per.fs)
    noise = estimate_noise_variance(per2)
    assert not noise.is_noiseless
    w = effective_weights(noise, per2)
    assert np.all(w == 1.0)


def test_differentiate_periodic_cosine():
    N, fs = 256, 100.0
    k = 9
    t = np.arange(2 * N)
    x = np.cos(2 * np.pi * k * t / N)
    rec = SignalRecord(x[None], fs, N)
    d = differentiate_periodic(rec)
    omega = 2 * np.pi * k * fs / N
    assert np.allclose(d.data[0], -omega * np.sin(2 * np.pi * k * t / N), atol=1e-9)


def test_average_periods():
    rec = SignalRecord(np.array([[1.0, 2.0, 3.0, 5.0]]), 1.0, 2)
    assert np.array_equal(average_periods(rec), [[2.0, 3.5]])


def test_empirical_frf_known_gain():
    spec = MultisineSpec(1.0, 20.0, 100.0, 512, 1.0, periods=2, rng_seed=1)
    u = generate_multisine(spec)
    y = SignalRecord(3.0 * u.data, u.fs, u.period_length)
    freqs, frf = empirical_frf(u, y, spec.excited_lines())
    assert np.allclose(frf, 3.0)
    assert freqs[0] == spec.excited_lines()[0] * 100.0 / 512
