"""Periodic excitation design, DFT handling and output-noise estimation.

Signals are stored channel-major, ``(channels, P*N)``, where N is the
number of samples per period and P the period count.  All spectra use
the 1/N DFT scaling

    X(k) = (1/N) sum_t x(t) exp(-2j pi k t / N)

so a unit-amplitude cosine at bin k has X(k) = 0.5 regardless of N or
the number of averaged periods.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataFormatError

__all__ = [
    "MultisineSpec",
    "SignalRecord",
    "SpectrumRecord",
    "NoiseModel",
    "generate_multisine",
    "trim_transient",
    "dft_lines",
    "estimate_noise_variance",
    "average_periods",
    "differentiate_periodic",
    "empirical_frf",
    "add_output_noise",
]


@dataclass(frozen=True)
class MultisineSpec:
    """Design of a random-phase multisine excitation.

    The excited bins are every DFT line of the length-N grid whose
    frequency lies in [f_min, f_max], minus ``excluded_lines``; the DC
    bin is always excluded.  Phases are drawn i.i.d. uniform on
    [0, 2 pi) from a PCG64 generator seeded with ``rng_seed``, so the
    signal is reproducible across platforms.
    """

    f_min: float
    f_max: float
    fs: float
    samples_per_period: int
    rms_amplitude: float
    periods: int = 1
    excluded_lines: frozenset = field(default_factory=frozenset)
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.f_min < self.f_max:
            raise ValueError(f"need 0 <= f_min < f_max, got [{self.f_min}, {self.f_max}]")
        if self.f_max > self.fs / 2:
            raise ValueError(
                f"f_max {self.f_max} Hz exceeds the Nyquist frequency {self.fs / 2} Hz"
            )
        if self.periods < 1:
            raise ValueError("periods must be >= 1")
        if self.rms_amplitude <= 0:
            raise ValueError("rms_amplitude must be > 0")
        object.__setattr__(self, "excluded_lines", frozenset(int(k) for k in self.excluded_lines))
        if len(self.excited_lines()) == 0:
            raise ValueError("the excited line set is empty")

    def excited_lines(self):
        """Sorted excited bin indices."""
        N, fs = self.samples_per_period, self.fs
        k_lo = max(1, int(np.ceil(self.f_min * N / fs - 1e-9)))
        k_hi = int(np.floor(self.f_max * N / fs + 1e-9))
        lines = [k for k in range(k_lo, k_hi + 1) if k not in self.excluded_lines]
        return np.asarray(lines, dtype=int)


class SignalRecord:
    """Multichannel periodic time data.

    Parameters
    ----------
    data : ndarray, shape (channels, P*N)
    fs : float
        Sampling frequency in Hz.
    period_length : int
        Samples per period N; the record length must be a multiple.
    labels : sequence of str, optional
    warnings : tuple of str
        Diagnostics attached by producers (e.g. settling checks).
    """

    def __init__(self, data, fs, period_length, labels=None, warnings=()):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if fs <= 0:
            raise ValueError("fs must be > 0")
        if period_length < 1 or data.shape[1] % period_length:
            raise ValueError(
                f"record length {data.shape[1]} is not a multiple of the "
                f"period length {period_length}"
            )
        if labels is None:
            labels = tuple(f"ch{i}" for i in range(data.shape[0]))
        else:
            labels = tuple(str(s) for s in labels)
            if len(labels) != data.shape[0]:
                raise ValueError("one label per channel required")
        data.setflags(write=False)
        self.data = data
        self.fs = float(fs)
        self.period_length = int(period_length)
        self.labels = labels
        self.warnings = tuple(warnings)

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]

    @property
    def periods(self):
        return self.data.shape[1] // self.period_length

    def per_period(self):
        """View shaped (channels, P, N)."""
        return self.data.reshape(self.n_channels, self.periods, self.period_length)

    def channel(self, label):
        try:
            return self.data[self.labels.index(label)]
        except ValueError:
            raise KeyError(f"no channel named {label!r}") from None

    def select(self, labels):
        """Sub-record with the named channels, in the given order."""
        idx = [self.labels.index(s) for s in labels]
        return SignalRecord(
            self.data[idx], self.fs, self.period_length,
            labels=[self.labels[i] for i in idx], warnings=self.warnings,
        )

    def with_warnings(self, warnings):
        return SignalRecord(self.data, self.fs, self.period_length, self.labels, warnings)

    def __repr__(self):
        return (
            f"SignalRecord({self.n_channels} ch x {self.periods} periods x "
            f"{self.period_length} samples, fs={self.fs:g} Hz)"
        )


class SpectrumRecord:
    """DFT values at a subset of frequency lines.

    ``values`` has shape (channels, F) for averaged spectra or
    (P, channels, F) when each period is kept separate.
    """

    def __init__(self, values, lines, n_grid, fs):
        values = np.asarray(values, dtype=complex)
        lines = np.asarray(lines, dtype=int)
        if lines.ndim != 1 or np.any(np.diff(lines) <= 0):
            raise ValueError("line indices must be strictly increasing")
        if np.any(lines < 0) or np.any(lines >= n_grid / 2 + 1):
            raise ValueError(f"line indices must lie in [0, {n_grid // 2}]")
        if values.ndim not in (2, 3) or values.shape[-1] != lines.size:
            raise ValueError(
                f"values shape {values.shape} inconsistent with {lines.size} lines"
            )
        values.setflags(write=False)
        lines.setflags(write=False)
        self.values = values
        self.lines = lines
        self.n_grid = int(n_grid)
        self.fs = float(fs)

    @property
    def per_period(self):
        return self.values.ndim == 3

    @property
    def n_channels(self):
        return self.values.shape[-2]

    @property
    def frequencies(self):
        """Line frequencies in Hz."""
        return self.lines * self.fs / self.n_grid

    def averaged(self):
        if not self.per_period:
            return self
        return SpectrumRecord(self.values.mean(axis=0), self.lines, self.n_grid, self.fs)


@dataclass(frozen=True)
class NoiseModel:
    """Per-line, per-output variance of the averaged output spectrum.

    ``variance`` has shape (F, l).  It is the unbiased sample variance
    across periods divided by the period count, i.e. the variance that
    applies to the period-averaged spectrum.
    """

    variance: np.ndarray
    lines: np.ndarray
    n_grid: int
    fs: float

    def __post_init__(self):
        variance = np.asarray(self.variance, dtype=float)
        if np.any(variance < 0):
            raise ValueError("noise variances must be >= 0")
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "lines", np.asarray(self.lines, dtype=int))

    @property
    def is_noiseless(self):
        return bool(np.all(self.variance == 0.0))

    def weights(self):
        """ML weights 1/sigma, shape (l, F); all-ones when noiseless."""
        if self.is_noiseless:
            return np.ones((self.variance.shape[1], self.variance.shape[0]))
        if np.any(self.variance == 0.0):
            raise ValueError(
                "mixed zero and nonzero noise variances; cannot form weights"
            )
        return 1.0 / np.sqrt(self.variance.T)


def generate_multisine(spec):
    """Random-phase multisine signal matching a MultisineSpec.

    The one-period waveform is synthesised on the excited bins, scaled
    so the RMS over one period equals ``rms_amplitude`` exactly, and
    tiled ``periods`` times; the result is exactly periodic.
    """
    N = spec.samples_per_period
    lines = spec.excited_lines()
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=lines.size)
    half = np.zeros(N // 2 + 1, dtype=complex)
    half[lines] = 0.5 * N * np.exp(1j * phases)
    period = np.fft.irfft(half, n=N)
    rms = np.sqrt(np.mean(period**2))
    period *= spec.rms_amplitude / rms
    data = np.tile(period, spec.periods)[None, :]
    return SignalRecord(data, spec.fs, N, labels=("u0",))


def trim_transient(rec, discard):
    """Drop the first ``discard`` periods of a record."""
    if not 0 <= discard < rec.periods:
        raise ValueError(
            f"cannot discard {discard} of {rec.periods} periods"
        )
    if discard == 0:
        return rec
    data = rec.data[:, discard * rec.period_length:]
    return SignalRecord(data, rec.fs, rec.period_length, rec.labels, rec.warnings)


def dft_lines(rec, lines, averaging="coherent-average"):
    """Per-period DFT of a periodic record at selected lines.

    Parameters
    ----------
    rec : SignalRecord
    lines : array_like of int
        Bins on the length-N grid, strictly increasing, < N/2 + 1.
    averaging : {"coherent-average", "per-period"}
        Whether to average the per-period spectra coherently or return
        them separately.

    Returns
    -------
    SpectrumRecord
    """
    lines = np.asarray(lines, dtype=int)
    N = rec.period_length
    if lines.size and (lines.min() < 0 or lines.max() > N // 2):
        raise ValueError(f"line indices must lie in [0, {N // 2}]")
    blocks = rec.per_period()  # (C, P, N)
    spectra = np.fft.rfft(blocks, axis=2)[:, :, lines] / N  # (C, P, F)
    if averaging == "coherent-average":
        values = spectra.mean(axis=1)
    elif averaging == "per-period":
        values = np.moveaxis(spectra, 1, 0)  # (P, C, F)
    else:
        raise ValueError(f"unknown averaging mode {averaging!r}")
    return SpectrumRecord(values, lines, N, rec.fs)


def estimate_noise_variance(per_period_spectra):
    """Noise variance of the averaged spectrum from per-period spectra.

    Uses the unbiased sample variance across P >= 2 periods, divided by
    P so it applies to the coherently averaged spectrum.

    Returns
    -------
    NoiseModel
    """
    spec = per_period_spectra
    if not isinstance(spec, SpectrumRecord) or not spec.per_period:
        raise ValueError("per-period spectra required (use dft_lines(..., 'per-period'))")
    P = spec.values.shape[0]
    if P < 2:
        raise ValueError("at least 2 periods are needed to estimate a variance")
    mean = spec.values.mean(axis=0)
    dev = spec.values - mean
    sample_var = np.sum(dev.real**2 + dev.imag**2, axis=0) / (P - 1)
    variance = (sample_var / P).T  # (F, l)
    return NoiseModel(variance, spec.lines, spec.n_grid, spec.fs)


def effective_weights(noise, spectra, rel_tol=1e-10):
    """ML weights 1/sigma, or all-ones when the noise is negligible.

    Exactly periodic (noiseless) records still show machine-epsilon
    period-to-period scatter; inverting those variances would produce
    astronomically large weights.  The estimate counts as noiseless when
    the total estimated noise amplitude is below ``rel_tol`` times the
    averaged-spectrum amplitude.
    """
    values = spectra.averaged().values
    noise_rms = np.sqrt(np.mean(noise.variance))
    signal_rms = np.sqrt(np.mean(np.abs(values) ** 2))
    if noise_rms <= rel_tol * signal_rms:
        return np.ones_like(values, dtype=float)
    return noise.weights()


def average_periods(rec):
    """Mean period, shape (channels, N)."""
    return rec.per_period().mean(axis=1)


def differentiate_periodic(rec):
    """Time derivative of an exactly periodic record.

    Differentiates each period in the frequency domain (bin k is scaled
    by ``2j pi k fs / N`` on the band-limited spectrum, the Nyquist bin
    is zeroed), which is exact for band-limited periodic signals.
    """
    N = rec.period_length
    blocks = rec.per_period()
    spec = np.fft.rfft(blocks, axis=2)
    k = np.arange(spec.shape[2])
    omega = 2j * np.pi * k * rec.fs / N
    if N % 2 == 0:
        omega[-1] = 0.0  # derivative of the Nyquist component is ambiguous
    deriv = np.fft.irfft(spec * omega, n=N, axis=2)
    data = deriv.reshape(rec.n_channels, -1)
    labels = tuple(f"d_{s}" for s in rec.labels)
    return SignalRecord(data, rec.fs, N, labels=labels, warnings=rec.warnings)


def empirical_frf(u_rec, y_rec, lines):
    """Output/input spectral ratio at excited lines (single-input data).

    Returns
    -------
    freqs : ndarray, Hz
    frf : ndarray, shape (p, F), complex
    """
    if u_rec.n_channels != 1:
        raise ValueError("empirical FRFs are only defined here for single-input records")
    U = dft_lines(u_rec, lines).values[0]
    Y = dft_lines(y_rec, lines).values
    if np.any(np.abs(U) == 0.0):
        raise ValueError("input spectrum vanishes on a requested line")
    freqs = np.asarray(lines, dtype=float) * u_rec.fs / u_rec.period_length
    return freqs, Y / U


def add_output_noise(rec, snr_db, seed):
    """White Gaussian noise per channel at a prescribed SNR.

    The noise standard deviation per channel is the channel RMS divided
    by ``10**(snr_db/20)``.

    Returns
    -------
    noisy : SignalRecord
    sigma : ndarray, shape (channels,)
        The per-channel noise standard deviations actually applied.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    rms = np.sqrt(np.mean(rec.data**2, axis=1))
    sigma = rms / 10.0 ** (snr_db / 20.0)
    noisy = rec.data + sigma[:, None] * rng.standard_normal(rec.data.shape)
    return SignalRecord(noisy, rec.fs, rec.period_length, rec.labels, rec.warnings), sigma


def default_estimation_lines(basis, f_max, fs, n_grid, headroom=0.9):
    """Frequency lines to process during identification.

    Nonlinear basis signals of a band-limited response carry energy at
    harmonics, so the processed band extends to ``degree * f_max``
    capped at ``headroom * fs / 2``; DC is excluded.
    """
    degree = max(basis.max_degree, 1) if len(basis) else 1
    f_hi = min(degree * f_max, headroom * fs / 2.0)
    k_hi = int(np.floor(f_hi * n_grid / fs))
    if k_hi < 1:
        raise DataFormatError("estimation band is empty")
    return np.arange(1, k_hi + 1)
