"""Plot-ready tables derived from datasets and identified models.

Each builder returns plain arrays (and writes CSV through the CLI); the
companion ``plots`` module renders the same series to figure files.
Spectra follow the toolkit-wide 1/N DFT scaling.
"""
from __future__ import annotations

import csv

import numpy as np

from .optimize import MLProblem, residuals
from .signals import average_periods, dft_lines, empirical_frf

__all__ = [
    "error_spectra_series",
    "time_error_series",
    "frf_series",
    "write_csv",
]


def _model_period(model, u_rec, settle_periods):
    from .simulate import simulate_greybox
    from .signals import SignalRecord

    u_period = average_periods(u_rec)
    u = np.tile(u_period, settle_periods + 1)
    rec = simulate_greybox(model, SignalRecord(u, model.fs, u_period.shape[1]))
    return rec.data[:, -u_period.shape[1]:]


def error_spectra_series(u_rec, y_rec, lines, models, noise=None,
                         settle_periods=5, output=0):
    """Measured spectrum, per-model error spectra and the noise level.

    Parameters
    ----------
    u_rec, y_rec : SignalRecord
        Steady-state input and output records.
    lines : array_like of int
        Band to tabulate (typically the excited lines).
    models : dict name -> GreyBoxModel
        Each contributes an |error| column named ``<name>_error``.
    noise : NoiseModel, optional
        Adds a ``noise_level`` column (std of the averaged spectrum).

    Returns
    -------
    dict of column name -> ndarray, led by ``frequency_hz``.
    """
    lines = np.asarray(lines, dtype=int)
    spec = dft_lines(y_rec, lines)
    cols = {
        "frequency_hz": spec.frequencies,
        "measured": np.abs(spec.values[output]),
    }
    for name, model in models.items():
        problem = MLProblem(u_rec, spec, model, settle_periods=settle_periods)
        eps = residuals(model, problem)
        cols[f"{name}_error"] = np.abs(eps[output])
    if noise is not None:
        idx = {int(k): i for i, k in enumerate(noise.lines)}
        rows = [idx[int(k)] for k in lines]
        cols["noise_level"] = np.sqrt(noise.variance[rows, output])
    return cols


def time_error_series(u_rec, y_rec, models, settle_periods=5, output=0):
    """Measured period and per-model time-domain errors.

    The measured output is averaged to one period; each model is
    resimulated to steady state on the averaged input and subtracted.
    """
    y_period = average_periods(y_rec)[output]
    t = np.arange(y_period.size) / y_rec.fs
    cols = {"time_s": t, "measured": y_period}
    for name, model in models.items():
        ym = _model_period(model, u_rec, settle_periods)[output]
        cols[f"{name}_error"] = ym - y_period
    return cols


def frf_series(u_rec, y_rec, lines, models=(), output=0):
    """Empirical FRF on the excited band, plus model FRFs.

    Model columns evaluate the force-to-output entry of the extended
    transfer matrix on the same lines.
    """
    from .model import extended_frf

    freqs, frf = empirical_frf(u_rec, y_rec, lines)
    cols = {
        "frequency_hz": freqs,
        "measured_re": frf[output].real,
        "measured_im": frf[output].imag,
    }
    if isinstance(models, dict):
        items = models.items()
    else:
        items = models
    for name, model in items:
        he = extended_frf(model, lines, u_rec.period_length)[:, output, 0]
        cols[f"{name}_re"] = he.real
        cols[f"{name}_im"] = he.imag
    return cols


def write_csv(path, columns, comments=()):
    """Write named columns as CSV with leading comment lines."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    length = len(arrays[0])
    for k, arr in zip(names, arrays):
        if len(arr) != length:
            raise ValueError(f"column {k} has {len(arr)} rows, expected {length}")
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(length):
            writer.writerow([f"{arr[i]:.17g}" for arr in arrays])
