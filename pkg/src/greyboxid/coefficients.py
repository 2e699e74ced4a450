"""Physical nonlinear coefficients from identified state-space models.

A localized nonlinear restoring force enters the equations of motion at
the same location as a physical force, so the transfer function from a
basis signal g_a to the collocated output equals minus the coefficient
times the force-to-output transfer.  Dividing the two columns of the
extended transfer matrix therefore recovers the coefficient per
frequency line:

    c_a(k) = - H[out, g_a](k) / H[out, force](k)

For an exact model the series is real and frequency-flat; frequency
variation and imaginary content measure model error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import extended_frf

__all__ = [
    "NonlinearCoefficientEstimate",
    "convert_coefficients",
    "coefficient_summary",
]

DIVISION_THRESHOLD = 1e-8


@dataclass(frozen=True)
class NonlinearCoefficientEstimate:
    """Frequency-dependent complex estimate of one nonlinear coefficient.

    ``included`` masks lines where the force-to-output transfer was too
    small for a stable division; excluded lines keep their raw values
    but are left out of the summaries.
    """

    basis_index: int
    series: np.ndarray
    lines: np.ndarray
    frequencies: np.ndarray
    included: np.ndarray
    units: str = ""

    def __post_init__(self):
        for name in ("series", "lines", "frequencies", "included"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (len(self.lines),):
                raise ValueError(f"{name} must have one entry per line")
            object.__setattr__(self, name, arr)

    @property
    def n_excluded(self):
        return int(np.sum(~self.included))

    def mean_real(self):
        return coefficient_summary(self)["mean_real"]

    def log10_ratio(self):
        return coefficient_summary(self)["log10_ratio"]


def convert_coefficients(model, lines, n_grid, force_input_column=0,
                         nl_location_output=0, threshold=DIVISION_THRESHOLD,
                         units=()):
    """Per-line physical coefficients for every basis function.

    Parameters
    ----------
    model : GreyBoxModel
    lines : array_like of int
        Frequency lines of the length-``n_grid`` DFT grid to evaluate.
    force_input_column : int
        Input column collocated with the nonlinearity.
    nl_location_output : int
        Output channel at the nonlinearity location.
    threshold : float
        Lines where |H[out, force]| falls below ``threshold`` times its
        maximum over the set are excluded from the summaries.
    units : sequence of str, optional
        One annotation per basis function.

    Returns
    -------
    list of NonlinearCoefficientEstimate
    """
    if not 0 <= force_input_column < model.m:
        raise ValueError(f"force input column {force_input_column} out of range")
    if not 0 <= nl_location_output < model.p:
        raise ValueError(f"output index {nl_location_output} out of range")
    lines = np.asarray(lines, dtype=int)
    he = extended_frf(model, lines, n_grid)
    denom = he[:, nl_location_output, force_input_column]
    included = np.abs(denom) >= threshold * np.max(np.abs(denom))
    safe = np.where(included, denom, 1.0)
    freqs = lines * model.fs / n_grid
    out = []
    for a in range(model.s):
        series = -he[:, nl_location_output, model.m + a] / safe
        series = np.where(included, series, np.nan + 0j)
        out.append(
            NonlinearCoefficientEstimate(
                basis_index=a,
                series=series,
                lines=lines,
                frequencies=freqs,
                included=included,
                units=units[a] if a < len(units) else "",
            )
        )
    return out


def coefficient_summary(est):
    """Frequency-averaged quality figures of one coefficient series.

    ``mean_real`` averages the real part over the included lines;
    ``log10_ratio`` is log10(|mean_real| / mean |imaginary part|), so
    larger values mean a more nearly real (better) estimate.
    """
    keep = est.included
    if not np.any(keep):
        raise ValueError("every line of the series is excluded")
    series = est.series[keep]
    mean_real = float(np.mean(series.real))
    mean_imag = float(np.mean(np.abs(series.imag)))
    if mean_imag == 0.0:
        ratio = np.inf
    else:
        ratio = float(np.log10(abs(mean_real) / mean_imag))
    return {"mean_real": mean_real, "log10_ratio": ratio}
