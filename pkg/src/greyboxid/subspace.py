"""Frequency-domain subspace identification with nonlinear basis inputs.

The nonlinear basis signals, computed sample-wise from the measured
outputs, are appended to the physical input as extra measured channels.
A standard frequency-domain subspace realization then delivers a fully
nonlinear state-space model in one shot:

1. build block-Vandermonde data matrices W_r(k) = [Y; z_k Y; ...] and
   the analogous extended-input matrix over the processed lines,
2. project the output rows onto the orthogonal complement of the input
   rows (QR across lines, real/imaginary parts stacked),
3. SVD of the projected block, truncated at the requested order, gives
   the extended observability matrix; A follows from its shift
   invariance and C from its first block row,
4. the input-side matrices are the linear least-squares fit of the
   frequency-domain model equations over all processed lines, given
   (A, C).

The same projection supports stabilization diagrams: poles are
extracted at every candidate order from one SVD and flagged stable when
they repeat within tolerance at the next order down.
"""
from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import eval_basis
from .exceptions import NumericalError
from .model import GreyBoxModel, modal_parameters
from .signals import SignalRecord, SpectrumRecord, dft_lines, differentiate_periodic

__all__ = [
    "SubspaceConfig",
    "StabilizationDiagram",
    "build_extended_input_spectra",
    "fnsi_identify",
    "stabilization_diagram",
]


@dataclass(frozen=True)
class SubspaceConfig:
    """Realization parameters for the subspace estimator.

    ``block_rows`` r sets the depth of the extended observability
    matrix (r * outputs must exceed the largest order of interest);
    ``weighting`` selects per-line weights from a NoiseModel, when one
    is supplied.
    """

    order: int
    block_rows: int
    weighting: str = "none"
    freq_tol: float = 0.005
    damp_tol: float = 0.05

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.block_rows < self.order + 1:
            raise ValueError("block_rows must be at least order + 1")
        if self.weighting not in ("none", "noise-variance"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class PoleSample:
    """One pole in a stabilization diagram."""

    frequency: float
    damping: float
    frequency_stable: bool = False
    damping_stable: bool = False


@dataclass(frozen=True)
class StabilizationDiagram:
    """Pole tables per candidate order, with stability flags.

    ``entries`` maps each successfully processed order to its poles;
    orders that failed are recorded in ``failures``. ``singular_values``
    reports the SVD spectrum of the projected data matrix so order gaps
    can be judged by eye.
    """

    entries: dict
    singular_values: np.ndarray
    failures: dict = field(default_factory=dict)

    def orders(self):
        return sorted(self.entries)

    def rows(self):
        """Flat (order, frequency, damping, freq_stable, damp_stable) rows."""
        for order in self.orders():
            for pole in self.entries[order]:
                yield (order, pole.frequency, pole.damping,
                       pole.frequency_stable, pole.damping_stable)


def build_extended_input_spectra(u_rec, y_rec, basis, lines,
                                 averaging="coherent-average"):
    """Spectra of [u; g(y)] on the processed lines.

    The basis signals are evaluated sample-wise from the measured
    outputs over the whole record before transforming, so their
    harmonic content is captured; the processed line set should
    therefore cover the harmonic band of the basis, not only the
    excited band.  Velocity-dependent entries draw on a spectral
    derivative of the output record.

    Returns
    -------
    SpectrumRecord with m + s channels.
    """
    if u_rec.n_samples != y_rec.n_samples or u_rec.period_length != y_rec.period_length:
        raise ValueError("input and output records are not aligned")
    if abs(u_rec.fs - y_rec.fs) > 1e-9 * y_rec.fs:
        raise ValueError("input and output records have different sampling rates")
    if len(basis):
        y_dot = differentiate_periodic(y_rec).data if basis.any_velocity else None
        g = eval_basis(basis, y_rec.data, y_dot)
        data = np.vstack([u_rec.data, g])
        labels = u_rec.labels + tuple(f"g{a}" for a in range(len(basis)))
    else:
        data = u_rec.data
        labels = u_rec.labels
    rec = SignalRecord(data, u_rec.fs, u_rec.period_length, labels=labels)
    return dft_lines(rec, lines, averaging)


def _block_vandermonde(values, zk, r):
    """Stack r blocks [X; z X; ...; z^(r-1) X] -> (r*c, F)."""
    c, F = values.shape
    powers = zk[None, :] ** np.arange(r)[:, None]  # (r, F)
    return (powers[:, None, :] * values[None, :, :]).reshape(r * c, F)


def _projected_svd(ext_spec, y_spec, r, line_weights=None):
    """QR-based projection of output rows past the input rows, then SVD."""
    U = ext_spec.values
    Y = y_spec.values
    if U.ndim != 2 or Y.ndim != 2:
        raise ValueError("averaged spectra required (not per-period)")
    if not np.array_equal(ext_spec.lines, y_spec.lines):
        raise ValueError("extended-input and output spectra use different lines")
    F = U.shape[1]
    mu, p = U.shape[0], Y.shape[0]
    if 2 * F < r * (mu + p):
        raise NumericalError(
            f"only {F} processed lines for {r * (mu + p)} block rows; "
            "reduce block_rows or enlarge the line set"
        )
    zk = np.exp(2j * np.pi * y_spec.lines / y_spec.n_grid)
    Um = _block_vandermonde(U, zk, r)
    Ym = _block_vandermonde(Y, zk, r)
    if line_weights is not None:
        Um = Um * line_weights[None, :]
        Ym = Ym * line_weights[None, :]
    Z = np.empty((r * (mu + p), 2 * F))
    Z[: r * mu, :F] = Um.real
    Z[: r * mu, F:] = Um.imag
    Z[r * mu:, :F] = Ym.real
    Z[r * mu:, F:] = Ym.imag
    R = np.linalg.qr(Z.T, mode="r")
    RT = R.T
    RT22 = RT[-r * p:, -r * p:]
    Un, sv, _ = np.linalg.svd(RT22)
    return Un, sv


def _shift_realization(Un, order, p):
    """A and C from the truncated observability estimate."""
    if order >= Un.shape[1]:
        raise NumericalError(f"order {order} exceeds the projected rank {Un.shape[1]}")
    Or = Un[:, :order]
    top, bottom = Or[:-p, :], Or[p:, :]
    A, _, rank, _ = np.linalg.lstsq(top, bottom, rcond=None)
    if rank < order:
        raise NumericalError(
            f"shift-invariance solve is rank deficient ({rank} < {order}); "
            "the order is too high for these data"
        )
    return A, Or[:p, :].copy()


def _fit_input_matrices(A, C, ext_spec, y_spec, weights=None):
    """Least-squares (bbar, dbar) given (A, C) over all processed lines."""
    U = ext_spec.values  # (mu, F)
    Y = y_spec.values    # (p, F)
    mu, F = U.shape
    p, n = C.shape
    zk = np.exp(2j * np.pi * y_spec.lines / y_spec.n_grid)
    lhs = zk[:, None, None] * np.eye(n) - A
    Tk = np.linalg.solve(lhs, np.broadcast_to(np.eye(n), (F, n, n)))
    Tk = C[None] @ Tk  # (F, p, n)
    # per line: Y(k) = Tk bbar U(k) + dbar U(k); vectorize the unknowns
    Ut = U.T  # (F, mu)
    design_b = np.einsum("fu,fpn->fpun", Ut, Tk).reshape(F, p, mu * n)
    design_d = np.einsum("fu,pq->fpuq", Ut, np.eye(p)).reshape(F, p, mu * p)
    design = np.concatenate([design_b, design_d], axis=2)  # (F, p, npar)
    rhs = Y.T[:, :, None]  # (F, p, 1)
    if weights is not None:
        design = design * weights.T[:, :, None]
        rhs = rhs * weights.T[:, :, None]
    npar = design.shape[2]
    design = design.reshape(F * p, npar)
    rhs = rhs.reshape(F * p)
    design_r = np.vstack([design.real, design.imag])
    rhs_r = np.concatenate([rhs.real, rhs.imag])
    sol, _, rank, _ = np.linalg.lstsq(design_r, rhs_r, rcond=None)
    if rank < npar:
        raise NumericalError(
            "input-matrix least squares is rank deficient; the extended "
            "input spectra do not excite all parameters"
        )
    bbar = sol[: mu * n].reshape(mu, n).T
    dbar = sol[mu * n:].reshape(mu, p).T
    return bbar, dbar


def _line_weights(noise, lines):
    if noise is None:
        return None, None
    idx = {int(k): i for i, k in enumerate(noise.lines)}
    try:
        rows = [idx[int(k)] for k in lines]
    except KeyError as exc:
        raise ValueError(f"noise model lacks line {exc}") from None
    var = noise.variance[rows]  # (F, p)
    if np.all(var == 0.0):
        return None, None
    if np.any(var == 0.0):
        raise ValueError("mixed zero and nonzero noise variances")
    w = 1.0 / np.sqrt(var)  # (F, p)
    scalar = w.mean(axis=1)
    scalar = scalar / scalar.mean()  # keep the projection well scaled
    return scalar, w.T  # per-line scalar, per-output (p, F)


def fnsi_identify(ext_spec, y_spec, cfg, basis, n_inputs, noise=None):
    """Estimate a grey-box model from extended-input and output spectra.

    Parameters
    ----------
    ext_spec : SpectrumRecord
        Spectra of [u; g] on the processed lines (coherent-averaged).
    y_spec : SpectrumRecord
        Output spectra on the same lines.
    cfg : SubspaceConfig
    basis : BasisFunctionSet
        Split of the extended input into m physical and s basis channels.
    n_inputs : int
        Number of physical input channels m.
    noise : NoiseModel, optional
        Enables per-line weighting when ``cfg.weighting`` asks for it.

    Returns
    -------
    GreyBoxModel
    """
    mu = ext_spec.n_channels
    if mu != n_inputs + len(basis):
        raise ValueError(
            f"extended spectra have {mu} channels, expected "
            f"{n_inputs} inputs + {len(basis)} basis signals"
        )
    ext_spec = ext_spec.averaged()
    y_spec = y_spec.averaged()
    p = y_spec.n_channels
    r = cfg.block_rows
    if r * p <= cfg.order:
        raise ValueError("block_rows * outputs must exceed the model order")
    F = ext_spec.values.shape[1]
    if F < r * mu:
        _warnings.warn(
            f"only {F} processed lines for {r * mu} extended-input block rows; "
            "the projection may be poorly determined",
            stacklevel=2,
        )
    scalar_w = full_w = None
    if cfg.weighting == "noise-variance":
        scalar_w, full_w = _line_weights(noise, y_spec.lines)
    Un, _ = _projected_svd(ext_spec, y_spec, r, scalar_w)
    A, C = _shift_realization(Un, cfg.order, p)
    bbar, dbar = _fit_input_matrices(A, C, ext_spec, y_spec, full_w)
    m = n_inputs
    return GreyBoxModel(
        A, bbar[:, :m], C, dbar[:, :m], bbar[:, m:], dbar[:, m:],
        basis, 1.0 / y_spec.fs,
    )


def _flag_poles(current, previous, freq_tol, damp_tol):
    flagged = []
    for f, z in current:
        if previous:
            fp, zp = min(previous, key=lambda q: abs(q[0] - f))
            f_ok = abs(f - fp) <= freq_tol * abs(fp) if fp else False
            z_ok = f_ok and zp != 0 and abs(z - zp) <= damp_tol * abs(zp)
        else:
            f_ok = z_ok = False
        flagged.append(PoleSample(f, z, f_ok, z_ok))
    return flagged


def stabilization_diagram(ext_spec, y_spec, order_range, cfg, noise=None):
    """Pole tables over a range of candidate model orders.

    All orders share one projection/SVD at ``cfg.block_rows``; the
    realization is truncated per order and converted to modal
    parameters.  A pole is frequency-stable when it moves less than
    ``cfg.freq_tol`` (relative) from the nearest pole at the previous
    order, and damping-stable when additionally the damping ratio moves
    less than ``cfg.damp_tol``.  Failures at individual orders are
    recorded as gaps.
    """
    ext_spec = ext_spec.averaged()
    y_spec = y_spec.averaged()
    p = y_spec.n_channels
    orders = sorted(int(n) for n in order_range)
    if not orders:
        raise ValueError("empty order range")
    if orders[-1] >= cfg.block_rows * p:
        raise ValueError(
            f"largest order {orders[-1]} needs block_rows > {orders[-1] // p}"
        )
    scalar_w = None
    if cfg.weighting == "noise-variance":
        scalar_w, _ = _line_weights(noise, y_spec.lines)
    Un, sv = _projected_svd(ext_spec, y_spec, cfg.block_rows, scalar_w)
    T = 1.0 / y_spec.fs
    entries, failures = {}, {}
    previous = None
    for order in orders:
        try:
            A, _ = _shift_realization(Un, order, p)
            modal = modal_parameters(A, T)
            poles = list(zip(modal.frequencies, modal.damping_ratios))
        except NumericalError as exc:
            failures[order] = str(exc)
            previous = None
            continue
        entries[order] = _flag_poles(poles, previous, cfg.freq_tol, cfg.damp_tol)
        previous = poles
    return StabilizationDiagram(entries, sv, failures)
