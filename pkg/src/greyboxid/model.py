"""Discrete-time grey-box state-space models.

The model is the sextuple (A, B, C, D, E, F) together with a basis set:

    x(t+1) = A x(t) + B u(t) + E g(y_nl(t))
    y(t)   = C x(t) + D u(t) + F g(y_nl(t))

E and F multiply the nonlinear basis signals, so the concatenations
``bbar = [B E]`` and ``dbar = [D F]`` turn the model into a linear
structure driven by the extended input [u; g].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisFunctionSet
from .exceptions import NumericalError

__all__ = [
    "GreyBoxModel",
    "ParameterLayout",
    "ParameterVector",
    "ModalParameters",
    "pack_parameters",
    "unpack_parameters",
    "extended_frf",
    "modal_parameters",
]


def _matrix(x, name, shape):
    x = np.array(x, dtype=float)
    if x.ndim != 2 or x.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {x.shape}")
    x.setflags(write=False)
    return x


class GreyBoxModel:
    """Immutable discrete-time state-space model with output nonlinearities.

    Parameters
    ----------
    A, B, C, D : array_like
        Linear state, input, output and feedthrough matrices with shapes
        (n, n), (n, m), (p, n), (p, m).
    E, F : array_like
        Coefficients of the nonlinear basis signals in the state and
        output equations, shapes (n, s) and (p, s).
    basis : BasisFunctionSet
        The s basis functions; referenced channels must exist among the
        p outputs.
    sample_period : float
        Sampling period in seconds.
    """

    def __init__(self, A, B, C, D, E, F, basis, sample_period):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.array(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got shape {B.shape}")
        m = B.shape[1]
        C = np.array(C, dtype=float)
        if C.ndim != 2 or C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got shape {C.shape}")
        p = C.shape[0]
        if not isinstance(basis, BasisFunctionSet):
            basis = BasisFunctionSet(basis)
        s = len(basis)
        if basis.max_channel() >= p:
            raise ValueError(
                f"basis references channel {basis.max_channel()} but the "
                f"model has {p} outputs"
            )
        if sample_period <= 0:
            raise ValueError(f"sample_period must be > 0, got {sample_period}")
        A.setflags(write=False)
        B.setflags(write=False)
        C.setflags(write=False)
        self.A, self.B, self.C = A, B, C
        self.D = _matrix(D, "D", (p, m))
        self.E = _matrix(E, "E", (n, s))
        self.F = _matrix(F, "F", (p, s))
        self.basis = basis
        self.sample_period = float(sample_period)

    @property
    def n(self):
        """Model order (state dimension)."""
        return self.A.shape[0]

    @property
    def m(self):
        """Number of physical inputs."""
        return self.B.shape[1]

    @property
    def p(self):
        """Number of outputs."""
        return self.C.shape[0]

    @property
    def s(self):
        """Number of nonlinear basis functions."""
        return self.E.shape[1]

    @property
    def fs(self):
        return 1.0 / self.sample_period

    @property
    def bbar(self):
        """Concatenated input matrix [B E], shape (n, m+s)."""
        return np.hstack([self.B, self.E])

    @property
    def dbar(self):
        """Concatenated feedthrough [D F], shape (p, m+s)."""
        return np.hstack([self.D, self.F])

    def with_matrices(self, A=None, B=None, C=None, D=None, E=None, F=None):
        """Copy of the model with some matrices replaced."""
        return GreyBoxModel(
            self.A if A is None else A,
            self.B if B is None else B,
            self.C if C is None else C,
            self.D if D is None else D,
            self.E if E is None else E,
            self.F if F is None else F,
            self.basis,
            self.sample_period,
        )

    def similarity_transform(self, T):
        """Equivalent model in the state basis x' = T x."""
        T = np.asarray(T, dtype=float)
        Tinv = np.linalg.inv(T)
        return self.with_matrices(
            A=T @ self.A @ Tinv,
            B=T @ self.B,
            C=self.C @ Tinv,
            E=T @ self.E,
        )

    def __eq__(self, other):
        if not isinstance(other, GreyBoxModel):
            return NotImplemented
        return (
            self.sample_period == other.sample_period
            and self.basis == other.basis
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in "ABCDEF"
            )
        )

    def __repr__(self):
        return (
            f"GreyBoxModel(n={self.n}, m={self.m}, p={self.p}, s={self.s}, "
            f"fs={self.fs:g} Hz)"
        )


@dataclass(frozen=True)
class ParameterLayout:
    """Column-stacked parameter layout: vec(A), vec(bbar), vec(C), vec(dbar)."""

    n: int
    m: int
    p: int
    s: int

    @classmethod
    def of(cls, model):
        return cls(model.n, model.m, model.p, model.s)

    @property
    def me(self):
        """Extended input count m + s."""
        return self.m + self.s

    @property
    def size(self):
        n, p, me = self.n, self.p, self.me
        return n * n + n * me + p * n + p * me

    def slices(self):
        n, p, me = self.n, self.p, self.me
        i0 = n * n
        i1 = i0 + n * me
        i2 = i1 + p * n
        return {
            "A": slice(0, i0),
            "bbar": slice(i0, i1),
            "C": slice(i1, i2),
            "dbar": slice(i2, i2 + p * me),
        }

    def owner(self, index):
        """(matrix name, row, column) owning flat entry ``index``."""
        for name, sl in self.slices().items():
            if sl.start <= index < sl.stop:
                rows = self.n if name in ("A", "bbar") else self.p
                off = index - sl.start
                return name, off % rows, off // rows
        raise IndexError(f"index {index} outside layout of size {self.size}")


@dataclass(frozen=True)
class ParameterVector:
    """Flat model parameters plus the layout that owns each entry."""

    values: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.layout.size:
            raise ValueError(
                f"parameter vector must have length {self.layout.size}, "
                f"got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def pack_parameters(model):
    """Stack (A, [B E], C, [D F]) column-wise into a ParameterVector."""
    values = np.concatenate(
        [
            model.A.ravel(order="F"),
            model.bbar.ravel(order="F"),
            model.C.ravel(order="F"),
            model.dbar.ravel(order="F"),
        ]
    )
    return ParameterVector(values, ParameterLayout.of(model))


def unpack_parameters(theta, like):
    """Rebuild a GreyBoxModel from packed parameters.

    Parameters
    ----------
    theta : ParameterVector or ndarray
    like : GreyBoxModel
        Supplies dimensions, basis and sample period.
    """
    layout = ParameterLayout.of(like)
    values = theta.values if isinstance(theta, ParameterVector) else np.asarray(theta, float)
    if values.shape != (layout.size,):
        raise ValueError(
            f"parameter vector of length {values.size} does not match "
            f"layout size {layout.size}"
        )
    sl = layout.slices()
    n, m, p, me = layout.n, layout.m, layout.p, layout.me
    A = values[sl["A"]].reshape(n, n, order="F")
    bbar = values[sl["bbar"]].reshape(n, me, order="F")
    C = values[sl["C"]].reshape(p, n, order="F")
    dbar = values[sl["dbar"]].reshape(p, me, order="F")
    return GreyBoxModel(
        A, bbar[:, :m], C, dbar[:, :m], bbar[:, m:], dbar[:, m:],
        like.basis, like.sample_period,
    )


def extended_frf(model, lines, n_grid):
    """Transfer matrices from the extended input to the outputs.

    Evaluates ``C (z_k I - A)^-1 [B E] + [D F]`` at the DFT grid points
    ``z_k = exp(2j pi k / n_grid)``.

    Parameters
    ----------
    model : GreyBoxModel
    lines : array_like of int
        Frequency-line indices on the length-``n_grid`` DFT grid.
    n_grid : int
        Samples per period defining the grid.

    Returns
    -------
    ndarray, shape (len(lines), p, m+s), complex
    """
    lines = np.asarray(lines, dtype=int)
    zk = np.exp(2j * np.pi * lines / n_grid)
    n = model.n
    lhs = zk[:, None, None] * np.eye(n) - model.A
    try:
        sol = np.linalg.solve(lhs, np.broadcast_to(model.bbar, (len(lines), n, model.m + model.s)))
    except np.linalg.LinAlgError:
        for k, line in enumerate(lines):
            if abs(np.linalg.det(lhs[k])) == 0.0:
                raise NumericalError(
                    f"(z I - A) is singular at frequency line {line}"
                ) from None
        raise
    return model.C @ sol + model.dbar


@dataclass(frozen=True)
class ModalParameters:
    """Oscillatory modes of a model, expressed in continuous time.

    ``poles`` holds one continuous-time pole per conjugate pair (positive
    imaginary part); ``real_poles`` collects non-oscillatory decay rates.
    ``notes`` flags eigenvalues that could not be mapped cleanly.
    """

    frequencies: np.ndarray
    damping_ratios: np.ndarray
    poles: np.ndarray
    real_poles: np.ndarray
    notes: tuple = ()

    def __len__(self):
        return len(self.frequencies)


def modal_parameters(model_or_A, sample_period=None):
    """Natural frequencies (Hz) and damping ratios from the state matrix.

    Discrete eigenvalues are mapped to continuous time through
    ``s = log(lambda) / T``; a mode then has ``f = |s| / 2 pi`` and
    ``zeta = -Re(s) / |s|``.  Real negative eigenvalues have no principal
    continuous counterpart and are flagged instead of converted.
    """
    if sample_period is None:
        A, T = model_or_A.A, model_or_A.sample_period
    else:
        A, T = np.asarray(model_or_A, dtype=float), float(sample_period)
    lam, vec = np.linalg.eig(A)
    notes = []
    if np.any(np.abs(lam) < 1e-300):
        raise NumericalError("A has a zero eigenvalue; the log map is undefined")
    cond = np.linalg.cond(vec)
    if cond > 1e12:
        notes.append(f"eigenvector matrix badly conditioned (cond={cond:.2e}); A may be defective")
    freqs, zetas, poles, real_poles = [], [], [], []
    for lv in lam:
        if abs(lv.imag) <= 1e-14 * max(1.0, abs(lv.real)):
            if lv.real > 0:
                real_poles.append(np.log(lv.real) / T)
            else:
                notes.append(
                    f"negative real eigenvalue {lv.real:.6g} has no principal continuous-time map"
                )
            continue
        if lv.imag < 0:
            continue  # keep one pole per conjugate pair
        s = np.log(lv) / T
        mag = abs(s)
        freqs.append(mag / (2 * np.pi))
        zetas.append(-s.real / mag)
        poles.append(s)
    order = np.argsort(freqs) if freqs else []
    return ModalParameters(
        frequencies=np.asarray(freqs, dtype=float)[order],
        damping_ratios=np.asarray(zetas, dtype=float)[order],
        poles=np.asarray(poles, dtype=complex)[order],
        real_poles=np.asarray(real_poles, dtype=float),
        notes=tuple(notes),
    )
