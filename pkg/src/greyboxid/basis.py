"""Monomial basis functions of measured outputs.

Localized nonlinearities are described by a small set of monomials in
selected output channels and, optionally, their time derivatives.  The
basis evaluates sample-wise, and every entry has a closed-form partial
derivative with respect to the outputs, which the identification
routines rely on.
"""
from __future__ import annotations

import re

import numpy as np

__all__ = ["Monomial", "BasisFunctionSet", "eval_basis", "eval_basis_derivative"]

_FACTOR_RE = re.compile(r"\(\s*(\d+)\s*,\s*([01])\s*,\s*(\d+)\s*\)")


class Monomial:
    """Product of integer powers of output samples and/or their derivatives.

    Parameters
    ----------
    factors : iterable of (channel, order, exponent)
        ``channel`` is an output-channel index, ``order`` is 0 for the
        sample itself and 1 for its time derivative, ``exponent`` >= 1.
    """

    __slots__ = ("factors",)

    def __init__(self, factors):
        factors = tuple((int(c), int(d), int(e)) for c, d, e in factors)
        if not factors:
            raise ValueError("a monomial needs at least one factor")
        for c, d, e in factors:
            if c < 0:
                raise ValueError(f"negative channel index {c}")
            if d not in (0, 1):
                raise ValueError(f"derivative order must be 0 or 1, got {d}")
            if e < 1:
                raise ValueError(f"exponent must be >= 1, got {e}")
        self.factors = factors

    @property
    def degree(self):
        return sum(e for _, _, e in self.factors)

    @property
    def uses_velocity(self):
        return any(d == 1 for _, d, _ in self.factors)

    def channels(self):
        """Set of referenced channel indices."""
        return {c for c, _, _ in self.factors}

    def max_channel(self):
        return max(c for c, _, _ in self.factors)

    def to_text(self):
        return "*".join(f"({c},{d},{e})" for c, d, e in self.factors)

    @classmethod
    def from_text(cls, text):
        """Parse ``(ch,order,exp)`` triples joined by ``*``."""
        triples = _FACTOR_RE.findall(text.strip())
        stripped = _FACTOR_RE.sub("", text).replace("*", "").strip()
        if not triples or stripped:
            raise ValueError(f"cannot parse monomial descriptor {text!r}")
        return cls((int(c), int(d), int(e)) for c, d, e in triples)

    def __eq__(self, other):
        return isinstance(other, Monomial) and self.factors == other.factors

    def __hash__(self):
        return hash(self.factors)

    def __repr__(self):
        return f"Monomial({self.to_text()!r})"


class BasisFunctionSet:
    """Ordered collection of monomial basis functions.

    The set records which output channels enter the nonlinearities and
    whether velocities (channel derivatives) are required.  Entries must
    have total degree >= 2; degree-1 terms belong to the linear part of
    a model.
    """

    __slots__ = ("entries", "nl_output_channels")

    def __init__(self, entries, nl_output_channels=None):
        entries = tuple(
            e if isinstance(e, Monomial) else Monomial(e) for e in entries
        )
        for e in entries:
            if e.degree < 2:
                raise ValueError(
                    f"basis entry {e!r} has degree {e.degree}; "
                    "degree-1 terms belong to the linear model part"
                )
        referenced = sorted(set().union(*(e.channels() for e in entries))) if entries else []
        if nl_output_channels is None:
            nl_output_channels = referenced
        else:
            nl_output_channels = sorted(int(c) for c in nl_output_channels)
            missing = set(referenced) - set(nl_output_channels)
            if missing:
                raise ValueError(
                    f"entries reference channels {sorted(missing)} outside "
                    f"nl_output_channels {nl_output_channels}"
                )
        self.entries = entries
        self.nl_output_channels = tuple(nl_output_channels)

    @property
    def uses_velocity(self):
        """Per-entry flags marking dependence on output derivatives."""
        return tuple(e.uses_velocity for e in self.entries)

    @property
    def any_velocity(self):
        return any(self.uses_velocity)

    @property
    def max_degree(self):
        return max((e.degree for e in self.entries), default=1)

    def max_channel(self):
        return max((e.max_channel() for e in self.entries), default=-1)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return (
            isinstance(other, BasisFunctionSet)
            and self.entries == other.entries
            and self.nl_output_channels == other.nl_output_channels
        )

    def to_text(self):
        return " ; ".join(e.to_text() for e in self.entries)

    @classmethod
    def from_text(cls, text):
        text = text.strip()
        if not text:
            return cls(())
        return cls(Monomial.from_text(part) for part in text.split(";"))

    def __repr__(self):
        return f"BasisFunctionSet({self.to_text()!r})"


def _as_channel_array(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[:, None], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"{name} must be 1-D or 2-D, got shape {x.shape}")


def _check_inputs(basis, y, y_dot):
    yv, single = _as_channel_array(y, "y")
    if basis.any_velocity:
        if y_dot is None:
            raise ValueError("basis depends on output derivatives but y_dot is missing")
        yd, _ = _as_channel_array(y_dot, "y_dot")
        if yd.shape != yv.shape:
            raise ValueError(f"y_dot shape {yd.shape} does not match y shape {yv.shape}")
    else:
        yd = None
    if basis.max_channel() >= yv.shape[0]:
        raise ValueError(
            f"basis references channel {basis.max_channel()} but y has "
            f"{yv.shape[0]} channels"
        )
    return yv, yd, single


def eval_basis(basis, y, y_dot=None):
    """Evaluate all basis functions at output samples.

    Parameters
    ----------
    basis : BasisFunctionSet
    y : ndarray, shape (l,) or (l, T)
        Output sample(s), channel-major.
    y_dot : ndarray, optional
        Output-derivative samples; required iff the basis uses them.

    Returns
    -------
    ndarray, shape (s,) or (s, T)
    """
    yv, yd, single = _check_inputs(basis, y, y_dot)
    out = np.empty((len(basis), yv.shape[1]))
    for a, mono in enumerate(basis.entries):
        acc = np.ones(yv.shape[1])
        for c, d, e in mono.factors:
            src = yv if d == 0 else yd
            acc = acc * src[c] ** e
        out[a] = acc
    return out[:, 0] if single else out


def eval_basis_derivative(basis, y, y_dot=None):
    """Partial derivatives of the basis functions w.r.t. the outputs.

    Entry ``(a, j)`` is the derivative of basis function ``a`` with
    respect to output channel ``j``; derivative-order-1 factors are
    treated as independent signals (their sensitivity to ``y`` is not
    chained here).

    Returns
    -------
    ndarray, shape (s, l) or (s, l, T)
    """
    yv, yd, single = _check_inputs(basis, y, y_dot)
    l, T = yv.shape
    der = np.zeros((len(basis), l, T))
    for a, mono in enumerate(basis.entries):
        for k, (c, d, e) in enumerate(mono.factors):
            if d != 0:
                continue
            term = float(e) * yv[c] ** (e - 1)
            for kk, (c2, d2, e2) in enumerate(mono.factors):
                if kk == k:
                    continue
                src = yv if d2 == 0 else yd
                term = term * src[c2] ** e2
            der[a, c] += term
    return der[:, :, 0] if single else der
