"""Time-domain simulation of mechanical systems and grey-box models.

Ground-truth data come from integrating Newton's law with localized
nonlinear restoring forces using fixed-step RK4 at an oversampled rate;
grey-box models are stepped directly at the sampling rate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import BasisFunctionSet, Monomial
from .exceptions import ConvergenceFailure, SimulationDivergence
from .model import GreyBoxModel
from .signals import SignalRecord, generate_multisine, trim_transient

__all__ = [
    "MechanicalSystemSpec",
    "NonlinearElement",
    "IntegratorConfig",
    "simulate_newton",
    "simulate_greybox",
    "steady_state_response",
    "discretize_zoh",
    "greybox_from_mechanical",
]

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class NonlinearElement:
    """One localized restoring-force term c * g(q_nl, qdot_nl) * load.

    ``monomial`` references degrees of freedom (not output channels):
    factor (d, 0, e) is q_d**e and (d, 1, e) is qdot_d**e.  ``load``
    marks the equations the force enters, one entry per dof.
    """

    coefficient: float
    monomial: Monomial
    load: np.ndarray

    def __post_init__(self):
        load = np.asarray(self.load, dtype=float).reshape(-1)
        load.setflags(write=False)
        object.__setattr__(self, "load", load)
        if not isinstance(self.monomial, Monomial):
            object.__setattr__(self, "monomial", Monomial(self.monomial))


class MechanicalSystemSpec:
    """Second-order mechanical system with localized nonlinearities.

        M qdd + Cv qd + K q + sum_a c_a g_a(q_nl, qd_nl) load_a = S p(t)

    Parameters
    ----------
    mass, damping, stiffness : array_like, shape (n_p, n_p)
        M, Cv and K; M and K must be symmetric and M invertible.
    nonlinear_elements : sequence of NonlinearElement
    input_matrix : array_like, shape (n_p, m)
        Maps the m external forces onto the equations.
    outputs : sequence of (kind, dof)
        Measured channels; ``kind`` is "disp" or "vel".
    """

    def __init__(self, mass, damping, stiffness, nonlinear_elements=(),
                 input_matrix=None, outputs=None):
        M = np.atleast_2d(np.asarray(mass, dtype=float))
        Cv = np.atleast_2d(np.asarray(damping, dtype=float))
        K = np.atleast_2d(np.asarray(stiffness, dtype=float))
        n = M.shape[0]
        for name, mat in (("mass", M), ("damping", Cv), ("stiffness", K)):
            if mat.shape != (n, n):
                raise ValueError(f"{name} matrix must be {n}x{n}, got {mat.shape}")
        for name, mat in (("mass", M), ("stiffness", K)):
            if not np.allclose(mat, mat.T, rtol=1e-12, atol=0.0):
                raise ValueError(f"{name} matrix must be symmetric")
        try:
            Minv = np.linalg.inv(M)
        except np.linalg.LinAlgError:
            raise ValueError("mass matrix is singular") from None
        if input_matrix is None:
            input_matrix = np.eye(n)
        S = np.atleast_2d(np.asarray(input_matrix, dtype=float))
        if S.shape[0] != n:
            raise ValueError(f"input matrix must have {n} rows, got {S.shape}")
        if outputs is None:
            outputs = [("disp", d) for d in range(n)]
        outputs = tuple((str(kind), int(dof)) for kind, dof in outputs)
        for kind, dof in outputs:
            if kind not in ("disp", "vel") or not 0 <= dof < n:
                raise ValueError(f"bad output selector {(kind, dof)}")
        elements = tuple(nonlinear_elements)
        for el in elements:
            if el.load.shape != (n,):
                raise ValueError(f"load vector must have {n} entries")
            if el.monomial.max_channel() >= n:
                raise ValueError("nonlinear element references a dof out of range")
        for mat in (M, Cv, K, S):
            mat.setflags(write=False)
        self.mass, self.damping, self.stiffness = M, Cv, K
        self.minv = Minv
        self.input_matrix = S
        self.outputs = outputs
        self.nonlinear_elements = elements

    @property
    def n_dof(self):
        return self.mass.shape[0]

    @property
    def n_inputs(self):
        return self.input_matrix.shape[1]

    def output_labels(self):
        return tuple(
            (f"q{dof}" if kind == "disp" else f"qd{dof}") for kind, dof in self.outputs
        )

    def linear_part(self):
        """Spec with the nonlinear elements removed."""
        return MechanicalSystemSpec(
            self.mass, self.damping, self.stiffness, (),
            self.input_matrix, self.outputs,
        )

    def __repr__(self):
        return (
            f"MechanicalSystemSpec(n_dof={self.n_dof}, m={self.n_inputs}, "
            f"{len(self.nonlinear_elements)} nonlinear elements)"
        )


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step explicit RK4 settings.

    ``oversampling`` is the integration rate relative to the signal's
    sampling rate.  ``interpolation`` controls how input samples are
    lifted to the fine grid: "spectral" (exact for band-limited periodic
    signals, keeps the 4th-order convergence) or "zoh" (staircase hold,
    matching zero-order-hold discretizations exactly).
    """

    oversampling: int = 8
    interpolation: str = "spectral"

    def __post_init__(self):
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.interpolation not in ("spectral", "zoh"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")


def _upsample(data, factor, mode):
    """Lift (c, T) samples to a grid ``factor`` times finer (periodic)."""
    if factor == 1:
        return data
    if mode == "zoh":
        return np.repeat(data, factor, axis=1)
    T = data.shape[1]
    spec = np.fft.rfft(data, axis=1)
    if T % 2 == 0:
        # split the Nyquist bin so the interpolant stays real and symmetric
        spec[:, -1] *= 0.5
    out = np.fft.irfft(spec, n=T * factor, axis=1) * factor
    return out


def _nl_force_table(sys):
    # precomputed (coefficient, factors, minv_load) per element
    return [
        (el.coefficient, el.monomial.factors, sys.minv @ el.load)
        for el in sys.nonlinear_elements
    ]


def simulate_newton(sys, input_rec, cfg=None, x0=None):
    """Integrate the equations of motion for a recorded input.

    Parameters
    ----------
    sys : MechanicalSystemSpec
    input_rec : SignalRecord
        m input channels; treated as periodic when lifting to the fine
        integration grid.
    cfg : IntegratorConfig, optional
    x0 : ndarray, shape (2*n_dof,), optional
        Initial [q; qdot]; zeros by default.

    Returns
    -------
    SignalRecord
        The selected output channels at the input sampling rate.
    """
    cfg = cfg or IntegratorConfig()
    if input_rec.n_channels != sys.n_inputs:
        raise ValueError(
            f"input record has {input_rec.n_channels} channels, system expects {sys.n_inputs}"
        )
    n = sys.n_dof
    T = input_rec.n_samples
    ov = cfg.oversampling
    # RK4 needs the input at half steps: lift to 2*ov times the sampling rate
    ufine = _upsample(input_rec.data, 2 * ov, cfg.interpolation)
    nfine = ufine.shape[1]
    h = 1.0 / (input_rec.fs * ov)

    minv = sys.minv
    minv_cv = minv @ sys.damping
    minv_k = minv @ sys.stiffness
    pfine = (minv @ sys.input_matrix) @ ufine  # modal force on the fine grid
    nl = _nl_force_table(sys)

    q0 = np.zeros(n) if x0 is None else np.array(x0[:n], dtype=float)
    v0 = np.zeros(n) if x0 is None else np.array(x0[n:], dtype=float)

    with np.errstate(over="ignore", invalid="ignore"):
        if n == 1:
            qs, vs = _newton_loop_scalar(
                pfine[0], float(minv_cv[0, 0]), float(minv_k[0, 0]),
                [(c * float(ml[0]), factors) for c, factors, ml in nl],
                h, T, ov, float(q0[0]), float(v0[0]),
            )
            qs, vs = qs[:, None], vs[:, None]
        else:
            qs, vs = _newton_loop_generic(pfine, minv_cv, minv_k, nl, h, T, ov, q0, v0)

    rows = [
        (qs[:, dof] if kind == "disp" else vs[:, dof]) for kind, dof in sys.outputs
    ]
    return SignalRecord(
        np.asarray(rows), input_rec.fs, input_rec.period_length,
        labels=sys.output_labels(),
    )


def _newton_loop_scalar(pf, cv, kk, nl, h, T, ov, q, v):
    """Single-dof RK4 in plain float arithmetic."""
    nfine = pf.shape[0]
    qs = np.empty(T)
    vs = np.empty(T)
    limit = DIVERGENCE_LIMIT
    h2, h6 = 0.5 * h, h / 6.0

    def accel(qv, vv, f):
        a = f - cv * vv - kk * qv
        for cm, factors in nl:
            g = 1.0
            for _, d, e in factors:
                g *= (qv if d == 0 else vv) ** e
            a -= cm * g
        return a

    for t in range(T):
        qs[t] = q
        vs[t] = v
        if not (abs(q) < limit and abs(v) < limit):
            raise SimulationDivergence("mechanical response diverged", sample_index=t)
        for j in range(ov):
            base = 2 * (t * ov + j)
            f0 = pf[base]
            fh = pf[(base + 1) % nfine]
            f1 = pf[(base + 2) % nfine]
            k1v = accel(q, v, f0)
            k2q = v + h2 * k1v
            k2v = accel(q + h2 * v, k2q, fh)
            k3q = v + h2 * k2v
            k3v = accel(q + h2 * k2q, k3q, fh)
            k4q = v + h * k3v
            k4v = accel(q + h * k3q, k4q, f1)
            q = q + h6 * (v + 2.0 * k2q + 2.0 * k3q + k4q)
            v = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return qs, vs


def _newton_loop_generic(pf, minv_cv, minv_k, nl, h, T, ov, q, v):
    nfine = pf.shape[1]
    n = q.shape[0]
    qs = np.empty((T, n))
    vs = np.empty((T, n))
    limit = DIVERGENCE_LIMIT
    h2, h6 = 0.5 * h, h / 6.0

    def accel(qv, vv, f):
        a = f - minv_cv @ vv - minv_k @ qv
        for c, factors, mload in nl:
            g = 1.0
            for ch, d, e in factors:
                g *= (qv[ch] if d == 0 else vv[ch]) ** e
            a = a - (c * g) * mload
        return a

    for t in range(T):
        qs[t] = q
        vs[t] = v
        if not (np.all(np.abs(q) < limit) and np.all(np.abs(v) < limit)):
            raise SimulationDivergence("mechanical response diverged", sample_index=t)
        for j in range(ov):
            base = 2 * (t * ov + j)
            f0 = pf[:, base]
            fh = pf[:, (base + 1) % nfine]
            f1 = pf[:, (base + 2) % nfine]
            k1v = accel(q, v, f0)
            k2q = v + h2 * k1v
            k2v = accel(q + h2 * v, k2q, fh)
            k3q = v + h2 * k2v
            k3v = accel(q + h2 * k2q, k3q, fh)
            k4q = v + h * k3v
            k4v = accel(q + h * k3q, k4q, f1)
            q = q + h6 * (v + 2.0 * k2q + 2.0 * k3q + k4q)
            v = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return qs, vs


def _eval_entries(entries, y, out):
    # unchecked basis evaluation at one sample; y indexable, out (s,)
    for a, factors in enumerate(entries):
        acc = 1.0
        for c, _, e in factors:
            acc *= y[c] ** e
        out[a] = acc
    return out


def _solve_output(c0, F, entries, gbuf, max_iter=50, tol=1e-12):
    """Fixed-point solve of y = c0 + F g(y), seeded with the F=0 output."""
    y = c0
    for _ in range(max_iter):
        y_new = c0 + F @ _eval_entries(entries, y, gbuf)
        err = np.max(np.abs(y_new - y))
        if not err < DIVERGENCE_LIMIT:
            raise ConvergenceFailure("implicit output solve diverged")
        if err <= tol * (1.0 + np.max(np.abs(y_new))):
            return y_new
        y = y_new
    raise ConvergenceFailure(
        "implicit output equation did not converge; the feedthrough "
        "nonlinearity is too strong at this operating point"
    )


def simulate_greybox(model, input_rec, x0=None, return_state=False):
    """Step a grey-box model over recorded input samples.

    The basis is evaluated on the current output; when F couples g back
    into y the output equation is solved per sample by fixed-point
    iteration.  Bases that depend on output derivatives cannot be
    advanced causally and are rejected.

    Returns
    -------
    SignalRecord (and the state trajectory, shape (n, T), when
    ``return_state`` is true).
    """
    if isinstance(input_rec, SignalRecord):
        u = input_rec.data
        fs, N = input_rec.fs, input_rec.period_length
    else:
        u = np.atleast_2d(np.asarray(input_rec, dtype=float))
        fs, N = model.fs, u.shape[1]
    if u.shape[0] != model.m:
        raise ValueError(f"input has {u.shape[0]} channels, model expects {model.m}")
    if abs(fs - model.fs) > 1e-9 * model.fs:
        raise ValueError(f"input rate {fs} Hz does not match model rate {model.fs} Hz")
    if model.basis.any_velocity:
        raise ValueError(
            "time simulation requires a basis in measured outputs only; "
            "include velocities as output channels instead of derivative factors"
        )
    A, B, C, D, E, F = model.A, model.B, model.C, model.D, model.E, model.F
    basis = model.basis
    n, p, s, T = model.n, model.p, model.s, u.shape[1]
    entries = [mono.factors for mono in basis.entries]

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).reshape(n)
    ys = np.empty((p, T))
    xs = np.empty((n, T)) if return_state else None
    bu = B @ u  # input contributions precomputed, (n, T)
    du = D @ u  # (p, T)

    with np.errstate(over="ignore", invalid="ignore"):
        if p == 1 and all(all(d == 0 for _, d, _ in fac) for fac in entries):
            _greybox_loop_siso(A, C[0], E, F[0], [m.degree for m in basis.entries],
                               bu, du[0], x, ys[0], xs)
        else:
            _greybox_loop_generic(A, C, E, F, entries, s, bu, du, x, ys, xs)

    rec = SignalRecord(ys, fs, N, labels=tuple(f"y{i}" for i in range(p)))
    return (rec, xs) if return_state else rec


def _greybox_loop_generic(A, C, E, F, entries, s, bu, du, x, ys, xs):
    T = ys.shape[1]
    limit = DIVERGENCE_LIMIT
    feedthrough_nl = s > 0 and np.any(F != 0.0)
    gbuf = np.empty(s)
    for t in range(T):
        if not np.all(np.abs(x) < limit):
            raise SimulationDivergence("grey-box state diverged", sample_index=t)
        if xs is not None:
            xs[:, t] = x
        c0 = C @ x + du[:, t]
        if feedthrough_nl:
            try:
                y = _solve_output(c0, F, entries, gbuf)
            except ConvergenceFailure as exc:
                raise ConvergenceFailure(f"{exc} (sample {t})") from None
        else:
            y = c0
        if not np.all(np.abs(y) < limit):
            raise SimulationDivergence("grey-box output diverged", sample_index=t)
        ys[:, t] = y
        if s:
            x = A @ x + bu[:, t] + E @ _eval_entries(entries, y, gbuf)
        else:
            x = A @ x + bu[:, t]


def _greybox_loop_siso(A, crow, E, frow, degrees, bu, du0, x, ys0, xs):
    """Single-output loop; basis entries reduce to powers of the output."""
    T = ys0.shape[0]
    limit = DIVERGENCE_LIMIT
    s = len(degrees)
    fvals = [float(v) for v in frow]
    feedthrough_nl = s > 0 and any(v != 0.0 for v in fvals)
    gbuf = np.empty(s)
    for t in range(T):
        if xs is not None:
            xs[:, t] = x
        c0 = float(crow @ x) + du0[t]
        if feedthrough_nl:
            y = c0
            for it in range(50):
                y_new = c0
                for a in range(s):
                    y_new += fvals[a] * y ** degrees[a]
                err = abs(y_new - y)
                if err <= 1e-12 * (1.0 + abs(y_new)):
                    y = y_new
                    break
                if not err < limit:
                    raise ConvergenceFailure(f"implicit output solve diverged (sample {t})")
                y = y_new
            else:
                raise ConvergenceFailure(
                    "implicit output equation did not converge; the feedthrough "
                    f"nonlinearity is too strong at this operating point (sample {t})"
                )
        else:
            y = c0
        if not abs(y) < limit:
            raise SimulationDivergence("grey-box output diverged", sample_index=t)
        ys0[t] = y
        if s:
            for a in range(s):
                gbuf[a] = y ** degrees[a]
            x = A @ x + bu[:, t] + E @ gbuf
        else:
            x = A @ x + bu[:, t]


def steady_state_response(system, mspec, settle_periods, cfg=None,
                          settle_tol=1e-8):
    """Simulate a multisine run and keep only the settled periods.

    Parameters
    ----------
    system : MechanicalSystemSpec or GreyBoxModel
    mspec : MultisineSpec
        ``mspec.periods`` is the total simulated count; the first
        ``settle_periods`` are discarded.
    settle_tol : float
        Relative RMS difference allowed between the two periods
        bracketing the cut; a violation is recorded as a warning on the
        returned record, not raised.

    Returns
    -------
    SignalRecord
        Output record with ``mspec.periods - settle_periods`` periods.
    """
    if settle_periods >= mspec.periods:
        raise ValueError("settle_periods must leave at least one retained period")
    u = generate_multisine(mspec)
    if isinstance(system, GreyBoxModel):
        y = simulate_greybox(system, u)
    else:
        y = simulate_newton(system, u, cfg)
    blocks = y.per_period()
    if settle_periods >= 2:
        # last two discarded periods
        a, b = blocks[:, settle_periods - 2], blocks[:, settle_periods - 1]
    elif y.periods >= settle_periods + 2:
        # too few discarded periods to compare; check the first retained ones
        a, b = blocks[:, settle_periods], blocks[:, settle_periods + 1]
    else:
        a = b = blocks[:, settle_periods]
    scale = np.sqrt(np.mean(blocks[:, -1] ** 2))
    diff = np.sqrt(np.mean((a - b) ** 2))
    warnings = ()
    if scale > 0 and diff > settle_tol * scale:
        warnings = (
            f"not settled: periods around the cut differ by {diff / scale:.3e} "
            f"relative RMS (tolerance {settle_tol:g})",
        )
    return trim_transient(y, settle_periods).with_warnings(warnings)


def discretize_zoh(a_c, b_c, c_c, d_c, sample_period):
    """Zero-order-hold discretization of a continuous state-space system."""
    a_c = np.atleast_2d(np.asarray(a_c, dtype=float))
    b_c = np.atleast_2d(np.asarray(b_c, dtype=float))
    n, m = b_c.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = a_c
    blk[:n, n:] = b_c
    expm = scipy.linalg.expm(blk * sample_period)
    return expm[:n, :n], expm[:n, n:], np.atleast_2d(np.asarray(c_c, float)), \
        np.atleast_2d(np.asarray(d_c, float))


def continuous_matrices(sys):
    """First-order form of a mechanical system, extended-input columns last.

    Returns (a_c, bbar_c, C, dbar) where bbar_c stacks the force input
    columns and one column per nonlinear element (with the sign that
    moves the restoring force to the input side).
    """
    n = sys.n_dof
    a_c = np.zeros((2 * n, 2 * n))
    a_c[:n, n:] = np.eye(n)
    a_c[n:, :n] = -sys.minv @ sys.stiffness
    a_c[n:, n:] = -sys.minv @ sys.damping
    cols = [np.vstack([np.zeros((n, sys.n_inputs)), sys.minv @ sys.input_matrix])]
    for el in sys.nonlinear_elements:
        cols.append(np.vstack([np.zeros((n, 1)), (-el.coefficient * (sys.minv @ el.load))[:, None]]))
    bbar_c = np.hstack(cols)
    C = np.zeros((len(sys.outputs), 2 * n))
    for i, (kind, dof) in enumerate(sys.outputs):
        C[i, dof + (n if kind == "vel" else 0)] = 1.0
    dbar = np.zeros((len(sys.outputs), bbar_c.shape[1]))
    return a_c, bbar_c, C, dbar


def _basis_from_elements(sys):
    """Express the element monomials on the measured output channels."""
    chan = {}
    for i, (kind, dof) in enumerate(sys.outputs):
        chan[(0 if kind == "disp" else 1, dof)] = i
    entries = []
    for el in sys.nonlinear_elements:
        factors = []
        for dof, d, e in el.monomial.factors:
            try:
                factors.append((chan[(d, dof)], 0, e))
            except KeyError:
                raise ValueError(
                    f"nonlinear element references {'qd' if d else 'q'}{dof}, "
                    "which is not among the measured outputs"
                ) from None
        entries.append(Monomial(factors))
    return BasisFunctionSet(entries)


def greybox_from_mechanical(sys, sample_period, method="zoh"):
    """Grey-box model sampled from a mechanical system description.

    The state dynamics are discretized assuming the extended input
    (forces and nonlinear basis signals) is held over each sample.  The
    nonlinear element monomials are rewritten in terms of the measured
    output channels, so every referenced dof/derivative must be measured.
    """
    if method != "zoh":
        raise ValueError(f"unknown discretization method {method!r}")
    a_c, bbar_c, C, dbar = continuous_matrices(sys)
    A, Bbar, C, Dbar = discretize_zoh(a_c, bbar_c, C, dbar, sample_period)
    m = sys.n_inputs
    basis = _basis_from_elements(sys)
    return GreyBoxModel(
        A, Bbar[:, :m], C, Dbar[:, :m], Bbar[:, m:], Dbar[:, m:],
        basis, sample_period,
    )
