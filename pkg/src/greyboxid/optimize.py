"""Weighted least-squares refinement of grey-box models.

The cost is the weighted squared output error in the frequency domain,

    V(theta) = sum_k  eps(k)^H W^2(k) eps(k),
    eps(k)   = Y_model(k, theta) - Y_measured(k),

with W = 1/sigma of the averaged output spectrum (all-ones for
noiseless data).  The model output spectra come from a time simulation
driven by the measured input, re-settled to steady state on every
evaluation, followed by a DFT of the final period.

The Jacobian of eps is computed analytically: differentiating the state
and output recursions with respect to each entry of A, [B E], C and
[D F] yields an auxiliary state-space system per parameter, driven by
the stored base trajectory.  All auxiliary systems share the state
matrix and the output-feedback correction through the basis
derivatives, so they are propagated together in one batched pass and
transformed at the end.  Levenberg-Marquardt then iterates on the
packed parameter vector with real/imaginary stacking, so steps stay
real.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import eval_basis, eval_basis_derivative
from .exceptions import NumericalError, SimulationDivergence
from .model import GreyBoxModel, pack_parameters, unpack_parameters
from .signals import SignalRecord, SpectrumRecord, average_periods

__all__ = [
    "MLProblem",
    "LMConfig",
    "LMTrace",
    "residuals",
    "cost_value",
    "jacobian",
    "levenberg_marquardt",
]


@dataclass(frozen=True)
class MLProblem:
    """Data, weights and starting model for the ML refinement.

    Parameters
    ----------
    input_record : SignalRecord
        Measured input, steady-state periods only; the periods are
        averaged into one excitation period for model evaluation.
    output_spectra : SpectrumRecord
        Coherently averaged measured output spectra on the processed
        lines.
    model : GreyBoxModel
        Initial model; supplies dimensions, basis and sample period.
    weights : ndarray (p, F), optional
        Per-output, per-line weights 1/sigma; all-ones when omitted.
    settle_periods : int
        Warm-up periods simulated before the period kept for the DFT.
    """

    input_record: SignalRecord
    output_spectra: SpectrumRecord
    model: GreyBoxModel
    weights: np.ndarray = None
    settle_periods: int = 5

    def __post_init__(self):
        spec = self.output_spectra.averaged()
        object.__setattr__(self, "output_spectra", spec)
        p, F = spec.values.shape
        if self.weights is None:
            w = np.ones((p, F))
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (p, F):
                raise ValueError(f"weights must have shape {(p, F)}, got {w.shape}")
            if np.any(w <= 0):
                raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        if self.input_record.period_length != spec.n_grid:
            raise ValueError("input period length does not match the spectral grid")
        if self.model.m != self.input_record.n_channels:
            raise ValueError("model input count does not match the input record")
        if self.model.p != p:
            raise ValueError("model output count does not match the output spectra")
        if self.settle_periods < 0:
            raise ValueError("settle_periods must be >= 0")

    @property
    def lines(self):
        return self.output_spectra.lines


@dataclass(frozen=True)
class LMConfig:
    """Levenberg-Marquardt schedule and stopping rules."""

    max_iterations: int = 200
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.3
    cost_tol: float = 1e-9
    step_tol: float = 1e-12
    lambda_cap: float = 1e12

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for name in ("lambda_init", "lambda_up", "lambda_down", "cost_tol",
                     "step_tol", "lambda_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not self.lambda_up > 1.0 > self.lambda_down:
            raise ValueError("need lambda_up > 1 > lambda_down")


@dataclass
class LMTrace:
    """Per-trial optimization history."""

    iterations: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def append(self, cost, lamb, step_norm, accepted):
        self.iterations.append(
            {"iteration": len(self.iterations), "cost": cost, "lambda": lamb,
             "step_norm": step_norm, "accepted": accepted}
        )

    def accepted_costs(self):
        return [row["cost"] for row in self.iterations if row["accepted"]]

    def __len__(self):
        return len(self.iterations)


class _Evaluation:
    """Base-trajectory cache shared by the residual and Jacobian."""

    __slots__ = ("model", "x", "y", "ubar", "eps")

    def __init__(self, model, x, y, ubar, eps):
        self.model = model
        self.x = x          # (n, T) states over the full simulated stretch
        self.y = y          # (p, T)
        self.ubar = ubar    # (m+s, T)
        self.eps = eps      # (p, F) complex


def _as_model(theta, problem):
    if isinstance(theta, GreyBoxModel):
        return theta
    return unpack_parameters(theta, problem.model)


def _dft_last_period(data, n_grid, lines):
    """1/N-scaled DFT of the final period at the requested lines."""
    seg = data[..., -n_grid:]
    return np.fft.rfft(seg, axis=-1)[..., lines] / n_grid


def _simulate_tiled(model, u_period, settle_periods):
    """Steady-state protocol: settle periods plus one retained period."""
    reps = settle_periods + 1
    u = np.tile(u_period, reps)
    from .simulate import simulate_greybox  # local import avoids a cycle

    rec, x = simulate_greybox(
        model,
        SignalRecord(u, model.fs, u_period.shape[1]),
        return_state=True,
    )
    return rec.data, x, u


def _evaluate(theta, problem):
    model = _as_model(theta, problem)
    u_period = average_periods(problem.input_record)
    y, x, u = _simulate_tiled(model, u_period, problem.settle_periods)
    spec = problem.output_spectra
    ym = _dft_last_period(y, spec.n_grid, spec.lines)
    eps = ym - spec.values
    if len(model.basis):
        g = eval_basis(model.basis, y)
        ubar = np.vstack([u, g])
    else:
        ubar = u
    return _Evaluation(model, x, y, ubar, eps)


def residuals(theta, problem):
    """Complex output-spectrum error on the processed lines, shape (p, F)."""
    return _evaluate(theta, problem).eps


def _cost_from_eps(eps, weights):
    we = weights * eps
    return float(np.sum(we.real**2 + we.imag**2))


def cost_value(theta, problem):
    """Weighted least-squares cost V(theta)."""
    return _cost_from_eps(residuals(theta, problem), problem.weights)


def _sensitivity_pass(ev, lines, n_grid):
    """Propagate all parameter sensitivities in one batched recursion.

    For each model parameter the derivative of the output trajectory
    obeys an auxiliary recursion that shares A and the output-feedback
    correction E dg/dy, F dg/dy with every other parameter; only the
    injection term differs (x(t) for A-entries, ubar(t) for [B E], and
    the same pair entering the output equation for C and [D F]).  The
    injected sensitivities are integrated jointly as columns of one
    matrix recursion and DFT'd at the end.

    Returns the complex Jacobian of the output spectra, shape
    (p, F, n_par), ordered like the packed parameter vector.
    """
    model = ev.model
    A, C = model.A, model.C
    bbar, dbar = model.bbar, model.dbar
    basis = model.basis
    n, p, me = model.n, model.p, model.m + model.s
    T = ev.y.shape[1]
    npar = n * n + n * me + p * n + p * me

    if len(basis):
        dg = eval_basis_derivative(basis, ev.y)           # (s, p, T)
        dudy = np.zeros((me, p, T))
        dudy[model.m:] = dg
        # feedback corrections, precomputed per sample
        sb = np.einsum("nu,upt->tnp", bbar, dudy)          # (T, n, p)
        sd = np.einsum("pu,uqt->tpq", dbar, dudy)          # (T, p, p)
        eye_p = np.eye(p)
        minv = np.linalg.inv(eye_p[None] - sd)             # (T, p, p)
    else:
        sb = None
        minv = None

    off_b = n * n
    off_c = off_b + n * me
    off_d = off_c + p * n

    x_sens = np.zeros((n, npar))
    inj_x = np.zeros((n, npar))
    inj_y = np.zeros((p, npar))
    # strided views of the injection blocks: block (j) column (i) <-> entry (i, j)
    vxa = inj_x[:, :off_b].reshape(n, n, n)
    vxb = inj_x[:, off_b:off_c].reshape(n, me, n)
    vyc = inj_y[:, off_c:off_d].reshape(p, n, p)
    vyd = inj_y[:, off_d:].reshape(p, me, p)
    rows_n = np.arange(n)
    rows_p = np.arange(p)

    y_sens = np.empty((T, p, npar))
    for t in range(T):
        xt = ev.x[:, t]
        ut = ev.ubar[:, t]
        vxa[rows_n, :, rows_n] = xt
        vxb[rows_n, :, rows_n] = ut
        vyc[rows_p, :, rows_p] = xt
        vyd[rows_p, :, rows_p] = ut
        rhs = C @ x_sens + inj_y
        ys = minv[t] @ rhs if minv is not None else rhs
        y_sens[t] = ys
        x_sens = A @ x_sens + inj_x
        if sb is not None:
            x_sens += sb[t] @ ys

    block = np.moveaxis(y_sens, 0, -1)  # (p, npar, T)
    return np.moveaxis(_dft_last_period(block, n_grid, lines), 1, 2)


def jacobian(theta, problem):
    """Analytic Jacobian of the residuals w.r.t. the packed parameters.

    Returns
    -------
    ndarray, complex, shape (p * F, n_par)
        Row-major over (output, line); columns follow the packed layout
        vec(A), vec([B E]), vec(C), vec([D F]).
    """
    ev = _evaluate(theta, problem)
    spec = problem.output_spectra
    jac = _sensitivity_pass(ev, spec.lines, spec.n_grid)
    p, F, npar = jac.shape
    return jac.reshape(p * F, npar)


def _weighted_real_system(jac_c, eps, weights):
    """Stack real and imaginary parts of W*J and W*eps."""
    wflat = weights.reshape(-1)
    jw = jac_c * wflat[:, None]
    rw = (weights * eps).reshape(-1)
    jr = np.vstack([jw.real, jw.imag])
    rr = np.concatenate([rw.real, rw.imag])
    return jr, rr


def gauss_newton_step(jr, rr, lamb):
    """Solve (J^T J + lambda I) delta = J^T r."""
    h = jr.T @ jr
    g = jr.T @ rr
    try:
        return np.linalg.solve(h + lamb * np.eye(h.shape[0]), g)
    except np.linalg.LinAlgError:
        raise NumericalError("normal equations are singular") from None


def levenberg_marquardt(problem, cfg=None, verbose=False):
    """Minimize the weighted output-error cost from the problem's model.

    A trial step ``theta - (J^T W^2 J + lambda I)^{-1} J^T W^2 eps`` is
    accepted only when it strictly decreases the cost; lambda shrinks on
    accepted steps and grows on rejections.  Divergent trial simulations
    count as rejections.  When lambda exceeds its cap without an
    acceptable step the best model so far is returned with
    ``trace.converged`` False.

    Returns
    -------
    (GreyBoxModel, LMTrace)
    """
    cfg = cfg or LMConfig()
    trace = LMTrace()
    theta = pack_parameters(problem.model).values.copy()
    if cfg.max_iterations == 0:
        trace.message = "no iterations requested"
        return problem.model, trace

    ev = _evaluate(theta, problem)
    cost = _cost_from_eps(ev.eps, problem.weights)
    if cost == 0.0:
        trace.converged = True
        trace.message = "initial cost is exactly zero"
        return ev.model, trace

    spec = problem.output_spectra
    jac_c = _sensitivity_pass(ev, spec.lines, spec.n_grid).reshape(-1, theta.size)
    jr, rr = _weighted_real_system(jac_c, ev.eps, problem.weights)
    lamb = cfg.lambda_init * float(np.mean(np.sum(jr * jr, axis=0)))
    lamb_cap = lamb * cfg.lambda_cap

    best_theta, best_cost = theta.copy(), cost
    accepted_history = [cost]
    for _ in range(cfg.max_iterations):
        try:
            step = gauss_newton_step(jr, rr, lamb)
            trial = theta - step
            ev_t = _evaluate(trial, problem)
            trial_cost = _cost_from_eps(ev_t.eps, problem.weights)
        except (NumericalError, SimulationDivergence):
            trial_cost = np.inf
            step = np.zeros_like(theta)
        step_norm = float(np.linalg.norm(step))
        accepted = trial_cost < cost
        trace.append(trial_cost if np.isfinite(trial_cost) else np.inf,
                     lamb, step_norm, accepted)
        if verbose:
            mark = "+" if accepted else "-"
            print(f"  [{mark}] V={trial_cost:.6e} lambda={lamb:.2e} |step|={step_norm:.2e}")
        if accepted:
            theta, cost, ev = trial, trial_cost, ev_t
            best_theta, best_cost = theta.copy(), cost
            lamb *= cfg.lambda_down
            accepted_history.append(cost)
        rel_step = step_norm / (np.linalg.norm(theta) + 1e-300)
        if np.isfinite(trial_cost) and rel_step < cfg.step_tol:
            # stationary point: the damped step has shrunk to nothing
            trace.converged = True
            trace.message = "step size below tolerance"
            break
        if accepted:
            if len(accepted_history) > 3:
                old = accepted_history[-4]
                if (old - cost) < cfg.cost_tol * max(old, 1e-300):
                    trace.converged = True
                    trace.message = "cost change below tolerance"
                    break
            jac_c = _sensitivity_pass(ev, spec.lines, spec.n_grid).reshape(-1, theta.size)
            jr, rr = _weighted_real_system(jac_c, ev.eps, problem.weights)
        else:
            lamb *= cfg.lambda_up
            if lamb > lamb_cap:
                trace.message = "no acceptable step below the damping cap"
                break
    else:
        trace.message = "iteration limit reached"

    return unpack_parameters(best_theta, problem.model), trace
