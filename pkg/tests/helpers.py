"""Shared builders and independent oracles for the test suite.

Oracles here are deliberately written against the mathematical
definitions (dense-grid searches, finite differences, closed-form
transfer functions) rather than reusing the library code paths they
check.
"""
import numpy as np

from greyboxid import (
    BasisFunctionSet,
    GreyBoxModel,
    MultisineSpec,
    generate_multisine,
    simulate_greybox,
)


def random_stable_model(rng, n, s, p=1, m=1, gamma=0.05, fs=100.0, check_input=None,
                        max_tries=50):
    """Random stable grey-box model; optionally rejection-sampled so the
    response to ``check_input`` stays bounded and mildly nonlinear."""
    basis = BasisFunctionSet([[(0, 0, k + 2)] for k in range(s)])
    for _ in range(max_tries):
        A = rng.standard_normal((n, n)) * 0.6
        A *= 0.85 / np.abs(np.linalg.eigvals(A)).max()
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n)) * 0.5
        D = rng.standard_normal((p, m)) * 0.1
        E = rng.standard_normal((n, s)) * gamma
        F = rng.standard_normal((p, s)) * gamma * 0.5
        model = GreyBoxModel(A, B, C, D, E, F, basis, 1.0 / fs)
        if check_input is None:
            return model
        try:
            y = simulate_greybox(model, check_input)
        except Exception:
            continue
        if np.abs(y.data).max() < 2.0:
            return model
    raise RuntimeError("no stable random model found")


def make_multisine(N=1024, periods=3, seed=0, rms=0.5, fs=100.0, f_max=40.0):
    spec = MultisineSpec(0.0, f_max, fs, N, rms, periods=periods, rng_seed=seed)
    return generate_multisine(spec)


def linear_recursion_oracle(model, u):
    """Reference linear simulation mirroring the production update order."""
    A, B, C, D = model.A, model.B, model.C, model.D
    x = np.zeros(model.n)
    bu = B @ u
    du = D @ u
    ys = np.empty((model.p, u.shape[1]))
    for t in range(u.shape[1]):
        if model.p == 1:
            ys[0, t] = float(C[0] @ x) + du[0, t]
        else:
            ys[:, t] = C @ x + du[:, t]
        x = A @ x + bu[:, t]
    return ys


def linear_output_jacobian_oracle(model, ubar_spec, lines, n_grid):
    """Closed-form sensitivities of the output spectra of a linear model.

    ``ubar_spec`` is the extended-input spectrum (m+s, F).  Returns a
    complex array (p*F, n_par) in the packed parameter order.
    """
    A, C = model.A, model.C
    bbar = model.bbar
    n, p, me = model.n, model.p, model.m + model.s
    lines = np.asarray(lines, dtype=int)
    F = lines.size
    zk = np.exp(2j * np.pi * lines / n_grid)
    npar = n * n + n * me + p * n + p * me
    jac = np.zeros((F, p, npar), dtype=complex)
    eye = np.eye(n)
    for f in range(F):
        res = np.linalg.inv(zk[f] * eye - A)
        cres = C @ res                     # (p, n)
        resbu = res @ bbar @ ubar_spec[:, f]   # (n,)
        uf = ubar_spec[:, f]
        col = 0
        for j in range(n):
            for i in range(n):
                jac[f, :, col] = cres[:, i] * resbu[j]
                col += 1
        for j in range(me):
            for i in range(n):
                jac[f, :, col] = cres[:, i] * uf[j]
                col += 1
        for j in range(n):
            for i in range(p):
                vec = np.zeros(p)
                vec[i] = resbu[j]
                jac[f, :, col] = vec
                col += 1
        for j in range(me):
            for i in range(p):
                vec = np.zeros(p)
                vec[i] = uf[j]
                jac[f, :, col] = vec
                col += 1
    return np.moveaxis(jac, 0, 1).reshape(p * F, npar)


def reference_linear_subspace(U, Y, lines, n_grid, order, r):
    """Compact frequency-domain subspace estimate used as an oracle.

    Independent re-derivation: block-Vandermonde in z, orthogonal
    projection via explicit least squares (not QR of the stacked data),
    SVD truncation, shift-invariance, then (B, D) by linear least
    squares on the model equations.
    """
    zk = np.exp(2j * np.pi * np.asarray(lines) / n_grid)
    mu, F = U.shape
    p = Y.shape[0]
    powers = zk[None, :] ** np.arange(r)[:, None]
    Um = (powers[:, None, :] * U[None]).reshape(r * mu, F)
    Ym = (powers[:, None, :] * Y[None]).reshape(r * p, F)
    Ur = np.hstack([Um.real, Um.imag])
    Yr = np.hstack([Ym.real, Ym.imag])
    # project Y rows onto the orthogonal complement of the U row space
    coef, *_ = np.linalg.lstsq(Ur.T, Yr.T, rcond=None)
    resid = Yr - coef.T @ Ur
    Un, sv, _ = np.linalg.svd(resid, full_matrices=False)
    Or = Un[:, :order]
    A, *_ = np.linalg.lstsq(Or[:-p], Or[p:], rcond=None)
    C = Or[:p]
    rows = []
    rhs = []
    eye = np.eye(A.shape[0])
    for f in range(F):
        res = np.linalg.inv(zk[f] * eye - A)
        tk = C @ res
        design = np.zeros((p, (A.shape[0] + p) * mu), dtype=complex)
        nb = A.shape[0]
        for j in range(mu):
            design[:, j * nb:(j + 1) * nb] = U[j, f] * tk
            design[:, mu * nb + j * p: mu * nb + (j + 1) * p] = U[j, f] * np.eye(p)
        rows.append(design)
        rhs.append(Y[:, f])
    design = np.vstack([np.vstack(rows).real, np.vstack(rows).imag])
    rhs = np.concatenate([np.concatenate(rhs).real, np.concatenate(rhs).imag])
    sol, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    nb = A.shape[0]
    B = sol[: mu * nb].reshape(mu, nb).T
    D = sol[mu * nb:].reshape(mu, p).T
    return A, B, C, D


def frf_of(model, lines, n_grid):
    from greyboxid import extended_frf

    return extended_frf(model, lines, n_grid)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)
