"""Reference solvers: classical normal equations IPM and a dense Newton-KKT step.

The classical solver runs on the original (non-augmented) QP.  Per Newton
iteration it factors the block-diagonal ``Phi = H + A_i^T W^{-1} Lam A_i``
and the block-tridiagonal Schur complement ``A_e Phi^{-1} A_e^T``, then
recovers the equality multiplier step before the primal step.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.linalg import solve_triangular

from .blockla import BlockTriDiagSym, FactorizationError, block_cholesky, block_solve
from .ipm import (SolveResult, SolverOptions, Status, convergence_check, corrector_F,
                  duality_measure, initial_slacks, mehrotra_sigma, predictor_F,
                  step_lengths)
from .problem import MpcProblem, StructuredQp, assemble_qp

DENSE_LIMIT = 2000


def _cho_solve(L, B):
    return solve_triangular(L, solve_triangular(L, B, lower=True, check_finite=False),
                            lower=True, trans="T", check_finite=False)


class _PhiFactor:
    """Stage-wise Cholesky factors of the block-diagonal ``Phi``.

    Stage 0 holds ``u(0)``, stage ``k`` in ``1..T-1`` holds ``(x(k), u(k))``
    and stage ``T`` holds ``x(T)``.
    """

    def __init__(self, qp: StructuredQp, xi):
        T, nx, nc, m = qp.T, qp.n_x, qp.n_c, qp.m_s
        self.qp = qp
        Xs = xi[:T * m].reshape(T, m)
        xf = xi[T * m:]
        Bc, Ax = qp.Bc_i, qp.Ax_i
        P0 = qp.U + (Bc.T * Xs[0]) @ Bc
        PT = qp.Q_f + (qp.Ax_f.T * xf) @ qp.Ax_f
        Hk = np.block([[qp.Q, qp.S], [qp.S.T, qp.U]])
        G = np.hstack([Ax, Bc])
        Pm = Hk + (G.T[None] * Xs[1:, None, :]) @ G
        try:
            self.L0 = np.linalg.cholesky(P0)
            self.Lm = np.linalg.cholesky(Pm) if T > 1 else np.zeros((0, nx + nc, nx + nc))
            self.LT = np.linalg.cholesky(PT)
        except np.linalg.LinAlgError:
            raise FactorizationError(-1) from None

    def solve(self, v) -> np.ndarray:
        qp = self.qp
        U, X = qp.split(v)
        oU, oX = np.empty_like(U), np.empty_like(X)
        oU[0] = _cho_solve(self.L0, U[0])
        oX[-1] = _cho_solve(self.LT, X[-1])
        nx = qp.n_x
        for k in range(1, qp.T):
            z = _cho_solve(self.Lm[k - 1], np.concatenate([X[k - 1], U[k]]))
            oX[k - 1], oU[k] = z[:nx], z[nx:]
        return qp.join(oU, oX)

    def schur(self) -> BlockTriDiagSym:
        """``A_e Phi^{-1} A_e^T`` assembled stage by stage."""
        qp = self.qp
        T, nx = qp.T, qp.n_x
        A, B = qp.A, qp.B
        E0 = -B
        Ek = np.hstack([-A, -B])
        Fk = np.vstack([np.eye(nx), np.zeros((qp.n_c, nx))])
        # W[k] = Phi_k^{-1} F_{k-1}^T restricted to the rows hit by F_k, E_k
        Z0 = _cho_solve(self.L0, E0.T)
        diag = np.empty((T, nx, nx))
        sub = np.empty((T - 1, nx, nx))
        EZ = [E0 @ Z0]
        W = [None]
        for k in range(1, T):
            sol = _cho_solve(self.Lm[k - 1], np.hstack([Ek.T, Fk]))
            EZ.append(Ek @ sol[:, :nx])
            W.append(sol[:, nx:])
            sub[k - 1] = Ek @ sol[:, nx:]
        WT = _cho_solve(self.LT, np.eye(nx))
        for k in range(T):
            FW = W[k + 1][:nx] if k + 1 < T else WT
            diag[k] = EZ[k] + FW
        return BlockTriDiagSym(diag, sub)


def classical_solve(qp: StructuredQp, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Mehrotra IPM on the classical normal equations (two factorizations per iteration)."""
    t_start = time.perf_counter()
    n, m = qp.n, qp.m_i
    y = np.zeros(n)
    lam_e = np.zeros(qp.m_e)
    s = qp.b_i - qp.Ai_mul(y)
    w, lam = initial_slacks(s)
    be_scale = 1.0 + np.abs(qp.b_e).max(initial=0.0)

    res = SolveResult(Status.ITER_LIMIT, y, None, 0, np.inf, np.inf, w, lam)
    for it in range(opts.i_max + 1):
        t_it = time.perf_counter()
        base = -qp.H_mul(y) - qp.g + qp.AeT_mul(lam_e)
        r2 = qp.Ae_mul(y) - qp.b_e
        mu = duality_measure(lam, w, n, m)
        k3 = s + w
        k1 = -(base + qp.AiT_mul(lam))
        primal_inf = max(float(np.abs(k3).max(initial=0.0)), float(np.abs(r2).max()))
        res.eq_residuals.append(float(np.abs(r2).max()) / be_scale)
        res.residual, res.mu, res.primal_residual = float(np.linalg.norm(k1)), mu, primal_inf
        if convergence_check(k1, mu, opts, primal_inf):
            res.status = Status.CONVERGED
            break
        if it == opts.i_max:
            break

        try:
            phi = _PhiFactor(qp, lam / w)
            Ls = block_cholesky(phi.schur())
        except FactorizationError as err:
            res.status, res.failed_block = Status.NUMERICAL_FAILURE, err.block
            break
        res.factorizations.append(2)

        def direction(F, comp):
            r1 = base + qp.AiT_mul(F)
            dnu = block_solve(Ls, -r2 - qp.Ae_mul(phi.solve(r1)))
            dy = phi.solve(r1 + qp.AeT_mul(dnu))
            dw = qp.Ai_mul(dy) - k3
            return dy, dnu, dw, -(comp + lam * dw) / w

        _, _, dw_a, dlam_a = direction(predictor_F(lam, w, s), lam * w)
        ap, ad = step_lengths(w, lam, dw_a, dlam_a, tau=1.0)
        if opts.single_alpha:
            ap = ad = min(ap, ad)
        mu_aff = float((w + ap * dw_a) @ (lam + ad * dlam_a)) / (n + m)
        sigma = mehrotra_sigma(mu, mu_aff)
        dy, dnu, dw, dlam = direction(corrector_F(lam, w, s, dw_a, dlam_a, sigma, mu),
                                      lam * w + dlam_a * dw_a - sigma * mu)
        ap, ad = step_lengths(w, lam, dw, dlam, opts.tau)
        if opts.single_alpha:
            ap = ad = min(ap, ad)
        y = y + ap * dy
        w = w + ap * dw
        lam = lam + ad * dlam
        lam_e = lam_e + ad * dnu
        s = qp.b_i - qp.Ai_mul(y)
        res.iterations += 1
        res.iter_times.append(time.perf_counter() - t_it)

    res.solve_time = time.perf_counter() - t_start
    res.y, res.w, res.lam, res.lam_e = y, w, lam, lam_e
    res.u = qp.split(y)[0][:, :qp.n_u].copy()
    return res


class ClassicalSolver:
    name = "classical"

    def __init__(self, prob: MpcProblem, opts: SolverOptions = SolverOptions()):
        t0 = time.perf_counter()
        self.prob, self.opts = prob, opts
        self.qp = assemble_qp(prob)
        self.setup_time = time.perf_counter() - t0

    def qp_for(self, x0=None) -> StructuredQp:
        return self.qp if x0 is None else assemble_qp(self.prob.with_x0(x0))

    def solve(self, x0=None) -> SolveResult:
        return classical_solve(self.qp_for(x0), self.opts)


def kkt_vector(qp: StructuredQp, y, lam_e, lam, w, sigma_mu: float = 0.0) -> np.ndarray:
    return np.concatenate([
        qp.H_mul(y) + qp.g - qp.AeT_mul(lam_e) - qp.AiT_mul(lam),
        qp.b_e - qp.Ae_mul(y),
        qp.b_i - qp.Ai_mul(y) + w,
        lam * w - sigma_mu,
    ])


def kkt_jacobian(qp: StructuredQp, lam, w) -> np.ndarray:
    n, me, mi = qp.n, qp.m_e, qp.m_i
    H, Ae, Ai = qp.dense_H(), qp.dense_Ae(), qp.dense_Ai()
    J = np.zeros((n + me + 2 * mi, n + me + 2 * mi))
    a, b, c = n, n + me, n + me + mi
    J[:a, :a] = H
    J[:a, a:b] = -Ae.T
    J[:a, b:c] = -Ai.T
    J[a:b, :a] = -Ae
    J[b:c, :a] = -Ai
    J[b:c, c:] = np.eye(mi)
    J[c:, b:c] = np.diag(w)
    J[c:, c:] = np.diag(lam)
    return J


def dense_newton_kkt(qp: StructuredQp, y, lam_e, lam, w, sigma_mu: float = 0.0):
    """Solve the full Newton system ``grad K dq = -K`` densely.

    Returns ``(dy, dlam_e, dlam_i, dw)``.
    """
    size = qp.n + qp.m_e + 2 * qp.m_i
    if size > DENSE_LIMIT:
        raise ValueError(f"dense Newton system of size {size} exceeds {DENSE_LIMIT}")
    K = kkt_vector(qp, y, lam_e, lam, w, sigma_mu)
    J = kkt_jacobian(qp, lam, w)
    dq = np.linalg.solve(J, -K)
    n, me, mi = qp.n, qp.m_e, qp.m_i
    return dq[:n], dq[n:n + me], dq[n + me:n + me + mi], dq[n + me + mi:]
