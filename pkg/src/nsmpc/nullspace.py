"""Sparse null-space basis of the dynamics constraints and its projections.

With a square invertible transfer matrix ``B`` and ``C = -B^{-1} A B`` the
columns of ``N`` are indexed by stage; the step ``dy = N dz`` reads::

    du(k)   = dz(k) + C dz(k-1)
    dx(k+1) = B dz(k)

which satisfies the linearised dynamics exactly, so ``A_e N = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import Augmentation, solve_Bhat
from .blockla import BlockTriDiagSym


@dataclass(frozen=True)
class NullBasis:
    B_hat: np.ndarray
    C: np.ndarray
    T: int

    @property
    def b(self) -> int:
        return self.B_hat.shape[0]

    @property
    def shape(self):
        return (2 * self.T * self.b, self.T * self.b)

    def apply(self, dz) -> np.ndarray:
        """``N @ dz`` in the stage-major QP layout."""
        Z = np.asarray(dz, dtype=float).reshape(self.T, self.b)
        U = Z.copy()
        U[1:] += Z[:-1] @ self.C.T
        return np.hstack([U, Z @ self.B_hat.T]).ravel()

    def apply_T(self, v) -> np.ndarray:
        """``N^T @ v``."""
        V = np.asarray(v, dtype=float).reshape(self.T, 2 * self.b)
        vu, vx = V[:, :self.b], V[:, self.b:]
        out = vu + vx @ self.B_hat
        out[:-1] += vu[1:] @ self.C
        return out.ravel()

    def dense(self) -> np.ndarray:
        return np.column_stack([self.apply(e) for e in np.eye(self.shape[1])])


def build_basis(aug: Augmentation, A_xe, T: int) -> NullBasis:
    A = np.asarray(A_xe, dtype=float)
    C = -solve_Bhat(aug, A @ aug.B_hat)
    C.setflags(write=False)
    return NullBasis(B_hat=aug.B_hat, C=C, T=int(T))


def project_hessian(basis: NullBasis, U_hat, Q, S, Q_f) -> BlockTriDiagSym:
    """Block-tridiagonal ``N^T H N``.

    Interior diagonal blocks are ``U + B^T M1 + C^T M2``, the last one
    ``U + B^T Q_f B``, and every sub-diagonal block is ``M2`` with
    ``M1 = Q B + S C`` and ``M2 = S^T B + U C``.
    """
    B, C, T, b = basis.B_hat, basis.C, basis.T, basis.b
    U = np.asarray(U_hat, dtype=float)
    S = np.asarray(S, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if U.shape != (b, b) or S.shape != (b, b) or Q.shape != (b, b):
        raise ValueError("cost blocks must be square of the augmented control size")
    M1 = Q @ B + S @ C
    M2 = S.T @ B + U @ C
    diag = np.empty((T, b, b))
    diag[:] = U + B.T @ M1 + C.T @ M2
    diag[-1] = U + B.T @ np.asarray(Q_f, dtype=float) @ B
    sub = np.broadcast_to(M2, (max(T - 1, 0), b, b)).copy()
    return BlockTriDiagSym(diag, sub)


def project_inequalities(basis: NullBasis, Ax_i, Bc_i, Ax_f):
    """Nonzero blocks of ``A_i N``.

    Stage ``k`` rows hit ``dz(k)`` through ``Bc_i`` and ``dz(k-1)`` through
    ``M3 = Ax_i B + Bc_i C`` (absent for ``k = 0``); terminal rows hit
    ``dz(T-1)`` through ``Ax_f B``.  Returns ``(M3, Bc_i, G_f)``.
    """
    Ax_i = np.asarray(Ax_i, dtype=float)
    Bc_i = np.asarray(Bc_i, dtype=float)
    if Ax_i.shape[1] != basis.b or Bc_i.shape[1] != basis.b or Ax_i.shape[0] != Bc_i.shape[0]:
        raise ValueError(f"inequality blocks {Ax_i.shape}, {Bc_i.shape} do not match b={basis.b}")
    M3 = Ax_i @ basis.B_hat + Bc_i @ basis.C
    G_f = np.asarray(Ax_f, dtype=float) @ basis.B_hat
    return M3, Bc_i, G_f


def _weighted_gram(G, Xi, G2=None):
    """Batched ``G^T diag(Xi[k]) G2`` for each row ``k`` of ``Xi``."""
    G2 = G if G2 is None else G2
    return (G.T[None, :, :] * Xi[:, None, :]) @ G2


@dataclass
class Projections:
    """Setup-time projections reused by every Newton iteration."""

    basis: NullBasis
    NHN: BlockTriDiagSym
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    B_i: np.ndarray
    G_f: np.ndarray

    @property
    def T(self) -> int:
        return self.basis.T

    @property
    def m_s(self) -> int:
        return self.B_i.shape[0]

    @property
    def m_i(self) -> int:
        return self.T * self.m_s + self.G_f.shape[0]

    def dense_AiN(self) -> np.ndarray:
        T, b, m = self.T, self.basis.b, self.m_s
        out = np.zeros((self.m_i, T * b))
        for k in range(T):
            out[k * m:(k + 1) * m, k * b:(k + 1) * b] = self.B_i
            if k > 0:
                out[k * m:(k + 1) * m, (k - 1) * b:k * b] = self.M3
        out[T * m:, (T - 1) * b:] = self.G_f
        return out

    def compose(self, xi, allow_zero: bool = False) -> BlockTriDiagSym:
        """``N^T H N + (A_i N)^T diag(xi) (A_i N)`` in block-tridiagonal form."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.m_i,):
            raise ValueError(f"xi must have length {self.m_i}, got shape {xi.shape}")
        if xi.size and (xi.min() < 0 or (not allow_zero and xi.min() == 0)):
            raise ValueError("inequality weights must be strictly positive")
        T, m = self.T, self.m_s
        Xs = xi[:T * m].reshape(T, m)
        diag = self.NHN.diag + _weighted_gram(self.B_i, Xs)
        diag[:-1] += _weighted_gram(self.M3, Xs[1:])
        diag[-1] += (self.G_f.T * xi[T * m:]) @ self.G_f
        sub = self.NHN.sub + _weighted_gram(self.B_i, Xs[1:], self.M3)
        return BlockTriDiagSym(diag, sub)


def build_projections(qp, basis: NullBasis) -> Projections:
    """Project the cost and inequality blocks of an augmented ``qp``."""
    if qp.n_c != qp.n_x or basis.b != qp.n_x or basis.T != qp.T:
        raise ValueError("qp must be the augmented QP matching the basis")
    B, C = basis.B_hat, basis.C
    NHN = project_hessian(basis, qp.U, qp.Q, qp.S, qp.Q_f)
    M3, B_i, G_f = project_inequalities(basis, qp.Ax_i, qp.Bc_i, qp.Ax_f)
    return Projections(basis=basis, NHN=NHN, M1=qp.Q @ B + qp.S @ C,
                       M2=qp.S.T @ B + qp.U @ C, M3=M3, B_i=B_i, G_f=G_f)
