"""Structured QR of the dynamics constraints, feasible start, dual recovery.

Rows of ``A_e`` read ``-A x(k) - B u(k) + x(k+1)``.  A square invertible
"basic" column subset is factored; the remaining (free) columns are set to
zero in the feasible point.  The basic subset depends on the conditioning of
``B`` and ``A`` (diagonal ratio of their triangular QR factors):

* ``P1``: all controls ``u(0..T-1)``; the basic matrix is ``diag(-B)``.
* ``P2``: ``u(0), x(1), ..., x(T-1)``; upper block-bidiagonal with diagonal
  ``(-B, -A, ..., -A)`` and identity super-diagonal.
* ``P3``: all states ``x(1..T)``; lower block-bidiagonal with identity
  diagonal and ``-A`` sub-diagonal, factored by a banded Householder QR.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .augment import Augmentation, solve_Bhat

DEFAULT_XI = 10.0


def diag_ratio(R) -> float:
    d = np.abs(np.diag(R))
    return float(d.max() / d.min()) if d.min() > 0 else np.inf


@dataclass
class StructuredQrAe:
    case: str
    kappa_B: float
    kappa_A: float
    xi: float
    T: int
    aug: Augmentation
    A: np.ndarray
    Q_A: Optional[np.ndarray] = None
    R_A: Optional[np.ndarray] = None
    # banded QR (P3): panel reflectors, diagonal and super-diagonal R blocks
    panels: Optional[np.ndarray] = None
    Q_last: Optional[np.ndarray] = None
    R_diag: Optional[np.ndarray] = None
    R_sup: Optional[np.ndarray] = None
    n_feasible_solves: int = field(default=0, compare=False)

    @property
    def b(self) -> int:
        return self.A.shape[0]

    def _Ainv(self, v):
        return solve_triangular(self.R_A, self.Q_A.T @ v, check_finite=False)

    def _AinvT(self, v):
        return self.Q_A @ solve_triangular(self.R_A, v, trans="T", check_finite=False)

    def _BinvT(self, v):
        return self.aug.Q_hat @ solve_triangular(self.aug.R_hat, v, trans="T",
                                                 check_finite=False)


def factorize_Ae(aug: Augmentation, A_xe, T: int, xi: float = DEFAULT_XI) -> StructuredQrAe:
    A = np.asarray(A_xe, dtype=float)
    Q_A, R_A = np.linalg.qr(A)
    kB, kA = aug.kappa, diag_ratio(R_A)
    if kB < xi:
        return StructuredQrAe("P1", kB, kA, xi, T, aug, A)
    if kA < xi:
        return StructuredQrAe("P2", kB, kA, xi, T, aug, A, Q_A=Q_A, R_A=R_A)
    return _banded_qr(StructuredQrAe("P3", kB, kA, xi, T, aug, A))


def _banded_qr(fac: StructuredQrAe) -> StructuredQrAe:
    T, b, A = fac.T, fac.b, fac.A
    panels = np.empty((max(T - 1, 0), 2 * b, 2 * b))
    R_diag = np.empty((T, b, b))
    R_sup = np.empty((max(T - 1, 0), b, b))
    top = np.eye(b)
    for j in range(T - 1):
        Qj, Rj = np.linalg.qr(np.vstack([top, -A]), mode="complete")
        panels[j] = Qj
        R_diag[j] = Rj[:b]
        # next block column holds [0; I] in block rows j, j+1
        nxt = Qj[b:].T
        R_sup[j] = nxt[:b]
        top = nxt[b:]
    Q_last, R_diag[T - 1] = np.linalg.qr(top)
    fac.panels, fac.Q_last, fac.R_diag, fac.R_sup = panels, Q_last, R_diag, R_sup
    return fac


def _banded_solve(fac: StructuredQrAe, rhs):
    """Solve ``M x = rhs`` for the P3 basic matrix, rhs of shape (T, b)."""
    T, b = fac.T, fac.b
    t = np.array(rhs, dtype=float)
    for j in range(T - 1):
        t[j:j + 2] = (fac.panels[j].T @ t[j:j + 2].ravel()).reshape(2, b)
    t[T - 1] = fac.Q_last.T @ t[T - 1]
    x = np.empty_like(t)
    x[T - 1] = solve_triangular(fac.R_diag[T - 1], t[T - 1], check_finite=False)
    for j in range(T - 2, -1, -1):
        x[j] = solve_triangular(fac.R_diag[j], t[j] - fac.R_sup[j] @ x[j + 1],
                                check_finite=False)
    return x


def _banded_solve_T(fac: StructuredQrAe, rhs):
    """Solve ``M^T v = rhs`` for the P3 basic matrix."""
    T, b = fac.T, fac.b
    rhs = np.asarray(rhs, dtype=float)
    t = np.empty_like(rhs)
    for j in range(T):
        r = rhs[j] - (fac.R_sup[j - 1].T @ t[j - 1] if j > 0 else 0.0)
        t[j] = solve_triangular(fac.R_diag[j], r, trans="T", check_finite=False)
    t[T - 1] = fac.Q_last @ t[T - 1]
    for j in range(T - 2, -1, -1):
        t[j:j + 2] = (fac.panels[j] @ t[j:j + 2].ravel()).reshape(2, b)
    return t


def solve_feasible_point(fac: StructuredQrAe, b_e) -> np.ndarray:
    """A point ``y`` with ``A_e y = b_e``; free variables are zero."""
    T, b = fac.T, fac.b
    Bv = np.asarray(b_e, dtype=float).reshape(T, b)
    U = np.zeros((T, b))
    X = np.zeros((T, b))
    if fac.case == "P1":
        U[:] = -solve_Bhat(fac.aug, Bv.T).T
    elif fac.case == "P2":
        # X[k] holds x(k+1); x(T) is free
        for k in range(T - 1, 0, -1):
            X[k - 1] = fac._Ainv(X[k] - Bv[k])
        U[0] = solve_Bhat(fac.aug, X[0] - Bv[0])
    else:
        X[:] = _banded_solve(fac, Bv)
    fac.n_feasible_solves += 1
    return np.hstack([U, X]).ravel()


def recover_equality_duals(fac: StructuredQrAe, rhs) -> np.ndarray:
    """Solve ``A_e^T v = rhs`` on the basic columns.

    Exact whenever ``rhs`` lies in the range of ``A_e^T``, which holds for
    ``Phi dx - r_1`` at a Newton step and for the stationarity residual at
    a KKT point.
    """
    T, b = fac.T, fac.b
    R = np.asarray(rhs, dtype=float).reshape(T, 2 * b)
    ru, rx = R[:, :b], R[:, b:]
    v = np.empty((T, b))
    if fac.case == "P1":
        v[:] = -fac._BinvT(ru.T).T
    elif fac.case == "P2":
        v[0] = -fac._BinvT(ru[0])
        for j in range(1, T):
            v[j] = fac._AinvT(v[j - 1] - rx[j - 1])
    else:
        v[:] = _banded_solve_T(fac, rx)
    return v.ravel()
