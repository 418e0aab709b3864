"""Virtual controls: pad the transfer matrix to a square, invertible one."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class RankError(ValueError):
    pass


@dataclass(frozen=True)
class Augmentation:
    """Square transfer matrix ``B_hat = [B_ue, B_ustar] = Q_hat @ R_hat``.

    The first ``n_u`` controls of the augmented vector are the original ones,
    the trailing ``n_ustar`` are virtual.
    """

    B_hat: np.ndarray
    Q_hat: np.ndarray
    R_hat: np.ndarray
    n_u: int
    n_ustar: int
    r_min: float
    U_hat: np.ndarray

    @property
    def n_x(self) -> int:
        return self.B_hat.shape[0]

    @property
    def u_index(self) -> np.ndarray:
        return np.arange(self.n_u)

    @property
    def ustar_index(self) -> np.ndarray:
        return np.arange(self.n_u, self.n_x)

    @property
    def kappa(self) -> float:
        """Diagonal-ratio condition estimate of ``B_hat``."""
        d = np.abs(np.diag(self.R_hat))
        return float(d.max() / d.min())

    def solve(self, rhs) -> np.ndarray:
        return solve_Bhat(self, rhs)


def build(B_ue, U_ctl=None, virtual_weight: float = 1.0) -> Augmentation:
    """Append ``n_x - n_u`` virtual controls to ``B_ue``.

    The new columns are the orthogonal complement ``Q_2`` of ``range(B_ue)``
    scaled by the smallest ``|R_jj|`` of ``B_ue = [Q_1 Q_2][R; 0]``.
    """
    B = np.asarray(B_ue, dtype=float)
    n_x, n_u = B.shape
    if n_u > n_x:
        raise RankError(f"n_u={n_u} exceeds n_x={n_x}")
    Qf, Rf = np.linalg.qr(B, mode="complete")
    R = Rf[:n_u]
    d = np.abs(np.diag(R))
    if d.min() <= 1e-12 * max(np.linalg.norm(B), 1e-300):
        raise RankError("B_ue is rank deficient")
    r_min = float(d.min())
    n_ustar = n_x - n_u
    R_hat = np.zeros((n_x, n_x))
    R_hat[:n_u, :n_u] = R
    R_hat[n_u:, n_u:] = r_min * np.eye(n_ustar)
    B_hat = np.hstack([B, Qf[:, n_u:] * r_min])
    U = np.eye(n_u) if U_ctl is None else np.asarray(U_ctl, dtype=float)
    U_hat = np.zeros((n_x, n_x))
    U_hat[:n_u, :n_u] = U
    U_hat[n_u:, n_u:] = virtual_weight * np.eye(n_ustar)
    for a in (B_hat, Qf, R_hat, U_hat):
        a.setflags(write=False)
    return Augmentation(B_hat=B_hat, Q_hat=Qf, R_hat=R_hat, n_u=n_u,
                        n_ustar=n_ustar, r_min=r_min, U_hat=U_hat)


def solve_Bhat(aug: Augmentation, rhs) -> np.ndarray:
    """``B_hat^{-1} rhs`` as ``R_hat^{-1} (Q_hat^T rhs)``."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != aug.n_x:
        raise ValueError(f"rhs must have {aug.n_x} rows, got shape {rhs.shape}")
    return solve_triangular(aug.R_hat, aug.Q_hat.T @ rhs, check_finite=False)
