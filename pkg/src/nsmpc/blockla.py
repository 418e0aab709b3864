"""Symmetric block-tridiagonal matrices and their block Cholesky factors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class FactorizationError(np.linalg.LinAlgError):
    """A diagonal block lost positive definiteness during block Cholesky."""

    def __init__(self, block: int):
        super().__init__(f"non-positive pivot in diagonal block {block}")
        self.block = block


@dataclass
class BlockTriDiagSym:
    """Symmetric block-tridiagonal matrix.

    ``diag`` has shape (T, b, b); ``sub`` has shape (T-1, b, b) with
    ``sub[i]`` the block in block-row ``i+1``, block-column ``i``.
    """

    diag: np.ndarray
    sub: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        self.sub = np.asarray(self.sub, dtype=float)
        if self.diag.ndim != 3 or self.diag.shape[1] != self.diag.shape[2]:
            raise ValueError(f"diag must have shape (T, b, b), got {self.diag.shape}")
        T, b = self.diag.shape[:2]
        if self.sub.shape != (max(T - 1, 0), b, b):
            raise ValueError(f"sub must have shape {(T - 1, b, b)}, got {self.sub.shape}")
        self.diag = 0.5 * (self.diag + self.diag.transpose(0, 2, 1))

    @classmethod
    def zeros(cls, T: int, b: int) -> "BlockTriDiagSym":
        return cls(np.zeros((T, b, b)), np.zeros((max(T - 1, 0), b, b)))

    @property
    def T(self) -> int:
        return self.diag.shape[0]

    @property
    def b(self) -> int:
        return self.diag.shape[1]

    def copy(self) -> "BlockTriDiagSym":
        return BlockTriDiagSym(self.diag.copy(), self.sub.copy())

    def dense(self) -> np.ndarray:
        T, b = self.T, self.b
        M = np.zeros((T * b, T * b))
        for i in range(T):
            M[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
        for i in range(T - 1):
            M[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.sub[i]
            M[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = self.sub[i].T
        return M

    def matvec(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float).reshape(self.T, self.b)
        out = np.einsum("kij,kj->ki", self.diag, V)
        out[1:] += np.einsum("kij,kj->ki", self.sub, V[:-1])
        out[:-1] += np.einsum("kji,kj->ki", self.sub, V[1:])
        return out.ravel()


@dataclass
class BlockCholFactor:
    """Lower block-bidiagonal ``L`` with ``L L^T`` equal to the source matrix."""

    diag_L: np.ndarray
    subdiag_L: np.ndarray

    @property
    def T(self) -> int:
        return self.diag_L.shape[0]

    @property
    def b(self) -> int:
        return self.diag_L.shape[1]

    def dense(self) -> np.ndarray:
        T, b = self.T, self.b
        L = np.zeros((T * b, T * b))
        for i in range(T):
            L[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag_L[i]
        for i in range(T - 1):
            L[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.subdiag_L[i]
        return L


def block_cholesky(Y: BlockTriDiagSym, shift: float = 0.0) -> BlockCholFactor:
    """Factor ``Y + shift*I = L L^T`` stage by stage.

    Raises :class:`FactorizationError` carrying the failing block index.
    """
    T, b = Y.T, Y.b
    D = np.empty_like(Y.diag)
    E = np.empty_like(Y.sub)
    eye = shift * np.eye(b)
    for i in range(T):
        block = Y.diag[i] + eye
        if i > 0:
            # L_{i,i-1} L_{i-1,i-1}^T = Y_{i,i-1}
            E[i - 1] = solve_triangular(D[i - 1], Y.sub[i - 1].T, lower=True,
                                        check_finite=False).T
            block = block - E[i - 1] @ E[i - 1].T
        try:
            D[i] = np.linalg.cholesky(block)
        except np.linalg.LinAlgError:
            raise FactorizationError(i) from None
    return BlockCholFactor(D, E)


def block_solve(L: BlockCholFactor, rhs) -> np.ndarray:
    """Solve ``L L^T z = rhs`` by a forward and a backward block sweep."""
    T, b = L.T, L.b
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (T * b,):
        raise ValueError(f"rhs must have length {T * b}, got shape {rhs.shape}")
    z = rhs.reshape(T, b).copy()
    for i in range(T):
        if i > 0:
            z[i] -= L.subdiag_L[i - 1] @ z[i - 1]
        z[i] = solve_triangular(L.diag_L[i], z[i], lower=True, check_finite=False)
    for i in range(T - 1, -1, -1):
        if i < T - 1:
            z[i] -= L.subdiag_L[i].T @ z[i + 1]
        z[i] = solve_triangular(L.diag_L[i], z[i], lower=True, trans="T",
                                check_finite=False)
    return z.ravel()


def block_tridiag_from_products(T: int, b: int, parts) -> BlockTriDiagSym:
    """Accumulate stage-local quadratic forms into block-tridiagonal storage.

    Each part is ``(k, G_prev, G_cur, W)``: a stage whose local variables are
    ``G_prev z[k-1] + G_cur z[k]`` (``G_prev`` may be None) and whose local
    weight is the symmetric matrix ``W`` (a 1-D ``W`` is read as a diagonal).
    The result is the sum of ``G^T W G`` over all parts.
    """
    Y = BlockTriDiagSym.zeros(T, b)
    for k, G_prev, G_cur, W in parts:
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = np.diag(W)
        if G_cur is not None:
            G_cur = np.asarray(G_cur, dtype=float)
            if G_cur.shape != (W.shape[0], b):
                raise ValueError(f"stage {k}: G_cur shape {G_cur.shape} vs weight {W.shape}")
            Y.diag[k] += G_cur.T @ W @ G_cur
        if G_prev is not None:
            if k == 0:
                raise ValueError("stage 0 has no previous block column")
            G_prev = np.asarray(G_prev, dtype=float)
            if G_prev.shape != (W.shape[0], b):
                raise ValueError(f"stage {k}: G_prev shape {G_prev.shape} vs weight {W.shape}")
            Y.diag[k - 1] += G_prev.T @ W @ G_prev
            if G_cur is not None:
                Y.sub[k - 1] += G_cur.T @ W @ G_prev
    Y.diag = 0.5 * (Y.diag + Y.diag.transpose(0, 2, 1))
    return Y
