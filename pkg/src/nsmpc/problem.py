"""Receding-horizon problem data and the block-structured QP it induces.

Variable ordering of the QP is stage-major::

    y = [u(0), x(1), u(1), x(2), ..., u(T-1), x(T)]

so ``y.reshape(T, n_c + n_x)`` yields one row per stage holding the control
applied at that stage followed by the state it produces.  The objective is
``0.5 * y^T H y + g^T y``, equalities read ``A_e y = b_e`` and inequalities
``A_i y >= b_i``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class ProblemError(ValueError):
    """Invalid problem data.  ``field`` names the offending input."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _matrix(name, value, shape):
    a = np.asarray(value, dtype=float)
    if a.size == 0 and 0 in shape:
        a = a.reshape(shape)
    if a.shape != shape:
        raise ProblemError(name, f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ProblemError(name, "contains non-finite entries")
    return a


def _check_symmetric(name, M):
    scale = max(1.0, np.abs(M).max(initial=0.0))
    if np.abs(M - M.T).max(initial=0.0) > 1e-10 * scale:
        raise ProblemError(name, "must be symmetric")


@dataclass(frozen=True)
class MpcProblem:
    """Time-invariant linear MPC problem.

    Dynamics ``x(t+1) = A_xe x(t) + B_ue u(t) + c``, stage cost
    ``0.5 [x; u]^T [[Q, S], [S^T, U_ctl]] [x; u] + q^T x + r^T u``, terminal
    cost ``0.5 x^T Q_f x + q_f^T x``, and stage constraints
    ``A_xi x + B_ui u >= b_xui`` (terminal: ``A_xi x(T) >= b_xui_f``).
    """

    A_xe: np.ndarray
    B_ue: np.ndarray
    Q: np.ndarray
    U_ctl: np.ndarray
    T: int
    x0: np.ndarray
    S: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    Q_f: Optional[np.ndarray] = None
    q_f: Optional[np.ndarray] = None
    A_xi: Optional[np.ndarray] = None
    B_ui: Optional[np.ndarray] = None
    b_xui: Optional[np.ndarray] = None
    b_xui_f: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.A_xe, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ProblemError("A_xe", f"must be square, got shape {A.shape}")
        n_x = A.shape[0]
        B = np.asarray(self.B_ue, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n_x, -1)
        if B.ndim != 2 or B.shape[0] != n_x:
            raise ProblemError("B_ue", f"expected {n_x} rows, got shape {B.shape}")
        n_u = B.shape[1]
        if n_u < 1:
            raise ProblemError("B_ue", "needs at least one control")
        if n_u > n_x:
            raise ProblemError("B_ue", f"n_u={n_u} > n_x={n_x} is not supported")
        if int(self.T) != self.T or int(self.T) < 1:
            raise ProblemError("T", f"horizon must be a positive integer, got {self.T}")

        def vec(name, value, n, default=None):
            if value is None:
                value = np.zeros(n) if default is None else default
            return _matrix(name, np.asarray(value, dtype=float).reshape(-1), (n,))

        Q = _matrix("Q", self.Q, (n_x, n_x))
        U = _matrix("U_ctl", self.U_ctl, (n_u, n_u))
        S = _matrix("S", np.zeros((n_x, n_u)) if self.S is None else self.S, (n_x, n_u))
        q = vec("q", self.q, n_x)
        Q_f = _matrix("Q_f", Q if self.Q_f is None else self.Q_f, (n_x, n_x))
        q_f = vec("q_f", self.q_f, n_x, default=q)

        if self.A_xi is None and self.B_ui is None:
            A_xi, B_ui = np.zeros((0, n_x)), np.zeros((0, n_u))
        else:
            A_xi = np.asarray(self.A_xi if self.A_xi is not None else [], dtype=float)
            m_i = A_xi.shape[0] if A_xi.ndim == 2 else np.asarray(self.B_ui).shape[0]
            A_xi = _matrix("A_xi", A_xi if A_xi.size else np.zeros((m_i, n_x)), (m_i, n_x))
            B_ui = np.asarray(self.B_ui if self.B_ui is not None else [], dtype=float)
            B_ui = _matrix("B_ui", B_ui if B_ui.size else np.zeros((m_i, n_u)), (m_i, n_u))
        m_i = A_xi.shape[0]
        b = vec("b_xui", self.b_xui, m_i)
        b_f = vec("b_xui_f", self.b_xui_f, m_i, default=b)

        for name, M in (("Q", Q), ("U_ctl", U), ("Q_f", Q_f)):
            _check_symmetric(name, M)
        for name, M in (("Q", Q), ("U_ctl", U)):
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ProblemError(name, "must be positive definite") from None
        if np.linalg.eigvalsh(Q_f).min() < -1e-10 * max(1.0, np.abs(Q_f).max()):
            raise ProblemError("Q_f", "must be positive semidefinite")
        if np.linalg.matrix_rank(A) < n_x:
            raise ProblemError("A_xe", "must have full rank")
        if np.linalg.matrix_rank(B) < n_u:
            raise ProblemError("B_ue", "must have full column rank")

        values = dict(
            A_xe=A, B_ue=B, Q=Q, U_ctl=U, S=S, q=q, r=vec("r", self.r, n_u),
            Q_f=Q_f, q_f=q_f, A_xi=A_xi, B_ui=B_ui, b_xui=b, b_xui_f=b_f,
            c=vec("c", self.c, n_x), x0=vec("x0", self.x0, n_x),
        )
        for k, v in values.items():
            object.__setattr__(self, k, _frozen(v))
        object.__setattr__(self, "T", int(self.T))

    @property
    def n_x(self) -> int:
        return self.A_xe.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_ue.shape[1]

    @property
    def m_i(self) -> int:
        return self.A_xi.shape[0]

    def with_x0(self, x0) -> "MpcProblem":
        return replace(self, x0=np.asarray(x0, dtype=float))

    def step(self, x, u) -> np.ndarray:
        """Propagate the plant one step."""
        return self.A_xe @ x + self.B_ue @ u + self.c

    # -- JSON --------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n_x": self.n_x, "n_u": self.n_u, "T": self.T,
            "A_xe": self.A_xe.tolist(), "B_ue": self.B_ue.tolist(),
            "Q": self.Q.tolist(), "U": self.U_ctl.tolist(), "S": self.S.tolist(),
            "q": self.q.tolist(), "r": self.r.tolist(),
            "Q_f": self.Q_f.tolist(), "q_f": self.q_f.tolist(),
            "A_xi": self.A_xi.tolist(), "B_ui": self.B_ui.tolist(),
            "b_xui": self.b_xui.tolist(), "b_xui_f": self.b_xui_f.tolist(),
            "c": self.c.tolist(), "x0": self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MpcProblem":
        if "U" not in d and "U_ctl" in d:
            d = {**d, "U": d["U_ctl"]}
        for key in ("A_xe", "B_ue", "Q", "U", "T", "x0"):
            if key not in d:
                raise ProblemError(key, "missing")
        n_x = int(d.get("n_x", len(d["A_xe"])))
        prob = cls(
            A_xe=d["A_xe"], B_ue=d["B_ue"], Q=d["Q"], U_ctl=d["U"], T=d["T"],
            x0=d["x0"], S=d.get("S"), q=d.get("q"), r=d.get("r"),
            Q_f=d.get("Q_f"), q_f=d.get("q_f"), A_xi=d.get("A_xi"), B_ui=d.get("B_ui"),
            b_xui=d.get("b_xui"), b_xui_f=d.get("b_xui_f"), c=d.get("c"),
        )
        if prob.n_x != n_x:
            raise ProblemError("n_x", f"declared {n_x}, matrices give {prob.n_x}")
        if "n_u" in d and int(d["n_u"]) != prob.n_u:
            raise ProblemError("n_u", f"declared {d['n_u']}, matrices give {prob.n_u}")
        return prob

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def load(cls, path) -> "MpcProblem":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


@dataclass(frozen=True)
class StructuredQp:
    """Block QP over ``T`` stages of ``n_c`` controls and ``n_x`` states.

    Stage inequality rows are ``Ax_i x(k) + Bc_i u(k) >= b_s`` for
    ``k = 0..T-1`` (``x(0)`` moved into the right-hand side), followed by
    ``Ax_f x(T) >= b_f``.  ``n_u`` is the number of original controls; the
    trailing ``n_c - n_u`` controls are virtual.
    """

    T: int
    n_x: int
    n_c: int
    n_u: int
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    S: np.ndarray
    q: np.ndarray
    r: np.ndarray
    Q_f: np.ndarray
    q_f: np.ndarray
    c: np.ndarray
    x0: np.ndarray
    Ax_i: np.ndarray
    Bc_i: np.ndarray
    b_s: np.ndarray
    Ax_f: np.ndarray
    b_f: np.ndarray
    g: np.ndarray = field(init=False, repr=False)
    b_e: np.ndarray = field(init=False, repr=False)
    b_i: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        T, n_x, n_c = self.T, self.n_x, self.n_c
        G = np.empty((T, n_c + n_x))
        G[:, :n_c] = self.r
        G[0, :n_c] += self.S.T @ self.x0
        G[:, n_c:] = self.q
        G[-1, n_c:] = self.q_f
        be = np.tile(self.c, (T, 1)).copy()
        be[0] += self.A @ self.x0
        bs = np.tile(self.b_s, (T, 1)).copy()
        bs[0] -= self.Ax_i @ self.x0
        for name, v in (("g", G.ravel()), ("b_e", be.ravel()),
                        ("b_i", np.concatenate([bs.ravel(), self.b_f]))):
            object.__setattr__(self, name, _frozen(v))

    @property
    def stage(self) -> int:
        return self.n_c + self.n_x

    @property
    def n(self) -> int:
        return self.T * self.stage

    @property
    def m_e(self) -> int:
        return self.T * self.n_x

    @property
    def m_s(self) -> int:
        return self.Ax_i.shape[0]

    @property
    def m_i(self) -> int:
        return self.T * self.m_s + self.Ax_f.shape[0]

    def split(self, y):
        """Return (controls (T, n_c), states x(1..T) as (T, n_x)) views of y."""
        Y = np.asarray(y).reshape(self.T, self.stage)
        return Y[:, :self.n_c], Y[:, self.n_c:]

    def join(self, U, X) -> np.ndarray:
        return np.hstack([U, X]).ravel()

    def _prev_states(self, X):
        P = np.empty_like(X)
        P[0] = 0.0
        P[1:] = X[:-1]
        return P

    # -- block-wise products --------------------------------------------------

    def H_mul(self, y) -> np.ndarray:
        U, X = self.split(y)
        gU = U @ self.U + self._prev_states(X) @ self.S
        gX = np.empty_like(X)
        gX[:-1] = X[:-1] @ self.Q + U[1:] @ self.S.T
        gX[-1] = self.Q_f @ X[-1]
        return self.join(gU, gX)

    def Ae_mul(self, y) -> np.ndarray:
        U, X = self.split(y)
        return (X - U @ self.B.T - self._prev_states(X) @ self.A.T).ravel()

    def AeT_mul(self, v) -> np.ndarray:
        V = np.asarray(v).reshape(self.T, self.n_x)
        gU = -V @ self.B
        gX = V.copy()
        gX[:-1] -= V[1:] @ self.A
        return self.join(gU, gX)

    def Ai_mul(self, y) -> np.ndarray:
        U, X = self.split(y)
        st = self._prev_states(X) @ self.Ax_i.T + U @ self.Bc_i.T
        return np.concatenate([st.ravel(), self.Ax_f @ X[-1]])

    def AiT_mul(self, v) -> np.ndarray:
        v = np.asarray(v)
        ns = self.T * self.m_s
        V = v[:ns].reshape(self.T, self.m_s)
        gU = V @ self.Bc_i
        gX = np.zeros((self.T, self.n_x))
        gX[:-1] = V[1:] @ self.Ax_i
        gX[-1] += self.Ax_f.T @ v[ns:]
        return self.join(gU, gX)

    # -- dense views (tests, oracles, tiny problems) ----------------------------

    def dense_H(self) -> np.ndarray:
        n, s, nc = self.n, self.stage, self.n_c
        H = np.zeros((n, n))
        H[:nc, :nc] = self.U
        for k in range(1, self.T):
            xs = slice((k - 1) * s + nc, k * s)
            us = slice(k * s, k * s + nc)
            H[xs, xs] = self.Q
            H[xs, us] = self.S
            H[us, xs] = self.S.T
            H[us, us] = self.U
        H[n - self.n_x:, n - self.n_x:] = self.Q_f
        return H

    def dense_Ae(self) -> np.ndarray:
        return np.column_stack([self.Ae_mul(e) for e in np.eye(self.n)])

    def dense_Ai(self) -> np.ndarray:
        if self.m_i == 0:
            return np.zeros((0, self.n))
        return np.column_stack([self.Ai_mul(e) for e in np.eye(self.n)])


def assemble_qp(prob: MpcProblem, aug=None) -> StructuredQp:
    """Assemble the block QP of ``prob``.

    With an :class:`~nsmpc.augment.Augmentation` the controls are padded by
    virtual controls ``u*`` (weight ``aug.U_hat``) and every stage gains the
    rows ``u* >= 0`` and ``-u* >= 0``.  Without one the original problem is
    assembled (as used by the classical solver).
    """
    n_x, n_u, m = prob.n_x, prob.n_u, prob.m_i
    if aug is None:
        B, U, S, r = prob.B_ue, prob.U_ctl, prob.S, prob.r
        Ax_i, Bc_i, b_s = prob.A_xi, prob.B_ui, prob.b_xui
        n_c = n_u
    else:
        if aug.B_hat.shape != (n_x, n_x) or aug.n_u != n_u:
            raise ProblemError("aug", "augmentation does not match problem dimensions")
        if not np.allclose(aug.B_hat[:, :n_u], prob.B_ue, rtol=0, atol=1e-12):
            raise ProblemError("aug", "augmentation built from a different B_ue")
        n_c, ns = n_x, aug.n_ustar
        B, U = aug.B_hat, aug.U_hat
        S = np.hstack([prob.S, np.zeros((n_x, ns))])
        r = np.concatenate([prob.r, np.zeros(ns)])
        I = np.eye(ns)
        Ax_i = np.vstack([prob.A_xi, np.zeros((2 * ns, n_x))])
        Bc_i = np.block([
            [prob.B_ui, np.zeros((m, ns))],
            [np.zeros((ns, n_u)), I],
            [np.zeros((ns, n_u)), -I],
        ])
        b_s = np.concatenate([prob.b_xui, np.zeros(2 * ns)])
    return StructuredQp(
        T=prob.T, n_x=n_x, n_c=n_c, n_u=n_u, A=prob.A_xe, B=_frozen(B), Q=prob.Q,
        U=_frozen(U), S=_frozen(S), q=prob.q, r=_frozen(r), Q_f=prob.Q_f, q_f=prob.q_f,
        c=prob.c, x0=prob.x0, Ax_i=_frozen(Ax_i), Bc_i=_frozen(Bc_i), b_s=_frozen(b_s),
        Ax_f=prob.A_xi, b_f=prob.b_xui_f,
    )


def objective_value(qp: StructuredQp, y) -> float:
    """``0.5 y^T H y + g^T y`` evaluated block-wise."""
    y = np.asarray(y, dtype=float)
    if y.shape != (qp.n,):
        raise ValueError(f"y must have length {qp.n}, got shape {y.shape}")
    return float(0.5 * y @ qp.H_mul(y) + qp.g @ y)


def bound_constraints(n_x: int, n_u: int, x_max: float = 4.0, u_max: float = 0.5):
    """Box constraints ``|x| <= x_max``, ``|u| <= u_max`` as ``A_xi x + B_ui u >= b``."""
    Ix, Iu = np.eye(n_x), np.eye(n_u)
    A_xi = np.vstack([Ix, -Ix, np.zeros((2 * n_u, n_x))])
    B_ui = np.vstack([np.zeros((2 * n_x, n_u)), Iu, -Iu])
    b = np.concatenate([-x_max * np.ones(2 * n_x), -u_max * np.ones(2 * n_u)])
    return A_xi, B_ui, b


__all__ = [
    "MpcProblem", "StructuredQp", "ProblemError", "assemble_qp",
    "objective_value", "bound_constraints",
]
