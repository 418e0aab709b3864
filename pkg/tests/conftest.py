import numpy as np
import pytest

from nsmpc.problem import MpcProblem, bound_constraints

DI_A = np.array([[1.0, 0.1], [0.0, 1.0]])
DI_B = np.array([[0.005], [0.1]])


def double_integrator(T=10, x0=(3.0, 1.0), bounds=True, **kw):
    extra = {}
    if bounds:
        A_xi, B_ui, b = bound_constraints(2, 1)
        extra = dict(A_xi=A_xi, B_ui=B_ui, b_xui=b)
    extra.update(kw)
    return MpcProblem(A_xe=DI_A, B_ue=DI_B, Q=np.eye(2), U_ctl=np.eye(1), T=T,
                      x0=np.asarray(x0, dtype=float), **extra)


def random_problem(rng, n_x=4, n_u=2, T=5, cross=True, bounds=True):
    """Random well-posed problem with every optional term populated."""
    A = rng.standard_normal((n_x, n_x))
    A /= np.abs(np.linalg.eigvals(A)).max()
    B = rng.standard_normal((n_x, n_u))
    M = rng.standard_normal((n_x + n_u, n_x + n_u))
    Hs = M @ M.T + (n_x + n_u) * np.eye(n_x + n_u)
    kw = {}
    if bounds:
        A_xi, B_ui, b = bound_constraints(n_x, n_u)
        kw = dict(A_xi=A_xi, B_ui=B_ui, b_xui=b)
    return MpcProblem(
        A_xe=A, B_ue=B, Q=Hs[:n_x, :n_x], U_ctl=Hs[n_x:, n_x:], T=T,
        x0=rng.uniform(-1, 1, n_x), S=Hs[:n_x, n_x:] if cross else None,
        q=rng.standard_normal(n_x), r=rng.standard_normal(n_u),
        q_f=rng.standard_normal(n_x), c=0.1 * rng.standard_normal(n_x), **kw)


def dense_assemble(prob, B=None, U=None, extra_ctl=0):
    """Straightforward dense (H, g, A_e, b_e, A_i, b_i) built from index arithmetic.

    With ``B``/``U`` the control block is replaced by the augmented one and the
    virtual rows ``u* >= 0``, ``-u* >= 0`` are appended to every stage.
    """
    nx, T = prob.n_x, prob.T
    nu = prob.n_u
    B = prob.B_ue if B is None else B
    nc = B.shape[1]
    Uc = prob.U_ctl if U is None else U
    S = np.hstack([prob.S, np.zeros((nx, nc - nu))])
    r = np.concatenate([prob.r, np.zeros(nc - nu)])
    st = nc + nx
    n = T * st
    iu = lambda k: slice(k * st, k * st + nc)            # u(k)
    ix = lambda k: slice((k - 1) * st + nc, k * st)       # x(k), k >= 1
    H = np.zeros((n, n))
    g = np.zeros(n)
    for k in range(T):
        H[iu(k), iu(k)] = Uc
        g[iu(k)] = r
        if k > 0:
            H[ix(k), ix(k)] = prob.Q
            H[ix(k), iu(k)] = S
            H[iu(k), ix(k)] = S.T
            g[ix(k)] = prob.q
    H[ix(T), ix(T)] = prob.Q_f
    g[ix(T)] = prob.q_f
    g[iu(0)] += S.T @ prob.x0
    Ae = np.zeros((T * nx, n))
    be = np.zeros(T * nx)
    for k in range(T):
        rows = slice(k * nx, (k + 1) * nx)
        Ae[rows, ix(k + 1)] = np.eye(nx)
        Ae[rows, iu(k)] = -B
        if k > 0:
            Ae[rows, ix(k)] = -prob.A_xe
        be[rows] = prob.c + (prob.A_xe @ prob.x0 if k == 0 else 0)
    ns = nc - nu
    m = prob.m_i
    Bui = np.hstack([prob.B_ui, np.zeros((m, ns))])
    if ns:
        Bui = np.vstack([Bui, np.hstack([np.zeros((ns, nu)), np.eye(ns)]),
                         np.hstack([np.zeros((ns, nu)), -np.eye(ns)])])
    Axi = np.vstack([prob.A_xi, np.zeros((2 * ns, nx))])
    ms = m + 2 * ns
    Ai = np.zeros((T * ms + m, n))
    bi = np.zeros(T * ms + m)
    bs = np.concatenate([prob.b_xui, np.zeros(2 * ns)])
    for k in range(T):
        rows = slice(k * ms, (k + 1) * ms)
        Ai[rows, iu(k)] = Bui
        bi[rows] = bs
        if k > 0:
            Ai[rows, ix(k)] = Axi
        else:
            bi[rows] -= Axi @ prob.x0
    Ai[T * ms:, ix(T)] = prob.A_xi
    bi[T * ms:] = prob.b_xui_f
    return H, g, Ae, be, Ai, bi


def dense_eq_qp(H, g, Ae, be):
    """Minimiser of 0.5 y'Hy + g'y subject to Ae y = be via the dense KKT system."""
    n, me = H.shape[0], Ae.shape[0]
    K = np.block([[H, -Ae.T], [-Ae, np.zeros((me, me))]])
    sol = np.linalg.solve(K, np.concatenate([-g, -be]))
    return sol[:n], sol[n:]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
