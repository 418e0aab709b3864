"""Mehrotra predictor-corrector IPM on the projected normal equations.

Each Newton iteration factors ``N^T Phi N`` once (block Cholesky) and reuses
the factor for the predictor and the corrector solve.  Steps are taken in
the null space of the dynamics, so a feasible start stays feasible and the
equality multipliers are never needed.
"""
from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import augment
from .blockla import FactorizationError, block_cholesky, block_solve
from .eqinit import factorize_Ae, recover_equality_duals, solve_feasible_point
from .nullspace import build_basis, build_projections
from .problem import MpcProblem, StructuredQp, assemble_qp

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverOptions:
    eps: float = 1e-9
    eps_comp: float = 1e-10
    eps_feas: float = 1e-8
    i_max: int = 100
    tau: float = 0.995
    xi: float = 10.0
    single_alpha: bool = False
    recover_duals: bool = False
    squared_residual: bool = True
    virtual_weight: float = 1.0

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SolverOptions":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: Optional[str]) -> "SolverOptions":
        return cls.from_dict(json.loads(text) if text else None)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IpmState:
    y: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    lam_e: Optional[np.ndarray] = None
    mu: float = np.inf
    sigma: float = 0.0
    iter: int = 0


@dataclass
class SolveResult:
    status: Status
    y: np.ndarray
    u: np.ndarray
    iterations: int
    residual: float
    mu: float
    w: np.ndarray
    lam: np.ndarray
    lam_e: Optional[np.ndarray] = None
    solve_time: float = 0.0
    iter_times: List[float] = field(default_factory=list)
    factorizations: List[int] = field(default_factory=list)
    eq_residuals: List[float] = field(default_factory=list)
    primal_residual: float = np.nan
    kkt_norm: Optional[float] = None
    failed_block: Optional[int] = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def time_per_iter(self) -> float:
        return self.solve_time / max(self.iterations, 1)

    @property
    def u0(self) -> np.ndarray:
        return self.u[0]


# -- elementwise building blocks ---------------------------------------------

def predictor_F(lam, w, s) -> np.ndarray:
    """``lam + (lam * s) / w`` with ``s = b_i - A_i y``."""
    return lam + lam * s / w


def corrector_F(lam, w, s, dw_aff, dlam_aff, sigma, mu) -> np.ndarray:
    return lam + (lam * s - dlam_aff * dw_aff + sigma * mu) / w


def step_lengths(w, lam, dw, dlam, tau: float = 0.995):
    """Largest steps in (0, 1] keeping ``w`` and ``lam`` above ``(1-tau)`` of themselves."""
    def longest(v, dv):
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))
    return longest(w, dw), longest(lam, dlam)


def mehrotra_sigma(mu: float, mu_aff: float) -> float:
    if mu <= 0:
        return 0.0
    return float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))


def duality_measure(lam, w, n: int, m_total: int) -> float:
    lam, w = np.asarray(lam), np.asarray(w)
    if lam.shape != w.shape or lam.shape != (m_total,):
        raise ValueError(f"lam and w must both have length {m_total}")
    return float(lam @ w) / (n + m_total)


def convergence_check(proj_residual, mu: float, opts: SolverOptions = SolverOptions(),
                      primal_inf: float = 0.0) -> bool:
    """Projected stationarity, complementarity and inequality-feasibility test."""
    r = float(np.linalg.norm(proj_residual))
    value = r * r if opts.squared_residual else r
    return value < opts.eps and mu < opts.eps_comp and primal_inf < opts.eps_feas


def residual_r1(qp: StructuredQp, basis, y, F) -> np.ndarray:
    """``N^T (-H y - g + A_i^T F)``; the equality-multiplier term vanishes under ``N^T``."""
    return basis.apply_T(-qp.H_mul(y) - qp.g + qp.AiT_mul(F))


def _direction(qp, basis, L, base, F, lam, w, k3, comp):
    dz = block_solve(L, basis.apply_T(base + qp.AiT_mul(F)))
    dy = basis.apply(dz)
    dAiy = qp.Ai_mul(dy)
    dw = dAiy - k3
    dlam = -(comp + lam * dw) / w
    return dy, dAiy, dw, dlam


def predictor_direction(qp: StructuredQp, proj, state: IpmState):
    """Affine-scaling Newton direction ``(dy, dw, dlam)`` at ``state``.

    ``state.y`` must satisfy the dynamics constraints.
    """
    y, w, lam = state.y, state.w, state.lam
    s = qp.b_i - qp.Ai_mul(y)
    L = block_cholesky(proj.compose(lam / w))
    dy, _, dw, dlam = _direction(qp, proj.basis, L, -qp.H_mul(y) - qp.g,
                                 predictor_F(lam, w, s), lam, w, s + w, lam * w)
    return dy, dw, dlam


def initial_slacks(s):
    """Slack start ``max(1, |b_i - A_i y|)`` and unit multipliers."""
    return np.maximum(1.0, np.abs(s)), np.ones_like(s)


def _virtual_rows(qp: StructuredQp) -> np.ndarray:
    n_star = qp.n_c - qp.n_u
    mask = np.zeros(qp.m_i, dtype=bool)
    for k in range(qp.T):
        mask[(k + 1) * qp.m_s - 2 * n_star:(k + 1) * qp.m_s] = True
    return mask


def solve(qp: StructuredQp, proj, fac, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Run the null-space IPM on an augmented ``qp``."""
    t_start = time.perf_counter()
    basis = proj.basis
    n, m = qp.n, qp.m_i
    y = solve_feasible_point(fac, qp.b_e)
    s = qp.b_i - qp.Ai_mul(y)
    w, lam = initial_slacks(s)
    be_scale = 1.0 + np.abs(qp.b_e).max(initial=0.0)
    debug = log.isEnabledFor(logging.DEBUG)
    vrows = _virtual_rows(qp) if debug else None

    res = SolveResult(Status.ITER_LIMIT, y, None, 0, np.inf, np.inf, w, lam)
    lam_e = None
    for it in range(opts.i_max + 1):
        t_it = time.perf_counter()
        base = -qp.H_mul(y) - qp.g
        mu = duality_measure(lam, w, n, m)
        k3 = s + w
        dual = basis.apply_T(base + qp.AiT_mul(lam))
        primal_inf = float(np.abs(k3).max(initial=0.0))
        res.eq_residuals.append(float(np.abs(qp.Ae_mul(y) - qp.b_e).max()) / be_scale)
        res.residual, res.mu, res.primal_residual = float(np.linalg.norm(dual)), mu, primal_inf
        done = convergence_check(dual, mu, opts, primal_inf)
        if opts.recover_duals:
            lam_e = recover_equality_duals(fac, -(base + qp.AiT_mul(lam)))
            K = np.concatenate([base + qp.AeT_mul(lam_e) + qp.AiT_mul(lam),
                                qp.b_e - qp.Ae_mul(y), k3, lam * w])
            res.kkt_norm = float(np.linalg.norm(K))
            done = done or res.kkt_norm < opts.eps
        if debug and vrows.any():
            log.debug("iter %d: mu=%.3e |N^T k1|=%.3e min virtual slack=%.3e", it, mu,
                      res.residual, w[vrows].min())
        if done:
            res.status = Status.CONVERGED
            break
        if it == opts.i_max:
            break

        try:
            L = block_cholesky(proj.compose(lam / w))
        except FactorizationError as err:
            res.status, res.failed_block = Status.NUMERICAL_FAILURE, err.block
            break
        res.factorizations.append(1)

        dy, dAiy, dw_a, dlam_a = _direction(qp, basis, L, base, predictor_F(lam, w, s),
                                            lam, w, k3, lam * w)
        ap, ad = step_lengths(w, lam, dw_a, dlam_a, tau=1.0)
        if opts.single_alpha:
            ap = ad = min(ap, ad)
        mu_aff = float((w + ap * dw_a) @ (lam + ad * dlam_a)) / (n + m)
        sigma = mehrotra_sigma(mu, mu_aff)

        F = corrector_F(lam, w, s, dw_a, dlam_a, sigma, mu)
        dy, dAiy, dw, dlam = _direction(qp, basis, L, base, F, lam, w, k3,
                                        lam * w + dlam_a * dw_a - sigma * mu)
        ap, ad = step_lengths(w, lam, dw, dlam, opts.tau)
        if opts.single_alpha:
            ap = ad = min(ap, ad)
        y = y + ap * dy
        w = w + ap * dw
        lam = lam + ad * dlam
        s = qp.b_i - qp.Ai_mul(y)
        res.iterations += 1
        res.iter_times.append(time.perf_counter() - t_it)

    res.solve_time = time.perf_counter() - t_start
    res.y, res.w, res.lam, res.lam_e = y, w, lam, lam_e
    res.u = qp.split(y)[0][:, :qp.n_u].copy()
    return res


class NullSpaceSolver:
    """Setup (augmentation, basis, projections, QR of ``A_e``) plus repeated solves."""

    name = "nullspace"

    def __init__(self, prob: MpcProblem, opts: SolverOptions = SolverOptions()):
        t0 = time.perf_counter()
        self.prob, self.opts = prob, opts
        self.aug = augment.build(prob.B_ue, prob.U_ctl, opts.virtual_weight)
        self.basis = build_basis(self.aug, prob.A_xe, prob.T)
        self.qp = assemble_qp(prob, self.aug)
        self.proj = build_projections(self.qp, self.basis)
        self.fac = factorize_Ae(self.aug, prob.A_xe, prob.T, opts.xi)
        self.setup_time = time.perf_counter() - t0

    def qp_for(self, x0=None) -> StructuredQp:
        if x0 is None:
            return self.qp
        return assemble_qp(self.prob.with_x0(x0), self.aug)

    def solve(self, x0=None) -> SolveResult:
        return solve(self.qp_for(x0), self.proj, self.fac, self.opts)
