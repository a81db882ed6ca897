"""Regularization-theory harnesses.

Four experiment families, each tied to a quantitative certificate:

* parameter choice: pick lam(delta) so the denoiser's Lipschitz bound stays
  below M/(M + eta(delta)) with eta the discrepancy's equicontinuity modulus
  at noise level delta; realized by monotone bisection on the family's
  contraction margin (bound <= M/(M+eta) iff margin >= eta/(M+eta));
* stability: the fixed points at two data vectors differ by at most
  s * L/(1-L) times the gradient gap between the data, verified pair by pair;
* convergence: along delta_k -> 0 with lam_k chosen by the rule, the
  reconstructions approach the oracle-predicted limit (minimum-norm solution
  for the quadratic proximal family);
* limit characterization: at the study tail the rescaled denoiser residual
  H(x*) is orthogonal to ker(A) and the inversion identity
  (Phi^{-1}(x_k) - x_k) = -s A*(A x_k - y_k) holds to solver accuracy.

Weak convergence is tested as norm convergence, which is equivalent in this
finite-dimensional model.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .denoisers import Denoiser
from .discrepancy import LeastSquares, StepConfig, equicontinuity_gap
from .linops import LinearOperator, as_vector, norm, project_kernel, pseudo_solve, svd_small
from .solver import PnPProblem, solve_fbs


class ParameterChoiceError(ValueError):
    pass


class StabilityViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ParameterChoice:
    """lam(delta) rule keeping Lip(Phi(lam, .)) <= M/(M + eta(delta))."""

    modulus: Callable[[float], float]
    M: float = 1.0
    lam_floor: float = 1e-9
    lam_ceil: float = 1e6
    bisection_iters: int = 200

    def __post_init__(self):
        if self.M <= 0:
            raise ValueError("M must be positive")


def choose_lambda(pc: ParameterChoice, d: Denoiser, delta: float) -> float:
    """Smallest lam (to bisection accuracy) with margin(lam) >= eta/(M+eta).

    Monotone in delta and -> lam_floor as delta -> 0. Requires the family's
    margin to be continuous, increasing in lam and to vanish as lam -> 0 on
    the search interval.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    eta = float(pc.modulus(delta)) if delta > 0 else 0.0
    if eta <= 0.0:
        return pc.lam_floor
    target = eta / (pc.M + eta)

    hi = 1.0
    while d.contraction_margin(hi) < target:
        hi *= 2.0
        if hi > pc.lam_ceil:
            raise ParameterChoiceError(
                f"Lipschitz cap {1 - target:.6g} unachievable below lam={pc.lam_ceil}"
            )
    lo = pc.lam_floor
    if d.contraction_margin(lo) >= target:
        return lo
    for _ in range(pc.bisection_iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if d.contraction_margin(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def stability_experiment(p: PnPProblem, y1, y2, tol: float = 1e-10,
                         gap_samples=None):
    """Measure ||PnP(lam, y1) - PnP(lam, y2)|| against the certified bound
    s * L/(1-L) * sup_x ||grad(x, y1) - grad(x, y2)||.

    Returns (lhs, rhs); raises StabilityViolation if the measured gap exceeds
    rhs * (1 + 1e-6) + 2 * tol (solver inaccuracy allowance).
    """
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    x1 = solve_fbs(replace(p, y=y1), tol=tol).x_star
    x2 = solve_fbs(replace(p, y=y2), tol=tol).x_star
    lhs = norm(x1 - x2)
    if gap_samples is None:
        gap_samples = [np.zeros(p.dim())]
    gap = equicontinuity_gap(p.D, y1, y2, gap_samples)
    lip = p.certificate
    rhs = p.cfg.s * lip / p.margin * gap
    if lhs > rhs * (1.0 + 1e-6) + 2.0 * tol:
        raise StabilityViolation(
            f"stability bound violated: lhs={lhs:.6e} > rhs={rhs:.6e} (+slack)"
        )
    return lhs, rhs


@dataclass(frozen=True)
class ConvergenceStudy:
    """Noise sweep y_k = A x_dagger + delta_k * unit noise, solved at
    lam_k from the parameter-choice rule."""

    op: LinearOperator
    x_dagger: np.ndarray
    d: Denoiser
    cfg: StepConfig
    deltas: np.ndarray
    seed: int = 0
    solver_tol: float = 1e-10
    e_radius: float | None = None  # bounded-deviation set; limit should lie inside

    def __post_init__(self):
        object.__setattr__(self, "x_dagger", as_vector(self.x_dagger, self.op.in_dim))
        object.__setattr__(self, "deltas", np.asarray(self.deltas, dtype=np.float64))
        if np.any(self.deltas <= 0):
            raise ValueError("noise levels must be positive")

    def exact_data(self) -> np.ndarray:
        return self.op.apply(self.x_dagger)


@dataclass
class StudyRecord:
    k: int
    delta: float
    lam: float
    iterations: int
    error: float
    x_norm: float
    identity_residual: float | None
    banach_bound: int | None
    empirical_rate: float
    certificate: float

    def to_dict(self):
        return {
            "k": self.k,
            "delta": self.delta,
            "lam": self.lam,
            "iterations": self.iterations,
            "error": self.error,
            "x_norm": self.x_norm,
            "identity_residual": self.identity_residual,
            "banach_bound": self.banach_bound,
            "empirical_rate": self.empirical_rate,
            "certificate": self.certificate,
        }


@dataclass
class StudyReport:
    records: list
    prediction_kind: str
    limit_norm: float
    error_ratio: float      # final error / initial error
    log_error_slope: float  # least-squares slope over the last half
    max_x_norm: float
    norm_bound: float       # s*M + ||limit|| + slack
    bounded: bool
    trend_decreasing: bool
    limit_in_e_set: bool | None

    def to_dict(self):
        return {
            "records": [r.to_dict() for r in self.records],
            "prediction_kind": self.prediction_kind,
            "limit_norm": self.limit_norm,
            "error_ratio": self.error_ratio,
            "log_error_slope": self.log_error_slope,
            "max_x_norm": self.max_x_norm,
            "norm_bound": self.norm_bound,
            "bounded": self.bounded,
            "trend_decreasing": self.trend_decreasing,
            "limit_in_e_set": self.limit_in_e_set,
        }


@dataclass
class LimitPrediction:
    kind: str  # "minimum-norm" | "l1-extremes" | "unavailable"
    points: list

    @property
    def available(self) -> bool:
        return self.kind != "unavailable"

    def distance(self, x) -> float:
        """Distance from x to the predicted set (nearest point for the
        enumerated case; callers accept any convex combination, so this is
        an upper bound on the true distance to the solution face)."""
        if not self.points:
            return math.inf
        return min(norm(as_vector(x) - pt) for pt in self.points)


def limit_oracle(A: LinearOperator, y, family) -> LimitPrediction:
    """Predicted zero-noise limit per denoiser family.

    Quadratic proximal families converge to the minimum-norm solution A^+ y.
    Soft-threshold proximal families converge into the l1-minimizing face;
    its extreme points are enumerated exactly for small dense problems.
    An invertible A forces the unique solution for every family.

    Non-dense operators within the oracle size limit are materialized first.
    """
    y = as_vector(y, A.out_dim)
    if A.kind != "dense-matrix":
        from .linops import SVD_ORACLE_LIMIT, DenseOperator

        if max(A.in_dim, A.out_dim) > SVD_ORACLE_LIMIT:
            return LimitPrediction("unavailable", [])
        A = DenseOperator.from_operator(A)
    dec = svd_small(A)
    tol = max(A.in_dim, A.out_dim) * np.finfo(np.float64).eps * max(dec.s[0], 1e-300)
    rank = int(np.sum(dec.s > tol))
    if rank == A.in_dim:
        return LimitPrediction("minimum-norm", [pseudo_solve(A, y)])

    name = family if isinstance(family, str) else _family_name(family)
    if name == "prox-quadratic":
        return LimitPrediction("minimum-norm", [pseudo_solve(A, y)])
    if name == "soft-threshold":
        if A.in_dim > 10:
            return LimitPrediction("unavailable", [])
        pts = _l1_vertices(A.matrix, y, rank)
        return LimitPrediction("l1-extremes", pts)
    return LimitPrediction("unavailable", [])


def _family_name(d: Denoiser) -> str:
    base = d
    while getattr(base, "base", None) is not None:
        base = base.base
    return base.family


def _l1_vertices(A: np.ndarray, y: np.ndarray, rank: int, tol: float = 1e-9):
    """Extreme points of argmin ||x||_1 s.t. Ax = y by basic-solution
    enumeration over rank-sized column subsets (vertex supports are
    independent column sets, so every vertex appears)."""
    m, n = A.shape
    if rank == 0:
        return [np.zeros(n)] if norm(y) <= tol else []
    best = math.inf
    pts: dict[tuple, np.ndarray] = {}
    scale = 1.0 + norm(y)
    for S in itertools.combinations(range(n), rank):
        AS = A[:, S]
        svals = np.linalg.svd(AS, compute_uv=False)
        if svals[0] <= 0 or svals[-1] / svals[0] < 1e-10:
            continue
        z, *_ = np.linalg.lstsq(AS, y, rcond=None)
        if norm(AS @ z - y) > tol * scale:
            continue
        x = np.zeros(n)
        x[list(S)] = z
        v = float(np.abs(x).sum())
        if v < best - tol * (1.0 + abs(best if math.isfinite(best) else 0.0)):
            best = v
            pts = {}
        if abs(v - best) <= tol * (1.0 + best):
            key = tuple(np.round(x, 8))
            pts[key] = x
    return list(pts.values())


def run_convergence_study(cs: ConvergenceStudy, pc: ParameterChoice,
                          norm_slack: float | None = None) -> StudyReport:
    """Execute the noise sweep and assemble the acceptance evidence.

    Trend criterion: the least-squares slope of log error against k over the
    last half of the sweep must be negative (the theory guarantees
    subsequential convergence, not monotonicity).
    """
    y = cs.exact_data()
    D = LeastSquares(cs.op)
    prediction = limit_oracle(cs.op, y, cs.d)
    if not prediction.available:
        raise ValueError("no limit oracle for this denoiser family")
    limit_norm = min(norm(pt) for pt in prediction.points)

    rng = np.random.default_rng(cs.seed)
    records = []
    for k, delta in enumerate(cs.deltas, start=1):
        g = rng.standard_normal(cs.op.out_dim)
        g_norm = norm(g)
        noise = (delta / g_norm) * g if g_norm > 0 else np.zeros_like(g)
        y_k = y + noise
        lam_k = choose_lambda(pc, cs.d, float(delta))
        problem = PnPProblem(D, cs.d, lam_k, y_k, cs.cfg)
        res = solve_fbs(problem, tol=cs.solver_tol)
        x_k = res.x_star
        id_res = None
        if cs.d.has_inverse:
            lhs = cs.d.invert(lam_k, x_k) - x_k
            rhs = -cs.cfg.s * cs.op.adjoint_apply(cs.op.apply(x_k) - y_k)
            id_res = norm(lhs - rhs)
        records.append(StudyRecord(
            k=k,
            delta=float(delta),
            lam=float(lam_k),
            iterations=res.iterations,
            error=prediction.distance(x_k),
            x_norm=norm(x_k),
            identity_residual=id_res,
            banach_bound=res.banach_bound,
            empirical_rate=res.empirical_rate,
            certificate=res.certificate,
        ))

    errors = np.array([r.error for r in records])
    ks = np.arange(1, len(records) + 1, dtype=np.float64)
    half = len(records) // 2
    tail_err = np.maximum(errors[half:], 1e-300)
    slope = float(np.polyfit(ks[half:], np.log(tail_err), 1)[0])
    max_norm = max(r.x_norm for r in records)
    slack = norm_slack if norm_slack is not None else 2.0 * (1.0 + limit_norm)
    norm_bound = cs.cfg.s * pc.M + limit_norm + slack
    in_e = None
    if cs.e_radius is not None:
        in_e = bool(limit_norm <= cs.e_radius)
    return StudyReport(
        records=records,
        prediction_kind=prediction.kind,
        limit_norm=limit_norm,
        error_ratio=float(errors[-1] / errors[0]) if errors[0] > 0 else 0.0,
        log_error_slope=slope,
        max_x_norm=max_norm,
        norm_bound=norm_bound,
        bounded=bool(max_norm <= norm_bound),
        trend_decreasing=bool(slope < 0.0),
        limit_in_e_set=in_e,
    )


@dataclass
class LimitCharacterization:
    feasibility: float          # ||A x* - y||
    h_norm: float
    kernel_component: float     # ||P_ker H(x*)||
    kernel_ratio: float | None  # relative, None when H(x*) ~ 0
    identity_residual: float
    passed: bool

    def to_dict(self):
        return {
            "feasibility": self.feasibility,
            "h_norm": self.h_norm,
            "kernel_component": self.kernel_component,
            "kernel_ratio": self.kernel_ratio,
            "identity_residual": self.identity_residual,
            "passed": self.passed,
        }


def characterize_limit(A: LinearOperator, d: Denoiser, lam: float, x_star,
                       y, s: float, y_noisy=None, tol: float = 1e-3) -> LimitCharacterization:
    """Check the limiting-solution certificate at one study point.

    Reports ||A x* - y|| and the kernel component of the rescaled residual
    H_lam(x*) = (Phi(lam, .)^{-1}(x*) - x*)/lam, plus the inversion identity
    residual ||(Phi^{-1}(x*) - x*) + s A*(A x* - y_noisy)|| (y_noisy defaults
    to y). Passes when feasibility and the relative kernel component are both
    below tol.
    """
    x_star = as_vector(x_star, A.in_dim)
    y = as_vector(y, A.out_dim)
    y_n = y if y_noisy is None else as_vector(y_noisy, A.out_dim)
    if not d.has_inverse:
        raise ValueError("denoiser family exposes no inverse / residual map")

    inv = d.invert(lam, x_star)
    h = (inv - x_star) / lam
    identity = norm((inv - x_star) + s * A.adjoint_apply(A.apply(x_star) - y_n))
    h_norm = norm(h)
    kern = norm(project_kernel(A, h))
    feas = norm(A.apply(x_star) - y)
    if h_norm > 1e-12 * (1.0 + norm(x_star)):
        ratio = kern / h_norm
        passed = feas <= tol and ratio <= tol
    else:
        ratio = None
        passed = feas <= tol and kern <= tol
    return LimitCharacterization(
        feasibility=feas,
        h_norm=h_norm,
        kernel_component=kern,
        kernel_ratio=ratio,
        identity_residual=identity,
        passed=passed,
    )
