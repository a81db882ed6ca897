"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(run with `pytest tests/test_acceptance.py -v -s` to see them) and asserting
its stated tolerance and runtime budget."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from pnpreg import (
    CausalDenoiser,
    ConvergenceStudy,
    DenseOperator,
    LeastSquares,
    ParameterChoice,
    PnPProblem,
    ProxQuadratic,
    ScaledDenoiser,
    SoftThreshold,
    StepConfig,
    certify_family,
    characterize_limit,
    choose_lambda,
    closed_form_Clambda_sup,
    norm_counterpoint,
    operator_to_json,
    prox_quadratic,
    run_convergence_study,
    solve_admm,
    solve_fbs,
    stability_experiment,
)
from pnpreg.denoisers import E_RATIO

from conftest import random_dense, rank_deficient_dense
from oracles import pgd_box_ball_sup

_CACHE = {}


def _report(num, ok, detail, elapsed):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:2d}: {status} — {detail} ({elapsed:.2f}s)")


def test_criterion_01_causal_constant():
    t0 = time.perf_counter()
    worst = 0.0
    for lam in (1e-2, 1e-3):
        ratio = CausalDenoiser.deviation_margin_ratio(lam)
        worst = max(worst, abs(ratio / E_RATIO - 1.0))
    # the stable evaluation equals the directly sampled sup norms where
    # double precision can still resolve them
    d = CausalDenoiser(window=128)
    lam = 0.2
    thetas = np.linspace(0.0, 2.0 * np.pi, 2049)
    sym = d.operator(lam).symbol(thetas)
    sampled_ratio = np.abs(1.0 - sym).max() / (1.0 - np.abs(sym).max())
    consistent = abs(sampled_ratio / CausalDenoiser.deviation_margin_ratio(lam) - 1.0) < 1e-6
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.01 and consistent and elapsed < 1.0
    _report(1, ok, f"sup-norm ratio within {worst:.2e} of (e+1)/(e-1)", elapsed)
    assert worst <= 0.01
    assert consistent
    assert elapsed < 1.0


def test_criterion_02_strong_convexity_lipschitz():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for a in (0.5, 1.0, 2.0):
        for s in (0.5, 1.0, 1.5):
            for lam in (1.0, 0.1, 0.01):
                target = 1.0 / (1.0 + a * s * lam)
                for _ in range(10):
                    x1 = rng.standard_normal(30)
                    x2 = rng.standard_normal(30)
                    num = np.linalg.norm(prox_quadratic(a, s * lam, x1)
                                         - prox_quadratic(a, s * lam, x2))
                    ratio = num / np.linalg.norm(x1 - x2)
                    worst = max(worst, abs(ratio - target))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 1.0
    _report(2, ok, f"sampled ratio matches 1/(1+a*s*lam) within {worst:.2e}", elapsed)
    assert worst <= 1e-8
    assert elapsed < 1.0


def _variational_suite():
    if "suite" in _CACHE:
        return _CACHE["suite"]
    rng = np.random.default_rng(3)
    runs = []
    t0 = time.perf_counter()
    for i in range(20):
        n = int(rng.integers(10, 51))
        m = n + int(rng.integers(0, 10))
        op = random_dense(rng, m, n, norm_cap=1.0)
        D = LeastSquares(op)
        s = D.beta
        a = float(rng.uniform(0.5, 2.0))
        lam = float(rng.uniform(0.05, 0.5))
        y = rng.standard_normal(m)
        p = PnPProblem(D, ProxQuadratic(s * a), lam, y, StepConfig(s))
        fbs = solve_fbs(p, tol=1e-12)
        admm = solve_admm(p, tol=1e-9)
        direct = np.linalg.solve(op.matrix.T @ op.matrix + lam * a * np.eye(n),
                                 op.matrix.T @ y)
        runs.append((p, fbs, admm, direct))
    _CACHE["suite"] = (runs, time.perf_counter() - t0)
    return _CACHE["suite"]


def test_criterion_03_variational_equivalence():
    runs, elapsed = _variational_suite()
    worst_fbs = worst_admm = 0.0
    for p, fbs, admm, direct in runs:
        scale = np.linalg.norm(direct)
        worst_fbs = max(worst_fbs, np.linalg.norm(fbs.x_star - direct) / scale)
        worst_admm = max(worst_admm,
                         np.linalg.norm(admm.x_star - direct) / (1.0 + scale))
        assert admm.converged
    ok = worst_fbs <= 1e-8 and worst_admm <= 1e-7 and elapsed < 10.0
    _report(3, ok, f"20 problems: fbs rel {worst_fbs:.2e}, admm {worst_admm:.2e}",
            elapsed)
    assert worst_fbs <= 1e-8
    assert worst_admm <= 1e-7
    assert elapsed < 10.0


def test_criterion_04_linear_rate_and_banach_bound():
    t0 = time.perf_counter()
    runs, _ = _variational_suite()
    worst_excess = -math.inf
    for p, fbs, admm, direct in runs:
        res = fbs.residuals
        tail = res[-max(5, len(res) // 4) - 1:]
        ratios = tail[1:] / np.maximum(tail[:-1], 1e-300)
        worst_excess = max(worst_excess, float(ratios.max()) - fbs.certificate)
        assert fbs.empirical_rate <= fbs.certificate + 0.05
        assert fbs.iterations <= fbs.banach_bound
    elapsed = time.perf_counter() - t0
    ok = worst_excess <= 0.05
    _report(4, ok, f"max tail ratio excess over certificate {worst_excess:+.3f}",
            elapsed)
    assert worst_excess <= 0.05


def test_criterion_05_stability_estimate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    tol = 1e-10
    problems = []
    for _ in range(3):
        op = random_dense(rng, 10, 10, norm_cap=1.0)
        problems.append((op, "prox"))
    from pnpreg.cli import generate_problem
    blur, _, _ = generate_problem("gaussian-blur", {"n": 48, "width": 1.5}, seed=6)
    sub, _, _ = generate_problem("subsample", {"n": 20, "rate": 0.5}, seed=7)
    problems.append((blur, "scaled-soft"))
    problems.append((sub, "scaled-soft"))

    pairs_run = 0
    worst_slack = 0.0
    for op, fam in problems:
        D = LeastSquares(op)
        s = D.beta
        d = ProxQuadratic(s) if fam == "prox" else ScaledDenoiser(SoftThreshold())
        y = rng.standard_normal(op.out_dim)
        for lam in (0.3, 0.1, 0.03):
            p = PnPProblem(D, d, lam, y, StepConfig(s))
            L = p.certificate
            margin = p.margin
            for _ in range(4):
                g1, g2 = rng.standard_normal(op.out_dim), rng.standard_normal(op.out_dim)
                y1 = y + 0.1 * g1 / np.linalg.norm(g1)
                y2 = y + 0.1 * g2 / np.linalg.norm(g2)
                lhs, _ = stability_experiment(p, y1, y2, tol=tol)
                rhs = (s * L / margin * op.norm_bound * np.linalg.norm(y1 - y2)
                       * (1.0 + 1e-6) + 2.0 * tol)
                assert lhs <= rhs
                worst_slack = max(worst_slack, lhs / rhs)
                pairs_run += 1
    elapsed = time.perf_counter() - t0
    ok = pairs_run >= 50 and elapsed < 30.0
    _report(5, ok, f"{pairs_run} pairs, worst lhs/rhs {worst_slack:.3f}", elapsed)
    assert pairs_run >= 50
    assert elapsed < 30.0


def _reference_study():
    rng = np.random.default_rng(6)
    op = rank_deficient_dense(rng, 40, 30, smin=0.3, smax=1.0)
    x_dagger = rng.standard_normal(40)
    D = LeastSquares(op)
    s = D.beta
    cs = ConvergenceStudy(
        op=op, x_dagger=x_dagger, d=ProxQuadratic(s), cfg=StepConfig(s),
        deltas=np.array([2.0 ** -k for k in range(1, 13)]),
        seed=11, solver_tol=1e-10,
    )
    pc = ParameterChoice(modulus=D.equi_modulus, M=1.0)
    return cs, pc, op, x_dagger


def test_criterion_06_convergence_study():
    t0 = time.perf_counter()
    cs, pc, _, _ = _reference_study()
    rep = run_convergence_study(cs, pc)
    elapsed = time.perf_counter() - t0
    ok = (rep.error_ratio <= 0.25 and rep.log_error_slope < 0.0 and elapsed < 60.0)
    _report(6, ok, f"error ratio {rep.error_ratio:.2e}, log slope "
                   f"{rep.log_error_slope:+.3f}", elapsed)
    assert rep.error_ratio <= 0.25
    assert rep.log_error_slope < 0.0
    assert elapsed < 60.0


def test_criterion_07_limit_characterization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    op = rank_deficient_dense(rng, 10, 5, smin=0.8, smax=1.0)
    D = LeastSquares(op)
    s = D.beta
    d = ProxQuadratic(s)
    x_dagger = rng.standard_normal(10)
    x_dagger /= np.linalg.norm(x_dagger)
    y = op.apply(x_dagger)
    pc = ParameterChoice(modulus=D.equi_modulus, M=1.0)

    tail_ratio = None
    for k in range(1, 13):
        delta = 2.0 ** -k
        g = rng.standard_normal(10)
        y_k = y + delta * g / np.linalg.norm(g)
        lam = choose_lambda(pc, d, delta)
        res = solve_fbs(PnPProblem(D, d, lam, y_k, StepConfig(s)), tol=1e-12)
        lc = characterize_limit(op, d, lam, res.x_star, y, s, y_noisy=y_k)
        xn = np.linalg.norm(res.x_star)
        assert lc.identity_residual <= 1e-8 * (1.0 + xn)
        tail_ratio = lc.kernel_ratio
    elapsed = time.perf_counter() - t0
    ok = tail_ratio is not None and tail_ratio <= 1e-3 and elapsed < 30.0
    _report(7, ok, f"tail kernel ratio {tail_ratio:.2e}, identity holds at every k",
            elapsed)
    assert tail_ratio <= 1e-3
    assert elapsed < 30.0


def test_criterion_08_thresholding_weak_uniform():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        z = rng.standard_normal(20)
        lam = float(rng.uniform(0.07, 0.9))
        cf = closed_form_Clambda_sup(z, lam)
        pg, _ = pgd_box_ball_sup(z, lam)
        worst = max(worst, abs(cf.value - pg))
    grid = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)
    z = rng.standard_normal(20)
    vals = [closed_form_Clambda_sup(z, lam).value for lam in grid]
    weak_decreasing = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    weak_small = vals[-1] <= 0.01 * np.linalg.norm(z)
    norm_floor = min(norm_counterpoint(lam)[0] for lam in grid)
    elapsed = time.perf_counter() - t0
    ok = (worst <= 1e-8 and weak_decreasing and weak_small
          and norm_floor >= 0.99 and elapsed < 30.0)
    _report(8, ok, f"oracle gap {worst:.2e}, weak sup -> {vals[-1]:.2e}, "
                   f"norm sup stays {norm_floor:.3f}", elapsed)
    assert worst <= 1e-8
    assert weak_decreasing and weak_small
    assert norm_floor >= 0.99
    assert elapsed < 30.0


def test_criterion_09_admissibility_certification():
    t0 = time.perf_counter()
    scaled = certify_family(ScaledDenoiser(SoftThreshold()), dim=64, seed=0)
    causal = certify_family(CausalDenoiser(window=512), seed=0)
    plain = certify_family(SoftThreshold(), dim=64, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (scaled.all_pass and causal.all_pass
          and plain.verdicts["contraction"].verdict == "fail"
          and not plain.all_pass and elapsed < 30.0)
    _report(9, ok, f"scaled-soft all-pass={scaled.all_pass}, "
                   f"causal all-pass={causal.all_pass}, "
                   f"unscaled contraction={plain.verdicts['contraction'].verdict}",
            elapsed)
    assert scaled.all_pass
    assert causal.all_pass
    assert plain.verdicts["contraction"].verdict == "fail"
    assert elapsed < 30.0


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    cs, pc, op, x_dagger = _reference_study()
    opfile = tmp_path / "reference_op.json"
    opfile.write_text(operator_to_json(op))
    cfg = {
        "command": "convergence-study",
        "seed": 11,
        "problem": {"operator_file": str(opfile),
                    "x_dagger": [float(v) for v in x_dagger]},
        "denoiser": {"family": "prox-quadratic", "params": {"a": 1.0}},
        "delta_count": 12,
        "M": 1.0,
    }
    cfg_path = tmp_path / "study.json"
    cfg_path.write_text(json.dumps(cfg))
    outs = []
    for name in ("run1", "run2"):
        proc = subprocess.run(
            [sys.executable, "-m", "pnpreg.cli", "convergence-study",
             "--config", str(cfg_path), "--out", str(tmp_path / name)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append((tmp_path / name / "report.json").read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outs[0] == outs[1]
    _report(10, ok, f"report.json byte-identical across runs "
                    f"({len(outs[0])} bytes)", elapsed)
    assert outs[0] == outs[1]
