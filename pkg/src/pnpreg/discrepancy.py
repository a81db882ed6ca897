"""Data-discrepancy functionals with smooth, cocoercive gradients.

A discrepancy D(x, y) measures misfit between a candidate image x and data y.
Every instance certifies:

* convexity and differentiability in x, with gradient ``grad``;
* a cocoercivity constant ``beta`` > 0 (the gradient is 1/beta-Lipschitz
  in x), which makes the gradient step x - s*grad(x, y) non-expansive for
  step sizes 0 < s < 2*beta;
* an equicontinuity modulus: a bound on sup_x ||grad(x, y1) - grad(x, y2)||
  in terms of ||y1 - y2||.

The flagship instance is least squares D(x, y) = ||A x - y||^2 / 2 with
gradient A*(A x - y), beta = 1/||A||^2 and modulus ||A|| * t. A generic
instance accepts user callables; its claimed constants are spot-checked by
sampling at construction because every downstream guarantee leans on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import LinearOperator, as_vector, norm


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class StepConfig:
    """Gradient step size; must satisfy 0 < s < 2*beta for the discrepancy."""

    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise StepSizeError("step size must be positive")

    def validate_for(self, D: "Discrepancy"):
        if not self.s < 2.0 * D.beta:
            raise StepSizeError(
                f"step size {self.s} outside (0, {2.0 * D.beta}) for this discrepancy"
            )


class Discrepancy:
    kind = "abstract"
    beta: float

    def value(self, x, y) -> float:
        raise NotImplementedError

    def grad(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def equi_modulus(self, t: float) -> float:
        """Bound on sup_x ||grad(x, y1) - grad(x, y2)|| given ||y1 - y2|| <= t."""
        raise NotImplementedError

    def default_step(self) -> StepConfig:
        # midpoint of the admissible interval (0, 2*beta)
        return StepConfig(self.beta)

    def to_config(self) -> dict:
        raise NotImplementedError


class LeastSquares(Discrepancy):
    """D(x, y) = ||A x - y||^2 / 2."""

    kind = "least-squares"

    def __init__(self, op: LinearOperator):
        self.op = op
        nb = max(op.norm_bound, 1e-300)
        self.beta = 1.0 / nb**2

    def value(self, x, y):
        r = self.op.apply(x) - as_vector(y, self.op.out_dim)
        return 0.5 * float(np.dot(r, r))

    def grad(self, x, y):
        r = self.op.apply(x) - as_vector(y, self.op.out_dim)
        return self.op.adjoint_apply(r)

    def equi_modulus(self, t):
        return self.op.norm_bound * t

    def to_config(self):
        return {"kind": self.kind, "operator": self.op.to_config()}


class GenericDiscrepancy(Discrepancy):
    """User-supplied discrepancy; claimed constants verified by sampling."""

    kind = "generic"

    def __init__(self, dim, value_fn, grad_fn, beta, equi_modulus_fn,
                 check_pairs: int = 32, seed: int = 0):
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.dim = int(dim)
        self._value = value_fn
        self._grad = grad_fn
        self.beta = float(beta)
        self._modulus = equi_modulus_fn
        self._spot_check(check_pairs, seed)

    def _spot_check(self, pairs, seed):
        rng = np.random.default_rng(seed)
        lip = 1.0 / self.beta
        for _ in range(pairs):
            x1 = rng.standard_normal(self.dim)
            x2 = rng.standard_normal(self.dim)
            y = rng.standard_normal(self.dim)
            if self._value(x1, y) < 0:
                raise ValueError("discrepancy value must be nonnegative")
            g = norm(self._grad(x1, y) - self._grad(x2, y))
            if g > lip * norm(x1 - x2) * (1.0 + 1e-8):
                raise ValueError(
                    "claimed cocoercivity constant violated on sampled pair"
                )

    def value(self, x, y):
        return float(self._value(x, y))

    def grad(self, x, y):
        return np.asarray(self._grad(x, y), dtype=np.float64)

    def equi_modulus(self, t):
        return float(self._modulus(t))

    def to_config(self):
        raise TypeError("generic discrepancies are not serializable")


def grad_step(D: Discrepancy, cfg: StepConfig, y):
    """The non-expansive map x -> x - s * grad(x, y).

    Non-expansiveness for s in (0, 2*beta) follows from convexity plus the
    cocoercivity of the gradient (Baillon-Haddad); the returned callable
    carries certificate Lipschitz constant 1.
    """
    cfg.validate_for(D)
    y = np.asarray(y, dtype=np.float64)

    def step(x):
        return x - cfg.s * D.grad(x, y)

    step.lipschitz_certificate = 1.0
    return step


def equicontinuity_gap(D: Discrepancy, y1, y2, samples) -> float:
    """max over samples of ||grad(x, y1) - grad(x, y2)||.

    For least squares this is independent of x and equals ||A*(y2 - y1)||,
    which never exceeds ||A|| * ||y1 - y2||.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("at least one sample point is required")
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    return max(norm(D.grad(x, y1) - D.grad(x, y2)) for x in samples)


def discrepancy_from_config(cfg: dict) -> Discrepancy:
    from .linops import operator_from_config

    if cfg.get("kind") != "least-squares":
        raise ValueError(f"unknown discrepancy kind {cfg.get('kind')!r}")
    return LeastSquares(operator_from_config(cfg["operator"]))
