"""Concrete lambda-indexed denoiser families.

Each family is a map Phi(lam, .) on the model space together with a
certified Lipschitz bound per lam. Families meant for fixed-point solving
are contractions (bound < 1); the scaling wrapper turns a merely
non-expansive family into one. Where the inverse Phi(lam, .)^{-1} is single
valued the family also exposes ``invert`` and the rescaled residual map
H_lam(x) = (Phi(lam, .)^{-1}(x) - x) / lam used by the limit harness.

Numerical note: contraction margins 1 - Lip are first-class here and are
computed in closed form per family. For the causal convolution family the
margin decays like exp(-1/lam), far below float64 resolution of 1 - bound,
so every downstream quantity involving 1 - Lip (stopping rules, stability
constants, parameter choice) consumes ``contraction_margin`` instead of
recomputing it from the bound.

Denoisers are immutable value objects with pure apply/invert (the per-lam
kernel caches are idempotent), so concurrent evaluation is safe.

The causal family's Fourier symbol is derived from its kernel by geometric
series: with a = exp(-1/lam) and pole q = exp(-(1+lam)/lam),

    F k(z) = (1 - a) * z / (z - q),
    sup |F k|     = (1 - a) / (1 - q)   (attained at z = 1),
    sup |1 - F k| = (a + q) / (1 + q)   (attained at z = -1),

so the deviation/margin ratio is ((e+1)/(e-1)) * (1-q)/(1+q), which tends
to (e+1)/(e-1) ~ 2.16395 as lam -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .linops import ConvolutionOperator, DEFAULT_WINDOW, LinearOperator, as_vector, norm

E_RATIO = (math.e + 1.0) / (math.e - 1.0)

INVERT_TOL = 1e-12
INVERT_CAP = 100_000


class DenoiseInversionError(RuntimeError):
    pass


def soft_threshold(lam: float, x) -> np.ndarray:
    """Componentwise shrinkage sign(x)(|x| - lam)_+, the l1 proximal map."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return _kernels.soft_threshold(as_vector(x), lam)


def hard_threshold(lam: float, x) -> np.ndarray:
    """Keep entries with |x_i| > lam, zero the rest."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return _kernels.hard_threshold(as_vector(x), lam)


def prox_quadratic(a: float, lam: float, x) -> np.ndarray:
    """Proximal map of the quadratic lam*a*||.||^2/2: uniform shrink x/(1+a*lam)."""
    if a <= 0 or lam <= 0:
        raise ValueError("a and lam must be positive")
    return as_vector(x) / (1.0 + a * lam)


class Denoiser:
    """Base class for lambda-indexed denoiser families."""

    family = "abstract"
    admissible_set_hint = ""

    def apply(self, lam: float, x) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_bound(self, lam: float) -> float:
        """Certified Lipschitz constant of apply(lam, .); may be +inf if the
        family admits no finite certificate."""
        raise NotImplementedError

    def contraction_margin(self, lam: float) -> float:
        """1 - lipschitz_bound(lam), computed without cancellation where the
        family allows it. Positive iff the member is a certified contraction."""
        b = self.lipschitz_bound(lam)
        if not math.isfinite(b):
            return 0.0
        return max(0.0, 1.0 - b)

    @property
    def has_inverse(self) -> bool:
        return True

    def invert(self, lam: float, x) -> np.ndarray:
        """Solve apply(lam, u) = x.

        Generic route: u <- u + (x - apply(lam, u)), which converges whenever
        Id - apply(lam, .) is a contraction (true for every shipped linear
        family via sup |1 - symbol| < 1, and coordinatewise for the monotone
        thresholding families, which override with closed forms anyway).
        """
        x = as_vector(x)
        u = x.copy()
        scale = 1.0 + norm(x)
        for _ in range(INVERT_CAP):
            r = x - self.apply(lam, u)
            if norm(r) <= INVERT_TOL * scale:
                return u
            u = u + r
        raise DenoiseInversionError(
            f"inversion did not converge at lam={lam} (input outside numerical range?)"
        )

    def residual(self, lam: float, x) -> np.ndarray:
        """H_lam(x) = (invert(lam, x) - x) / lam."""
        x = as_vector(x)
        return (self.invert(lam, x) - x) / lam

    def affine_kernel_spec(self, lam: float):
        """Fused-loop hook: (code, p1, p2) for separable denoisers, else None."""
        return None

    def to_config(self) -> dict:
        raise NotImplementedError


class SoftThreshold(Denoiser):
    """Soft thresholding S(lam, .); non-expansive, never a contraction."""

    family = "soft-threshold"
    admissible_set_hint = "centered ball of radius 2 (after scaling)"

    def apply(self, lam, x):
        return soft_threshold(lam, x)

    def lipschitz_bound(self, lam):
        return 1.0

    def contraction_margin(self, lam):
        return 0.0

    def invert(self, lam, x):
        # exact where single valued (all x_i != 0); zero coordinates take the
        # minimum-norm preimage 0, matching the minimal-norm subgradient
        x = as_vector(x)
        return x + lam * np.sign(x)

    def residual(self, lam, x):
        return np.sign(as_vector(x))

    def affine_kernel_spec(self, lam):
        return (_kernels.DEN_SOFT_SCALE, lam, 1.0)

    def to_config(self):
        return {"family": self.family, "params": {}, "scaling": None}


class HardThreshold(Denoiser):
    """Hard thresholding; discontinuous, so no finite Lipschitz certificate
    exists and the family is rejected wherever a contraction is required."""

    family = "hard-threshold"
    admissible_set_hint = "none (fails the contraction requirement)"

    def apply(self, lam, x):
        return hard_threshold(lam, x)

    def lipschitz_bound(self, lam):
        return math.inf

    @property
    def has_inverse(self) -> bool:
        return False

    def invert(self, lam, x):
        raise DenoiseInversionError("hard thresholding is not injective")

    def to_config(self):
        return {"family": self.family, "params": {}, "scaling": None}


@dataclass(frozen=True)
class ScalingRule:
    """sigma: [0, inf) -> (0, 1], strictly decreasing with sigma(0) = 1."""

    name: str
    sigma: Callable[[float], float]
    margin: Callable[[float], float] | None = None  # stable 1 - sigma

    def __post_init__(self):
        grid = np.linspace(0.0, 1.0, 11)
        vals = [self.sigma(float(t)) for t in grid]
        if abs(vals[0] - 1.0) > 1e-12:
            raise ValueError("scaling rule must satisfy sigma(0) = 1")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("scaling rule must be strictly decreasing")

    def margin_at(self, lam: float) -> float:
        if self.margin is not None:
            return self.margin(lam)
        return 1.0 - self.sigma(lam)


ONE_MINUS_LAMBDA = ScalingRule(
    name="one-minus-lambda",
    sigma=lambda lam: max(1.0 - lam, 0.0),
    margin=lambda lam: min(lam, 1.0),
)

_SCALING_RULES = {"one-minus-lambda": ONE_MINUS_LAMBDA}


class ScaledDenoiser(Denoiser):
    """sigma(lam) * base(lam, .): turns a non-expansive family into a
    contraction family while preserving the identity limit."""

    family = "scaled"

    def __init__(self, base: Denoiser, rule: ScalingRule = ONE_MINUS_LAMBDA,
                 check_lams=(0.5, 0.1, 0.01)):
        for lam in check_lams:
            if abs(base.lipschitz_bound(lam) - 1.0) > 1e-12:
                raise ValueError(
                    "scaling requires a base family with Lipschitz bound exactly 1"
                )
        self.base = base
        self.rule = rule
        self.admissible_set_hint = base.admissible_set_hint

    def apply(self, lam, x):
        return self.rule.sigma(lam) * self.base.apply(lam, x)

    def lipschitz_bound(self, lam):
        return self.rule.sigma(lam)

    def contraction_margin(self, lam):
        return self.rule.margin_at(lam)

    @property
    def has_inverse(self) -> bool:
        return self.base.has_inverse

    def invert(self, lam, x):
        sig = self.rule.sigma(lam)
        if sig <= 0.0:
            raise DenoiseInversionError("scaled family is the zero map here")
        return self.base.invert(lam, as_vector(x) / sig)

    def affine_kernel_spec(self, lam):
        spec = self.base.affine_kernel_spec(lam)
        if spec is None:
            return None
        code, p1, p2 = spec
        sig = self.rule.sigma(lam)
        if code == _kernels.DEN_SOFT_SCALE:
            return (code, p1, p2 * sig)
        return (code, p1 * sig, p2)

    def to_config(self):
        cfg = self.base.to_config()
        cfg["scaling"] = {"rule": self.rule.name}
        return cfg


def scale_denoiser(base: Denoiser, rule: ScalingRule = ONE_MINUS_LAMBDA) -> ScaledDenoiser:
    return ScaledDenoiser(base, rule)


class ProxQuadratic(Denoiser):
    """Proximal family of the a-strongly convex quadratic a*||.||^2/2.

    apply(lam, x) = x/(1 + a*lam), exactly 1/(1+a*lam)-Lipschitz. To realize
    the step-scaled family prox_{s*lam*R} fold the step into the strength:
    ProxQuadratic(s * a).
    """

    family = "prox-quadratic"
    admissible_set_hint = "all of X (deviation/margin ratio is exactly ||x||)"

    def __init__(self, a: float):
        if a <= 0:
            raise ValueError("a must be positive")
        self.a = float(a)

    def apply(self, lam, x):
        return prox_quadratic(self.a, lam, x)

    def lipschitz_bound(self, lam):
        return 1.0 / (1.0 + self.a * lam)

    def contraction_margin(self, lam):
        al = self.a * lam
        return al / (1.0 + al)

    def invert(self, lam, x):
        return (1.0 + self.a * lam) * as_vector(x)

    def residual(self, lam, x):
        return self.a * as_vector(x)

    def affine_kernel_spec(self, lam):
        return (_kernels.DEN_SCALE, 1.0 / (1.0 + self.a * lam), 0.0)

    def to_config(self):
        return {"family": self.family, "params": {"a": self.a}, "scaling": None}


class FilterDenoiser(Denoiser):
    """Linear filter family U M_lam U* with diagonal multipliers.

    Requires sup_i |m_{lam,i}| < 1 for lam > 0. With real multipliers the
    operator is self-adjoint; it is proximal iff all multipliers lie in
    [0, 1] (then it is the subgradient of a convex quadratic).
    """

    family = "filter"

    def __init__(self, unitary: LinearOperator, multipliers: Callable[[float], np.ndarray],
                 margin_fn: Callable[[float], float] | None = None,
                 check_probes: int = 8):
        if unitary.in_dim != unitary.out_dim:
            raise ValueError("unitary factor must be square")
        rng = np.random.default_rng(0)
        for _ in range(check_probes):
            x = rng.standard_normal(unitary.in_dim)
            if norm(unitary.adjoint_apply(unitary.apply(x)) - x) > 1e-10 * (1 + norm(x)):
                raise ValueError("filter basis is not unitary to 1e-10")
        self.unitary = unitary
        self._multipliers = multipliers
        self._margin_fn = margin_fn
        self.dim = unitary.in_dim
        self.admissible_set_hint = "all of X (linear family)"

    def multipliers(self, lam: float) -> np.ndarray:
        m = as_vector(self._multipliers(lam), self.dim)
        if np.abs(m).max() >= 1.0:
            raise ValueError(f"multiplier bound >= 1 at lam={lam}")
        return m

    def apply(self, lam, x):
        m = self.multipliers(lam)
        x = as_vector(x, self.dim)
        return self.unitary.apply(m * self.unitary.adjoint_apply(x))

    def lipschitz_bound(self, lam):
        return float(np.abs(self.multipliers(lam)).max())

    def contraction_margin(self, lam):
        if self._margin_fn is not None:
            return self._margin_fn(lam)
        return 1.0 - self.lipschitz_bound(lam)

    def is_proximal(self, lam: float) -> bool:
        m = self.multipliers(lam)
        return bool(np.all(m >= 0.0) and np.all(m <= 1.0))

    def invert(self, lam, x):
        m = self.multipliers(lam)
        if np.abs(m).min() < 1e-300:
            raise DenoiseInversionError("filter has a vanishing multiplier")
        coeffs = self.unitary.adjoint_apply(as_vector(x, self.dim))
        return self.unitary.apply(coeffs / m)

    def to_config(self):
        raise TypeError("general filter denoisers are not serializable; "
                        "use uniform_filter_denoiser for the config route")


def uniform_filter_denoiser(unitary: LinearOperator) -> FilterDenoiser:
    """Filter family with m_{lam,i} = 1 - lam for every i (scaled identity
    in the U basis); contractive for lam in (0, 2), proximal for lam <= 1."""
    n = unitary.in_dim

    def mult(lam):
        if not 0 < lam < 2:
            raise ValueError("uniform filter requires lam in (0, 2)")
        return np.full(n, 1.0 - lam)

    d = FilterDenoiser(unitary, mult, margin_fn=lambda lam: min(lam, 2.0 - lam))
    d._uniform = True
    return d


class ConvolutionDenoiser(Denoiser):
    """Family of short-kernel convolutions on a truncated window."""

    family = "convolution"

    def __init__(self, kernel_fn, window: int, mode: str,
                 bound_fn, margin_fn, deviation_sup_fn, hint: str = ""):
        self._kernel_fn = kernel_fn  # lam -> (taps, offset)
        self.window = int(window)
        self.mode = mode
        self._bound_fn = bound_fn
        self._margin_fn = margin_fn
        self._deviation_sup_fn = deviation_sup_fn
        self.admissible_set_hint = hint or "window vectors, centered ball of radius 2"
        self._op_cache: dict[float, ConvolutionOperator] = {}

    def operator(self, lam: float) -> ConvolutionOperator:
        op = self._op_cache.get(lam)
        if op is None:
            taps, offset = self._kernel_fn(lam)
            op = ConvolutionOperator(taps, n=self.window, mode=self.mode, offset=offset)
            if len(self._op_cache) > 256:
                self._op_cache.clear()
            self._op_cache[lam] = op
        return op

    def kernel(self, lam: float) -> np.ndarray:
        return self.operator(lam).kernel

    def apply(self, lam, x):
        return self.operator(lam).apply(x)

    def lipschitz_bound(self, lam):
        return self._bound_fn(lam)

    def contraction_margin(self, lam):
        return self._margin_fn(lam)

    def deviation_sup(self, lam: float) -> float:
        """Certified sup ||Phi(lam, x) - x|| / ||x|| = sup |1 - symbol|."""
        return self._deviation_sup_fn(lam)

    def invert(self, lam, x):
        if self.deviation_sup(lam) >= 1.0:
            raise DenoiseInversionError("Id - Phi is not a contraction at this lam")
        return super().invert(lam, x)


class CausalDenoiser(ConvolutionDenoiser):
    """One-sided geometric smoothing family.

    Kernel k_lam(m) = (1 - a) * q^m for m >= 0 with a = exp(-1/lam) and
    q = exp(-(1+lam)/lam); taps below ``tail_tol`` are dropped (the tail is
    geometric, so at most ~32 taps survive). All sup-norm quantities come
    from the closed-form symbol (see module docstring); the margin is
    (a - q)/(1 - q) = a (1 - 1/e)/(1 - q), positive for every lam but far
    below float64's 1 - bound resolution once lam < ~0.02.
    """

    family = "causal"

    def __init__(self, window: int = DEFAULT_WINDOW, tail_tol: float = 1e-14):
        if tail_tol <= 0:
            raise ValueError("tail_tol must be positive")
        self.tail_tol = float(tail_tol)

        def kernel_fn(lam):
            taps = self._taps(lam)
            if taps.shape[0] > window:
                raise ValueError(
                    f"window {window} too small for tail tolerance {tail_tol} at lam={lam}"
                )
            return taps, 0

        super().__init__(
            kernel_fn,
            window=window,
            mode="truncated-Z",
            bound_fn=self._bound,
            margin_fn=self._margin,
            deviation_sup_fn=self._dev_sup,
            hint="window vectors, centered ball of radius 2",
        )

    def _taps(self, lam):
        if lam <= 0:
            raise ValueError("lam must be positive")
        a = math.exp(-1.0 / lam)
        q = math.exp(-(1.0 + lam) / lam)
        c = 1.0 - a
        if c == 0.0:  # lam so large the family has shrunk to the zero map
            return np.zeros(1)
        if q == 0.0:  # lam so small only the leading tap survives
            return np.array([c])
        m_max = int(math.floor(math.log(self.tail_tol / c) / math.log(q))) + 1
        m_max = max(m_max, 0)
        return c * np.power(q, np.arange(m_max + 1, dtype=np.float64))

    @staticmethod
    def _bound(lam):
        a = math.exp(-1.0 / lam)
        q = math.exp(-(1.0 + lam) / lam)
        return (1.0 - a) / (1.0 - q)

    @staticmethod
    def _margin(lam):
        a = math.exp(-1.0 / lam)
        q = math.exp(-(1.0 + lam) / lam)
        return (a - q) / (1.0 - q)

    @staticmethod
    def _dev_sup(lam):
        a = math.exp(-1.0 / lam)
        q = math.exp(-(1.0 + lam) / lam)
        return (a + q) / (1.0 + q)

    @staticmethod
    def deviation_margin_ratio(lam: float) -> float:
        """sup |1 - F k| / (1 - sup |F k|), evaluated cancellation-free:
        ((e+1)/(e-1)) * (1-q)/(1+q) with q = exp(-(1+lam)/lam)."""
        q = math.exp(-(1.0 + lam) / lam)
        return E_RATIO * (1.0 - q) / (1.0 + q)

    def to_config(self):
        return {
            "family": self.family,
            "params": {"window": self.window, "tail_tol": self.tail_tol},
            "scaling": None,
        }


def shift_mix_denoiser(window: int = 256) -> ConvolutionDenoiser:
    """Circular two-tap family (1-2*lam) x_i + lam x_{i-1} for lam < 1/3.

    A linear contraction (factor 1 - lam) that is not self-adjoint, hence
    not a proximal map of any convex functional.
    """

    def kernel_fn(lam):
        if not 0 < lam < 1.0 / 3.0:
            raise ValueError("shift-mix requires lam in (0, 1/3)")
        return np.array([1.0 - 2.0 * lam, lam]), 0

    return ConvolutionDenoiser(
        kernel_fn,
        window=window,
        mode="circular",
        bound_fn=lambda lam: 1.0 - lam,
        margin_fn=lambda lam: lam,
        deviation_sup_fn=lambda lam: 3.0 * lam,
        hint="all of X (linear family)",
    )


def invert_denoiser(d: Denoiser, lam: float, x) -> np.ndarray:
    """Solve d.apply(lam, u) = x; see Denoiser.invert for the algorithm."""
    return d.invert(lam, x)


_BASE_FAMILIES = {
    "soft-threshold": lambda params: SoftThreshold(),
    "hard-threshold": lambda params: HardThreshold(),
    "prox-quadratic": lambda params: ProxQuadratic(float(params["a"])),
    "causal": lambda params: CausalDenoiser(
        window=int(params.get("window", DEFAULT_WINDOW)),
        tail_tol=float(params.get("tail_tol", 1e-14)),
    ),
}


def denoiser_from_config(cfg: dict) -> Denoiser:
    family = cfg.get("family")
    params = cfg.get("params") or {}
    if family == "filter":
        from .linops import DenseOperator, operator_from_config

        if "unitary" in params:
            u = operator_from_config(params["unitary"])
        else:
            u = DenseOperator.identity(int(params["n"]))
        d = uniform_filter_denoiser(u)
    elif family == "scaled":
        d = denoiser_from_config(params["base"])
    elif family in _BASE_FAMILIES:
        d = _BASE_FAMILIES[family](params)
    else:
        raise ValueError(f"unknown denoiser family {family!r}")

    scaling = cfg.get("scaling")
    if scaling:
        rule = _SCALING_RULES.get(scaling.get("rule"))
        if rule is None:
            raise ValueError(f"unknown scaling rule {scaling.get('rule')!r}")
        d = ScaledDenoiser(d, rule)
    return d
