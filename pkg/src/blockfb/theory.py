"""Closed-form convergence bounds and duality-gap certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ValidationError


@dataclass(frozen=True)
class RateBoundInputs:
    """Constants entering the rate bounds.

    ``dist_W_sq`` is the squared distance from the start to the solution set
    in the metric with weights ``1/(gamma_i p_i)``; ``mu_gamma`` and
    ``sigma_gamma`` are strong convexity moduli of the smooth and
    nonsmooth parts in the metric with weights ``1/gamma_i``; ``c_eb`` is an
    error-bound constant in that same metric.
    """

    dist_W_sq: float
    F0_gap: float
    p_min: float
    delta: float
    mu_gamma: float = 0.0
    sigma_gamma: float = 0.0
    c_eb: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.p_min <= 1:
            raise ValidationError(f"p_min must lie in (0, 1], got {self.p_min}")
        if not 0 < self.delta < 2:
            raise ValidationError(f"delta must lie in (0, 2), got {self.delta}")
        if self.mu_gamma < 0 or self.sigma_gamma < 0:
            raise ValidationError("strong convexity moduli must be nonnegative")
        if self.mu_gamma > self.delta:
            raise ValidationError("the smooth modulus cannot exceed delta in the inverse-step metric")
        if self.dist_W_sq < 0 or self.F0_gap < 0:
            raise ValidationError("distance and initial gap must be nonnegative")


def _step_factor(delta: float) -> float:
    return max(1.0, 1.0 / (2.0 - delta))


def sublinear_bound(inputs: RateBoundInputs, n: int) -> float:
    """O(1/n) bound on ``E[F(x^n)] - F*`` for ``n >= 1``."""
    if n < 1:
        raise ValidationError("the bound is stated for n >= 1")
    lead = inputs.dist_W_sq / 2 + (_step_factor(inputs.delta) / inputs.p_min - 1.0) * inputs.F0_gap
    return lead / n


def sublinear_bound_v2(inputs: RateBoundInputs, n: int) -> float:
    """Alternative bound with denominator ``1 + p_min n``; valid from ``n = 0``."""
    lead = inputs.p_min * inputs.dist_W_sq / 2 + _step_factor(inputs.delta) * inputs.F0_gap
    return lead / (1.0 + inputs.p_min * n)


def strong_convexity_rate(inputs: RateBoundInputs) -> float:
    """Linear factor ``1 - 2 p_min (mu+sigma) / (1 + mu + 2 sigma)``."""
    mu, sigma = inputs.mu_gamma, inputs.sigma_gamma
    if mu + sigma <= 0:
        raise ValidationError("need a positive strong convexity modulus")
    if inputs.delta > 1:
        raise ValidationError("the linear rate needs delta <= 1")
    return 1.0 - 2.0 * inputs.p_min * (mu + sigma) / (1.0 + mu + 2.0 * sigma)


def strong_convexity_constant(inputs: RateBoundInputs) -> float:
    """Initial constant multiplying the linear factor."""
    return inputs.p_min * (1.0 + inputs.sigma_gamma) * inputs.dist_W_sq / 2 + inputs.F0_gap


def error_bound_rate(inputs: RateBoundInputs) -> float:
    """Linear factor ``1 - p_min min(1, (2 - delta) / (2 c))`` for the objective gap."""
    if inputs.c_eb is None or inputs.c_eb <= 0:
        raise ValidationError("need a positive error-bound constant")
    return 1.0 - inputs.p_min * min(1.0, (2.0 - inputs.delta) / (2.0 * inputs.c_eb))


def error_bound_iterate_rate(inputs: RateBoundInputs) -> float:
    """Square root of :func:`error_bound_rate`, the factor for iterate distances."""
    return math.sqrt(error_bound_rate(inputs))


def duality_gap_strongly_convex(D_gap: float, A_norm: float, alpha: float, mu: float) -> float:
    """Gap bound ``(1 + ||A||^2 / (alpha mu)) * D_gap`` for strongly convex conjugates."""
    if alpha <= 0 or mu <= 0:
        raise ValidationError("moduli must be positive")
    if D_gap < 0:
        raise ValidationError("dual suboptimality must be nonnegative")
    return (1.0 + A_norm**2 / (alpha * mu)) * D_gap


def duality_gap_lipschitz(D_gap: float, A_norm: float, theta: float, mu: float) -> float:
    """Gap bound ``2 ||A|| theta / sqrt(mu) * sqrt(D_gap)`` for Lipschitz losses.

    Only valid once ``D_gap < ||A||^2 theta^2 / mu``.
    """
    if theta <= 0 or mu <= 0:
        raise ValidationError("theta and mu must be positive")
    if D_gap < 0:
        raise ValidationError("dual suboptimality must be nonnegative")
    if D_gap >= A_norm**2 * theta**2 / mu:
        raise ValidationError(
            "bound not applicable yet: dual suboptimality must drop below ||A||^2 theta^2 / mu"
        )
    return 2.0 * A_norm * theta / math.sqrt(mu) * math.sqrt(D_gap)


@dataclass
class EbEstimate:
    c_hat: float
    ratios: np.ndarray
    used_probes: np.ndarray


def estimate_eb_constant(problem, reference_solution, probe_points: Sequence[np.ndarray], gamma) -> EbEstimate:
    """Largest ratio of distance-to-solution over forward-backward residual.

    Both are measured in the metric with weights ``1/gamma_i``. The result
    is an empirical lower bound on any valid error-bound constant. Probes
    with zero residual are skipped.
    """
    part = problem.partition
    gamma = np.asarray(gamma, dtype=np.float64)
    steps = part.expand(gamma)
    blocks = np.arange(part.m)
    coords = part.coords(blocks)
    x_ref = np.asarray(reference_solution, dtype=np.float64)
    ratios, used = [], []
    for k, x in enumerate(probe_points):
        x = np.asarray(x, dtype=np.float64)
        xbar = problem.prox.prox_selected(blocks, coords, x - steps * problem.smooth.full_gradient(x), steps)
        res = math.sqrt(float(np.dot(1.0 / gamma, part.block_sq_norms(x - xbar))))
        if res == 0.0:
            continue
        dist = math.sqrt(float(np.dot(1.0 / gamma, part.block_sq_norms(x - x_ref))))
        ratios.append(dist / res)
        used.append(k)
    if not ratios:
        raise ValidationError("every probe had zero residual")
    ratios = np.array(ratios)
    return EbEstimate(float(ratios.max()), ratios, np.array(used))
