"""
Posterior statistics built on the Gaussian predictive: CDF at a threshold,
probability of improvement and the probability of duel between two points.
"""
import logging
import math
from typing import NamedTuple

from scipy.stats import norm

from rebmbo.gp.exact import posterior_cov, predict
from rebmbo.gp.models import GpModel


logger = logging.getLogger(__name__)


class DuelResult(NamedTuple):
    probability: float
    degenerate: bool


def posterior_cdf(model: GpModel, x, z: float) -> float:
    """P(f(x) <= z) under the posterior; a step function at the mean when the variance is zero."""
    mean, var = predict(model, x)
    if var <= 0.0:
        return 1.0 if z >= mean else 0.0
    return float(norm.cdf((z - mean) / math.sqrt(var)))


def probability_of_improvement(model: GpModel, x, best: float, xi: float = 0.0) -> float:
    """P(f(x) > best + xi)."""
    return 1.0 - posterior_cdf(model, x, best + xi)


def prob_duel(model: GpModel, x, x2) -> DuelResult:
    """
    P(f(x) > f(x2)) for the jointly Gaussian pair (exact variant only).

    A vanishing variance of f(x) - f(x2) returns 0.5 with ``degenerate`` set.
    """
    mean, var = predict(model, x)
    mean2, var2 = predict(model, x2)
    cov = posterior_cov(model, x, x2)
    denominator = var + var2 - 2.0 * cov
    scale = max(var, var2, model.prior_variance())
    if denominator <= 1e-12 * scale:
        logger.warning("Probability of duel is degenerate (variance of the difference %.3e).", denominator)
        return DuelResult(0.5, True)
    return DuelResult(float(norm.cdf((mean - mean2) / math.sqrt(denominator))), False)
