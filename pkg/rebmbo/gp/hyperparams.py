"""
Type-II maximum likelihood for the kernel hyperparameters.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from rebmbo import kernels
from rebmbo.errors import NumericalError, ParameterError
from rebmbo.gp.exact import DEFAULT_NOISE, log_marginal_likelihood
from rebmbo.gp.models import Dataset
from rebmbo.kernels import KernelParams


logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 200
DEFAULT_STARTS = 4
# log-parameters are kept inside [exp(-7), exp(7)]
LOG_BOUND = 7.0
START_SPREAD = 1.0


@dataclass(frozen=True)
class HyperparamResult:
    """
    :param params: accepted hyperparameters (``init`` when nothing better was found)
    :param log_likelihood: log marginal likelihood of ``params``
    :param fallback: True when every start failed and ``init`` was returned
    :param evaluations: likelihood evaluations spent, never more than the budget
    """

    params: KernelParams
    log_likelihood: float
    fallback: bool = False
    evaluations: int = 0


class _BudgetExhausted(Exception):
    pass


def _safe_lml(dataset, params, noise):
    try:
        return log_marginal_likelihood(dataset, params, noise)
    except (NumericalError, ParameterError):
        return -np.inf


def optimize_hyperparams(
    dataset: Dataset,
    init: KernelParams,
    noise: float = DEFAULT_NOISE,
    budget: int = DEFAULT_BUDGET,
    n_starts: int = DEFAULT_STARTS,
    seed: int = 0,
) -> HyperparamResult:
    """
    Multi-start Nelder-Mead ascent of the log marginal likelihood over the
    log-parameters of ``init``. Weights pinned at zero by the kernel kind stay at zero.

    The result never has a lower likelihood than ``init``.

    :param budget: total number of likelihood evaluations, the one at ``init`` included
    """
    if budget < 1:
        raise ParameterError(f"Hyperparameter budget must be >= 1, got {budget}.")
    if dataset.n == 0:
        return HyperparamResult(init, 0.0)
    init_lml = _safe_lml(dataset, init, noise)
    if budget == 1:
        return HyperparamResult(init, float(init_lml), fallback=not np.isfinite(init_lml), evaluations=1)

    theta0 = init.to_log_vector()
    rng = np.random.default_rng(seed)
    starts = [theta0] + [
        np.clip(theta0 + rng.normal(0.0, START_SPREAD, size=theta0.shape), -LOG_BOUND, LOG_BOUND)
        for _ in range(n_starts - 1)
    ]
    per_start = max(1, (budget - 1) // len(starts))
    # best point is tracked inside the objective
    best = {"params": init, "lml": init_lml, "evaluations": 1}

    def negative_lml(theta):
        if best["evaluations"] >= budget:
            raise _BudgetExhausted()
        best["evaluations"] += 1
        theta = np.clip(theta, -LOG_BOUND, LOG_BOUND)
        params = init.from_log_vector(theta)
        value = _safe_lml(dataset, params, noise)
        if not np.isfinite(value):
            return 1e10
        if value > best["lml"]:
            best["params"], best["lml"] = params, value
        return -value

    for start in starts:
        try:
            minimize(negative_lml, start, method="Nelder-Mead", options={"maxfev": per_start})
        except _BudgetExhausted:
            break

    best_params, best_lml, evaluations = best["params"], best["lml"], best["evaluations"]
    if not np.isfinite(best_lml):
        logger.warning("Hyperparameter search failed on every start; keeping the initial parameters.")
        return HyperparamResult(init, float(init_lml), fallback=True, evaluations=evaluations)
    logger.debug("Hyperparameters: log likelihood %.4f -> %.4f in %d evaluations.", init_lml, best_lml, evaluations)
    return HyperparamResult(best_params, float(best_lml), evaluations=evaluations)


def initial_params(dim: int, kind: str = "mixture") -> KernelParams:
    """Starting point of the search for a fresh run."""
    if kind not in kernels.KERNEL_KINDS:
        raise ParameterError(f"Unknown kernel kind {kind!r}.")
    return KernelParams.default(dim, kind)
