"""
UCB and EBM-UCB acquisition scores and their maximization over the box by
candidate sampling followed by coordinate-wise hill climbing.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import qmc

from rebmbo.ebm import EnergyModel, energy_many, normalize_energies
from rebmbo.errors import ParameterError
from rebmbo.gp.exact import predict_many
from rebmbo.gp.models import GpModel, from_unit, to_unit


logger = logging.getLogger(__name__)

MAX_CANDIDATES = 4096
CANDIDATES_PER_DIM = 256


def default_candidate_count(dim: int) -> int:
    return min(CANDIDATES_PER_DIM * dim, MAX_CANDIDATES)


@dataclass(frozen=True)
class AcquisitionConfig:
    """
    :param beta: UCB exploration weight
    :param gamma: weight of the normalized energy penalty
    :param n_candidates: size of the random candidate pool (``None``: 256 per dimension, at most 4096)
    :param refine_step_size: initial hill-climbing step in unit-box coordinates
    :param top_k: number of best candidates refined
    """

    beta: float = 2.0
    gamma: float = 0.1
    n_candidates: Optional[int] = None
    n_refine_steps: int = 20
    refine_step_size: float = 0.1
    top_k: int = 4

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ParameterError("beta and gamma must be nonnegative.")
        if self.n_candidates is not None and self.n_candidates < 1:
            raise ParameterError(f"n_candidates must be >= 1, got {self.n_candidates}.")
        if self.n_refine_steps < 0 or self.top_k < 1 or not self.refine_step_size > 0:
            raise ParameterError("Invalid refinement settings.")

    def candidate_count(self, dim: int) -> int:
        return self.n_candidates if self.n_candidates is not None else default_candidate_count(dim)


class Proposal(NamedTuple):
    x: np.ndarray
    score: float


def ucb_score(mu, sigma, beta):
    return mu + beta * sigma


def ebm_ucb_score(mu, sigma, energy_norm, beta, gamma):
    return mu + beta * sigma - gamma * energy_norm


def propose_candidates(box, n: int, rng: np.random.Generator) -> np.ndarray:
    """Half uniform draws, half a Latin hypercube, all inside ``box``."""
    if n < 1:
        raise ParameterError(f"Need at least one candidate, got {n}.")
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    d = box.shape[0]
    n_lhs = n // 2
    uniform = rng.uniform(0.0, 1.0, size=(n - n_lhs, d))
    parts = [uniform]
    if n_lhs:
        parts.append(qmc.LatinHypercube(d=d, seed=rng).random(n_lhs))
    return from_unit(np.vstack(parts), box)


class _Scorer:
    """Scores batches against a fixed energy normalization reference."""

    def __init__(self, gp_model: GpModel, energy_model: Optional[EnergyModel], config: AcquisitionConfig):
        self.gp_model = gp_model
        self.energy_model = energy_model if config.gamma > 0 else None
        self.config = config
        self.reference = None

    def __call__(self, X: np.ndarray) -> np.ndarray:
        mean, var = predict_many(self.gp_model, X)
        scores = ucb_score(mean, np.sqrt(var), self.config.beta)
        if self.energy_model is None:
            return scores
        energies = energy_many(self.energy_model, X)
        if self.reference is None:
            self.reference = energies
        return scores - self.config.gamma * normalize_energies(energies, reference=self.reference)


def _hill_climb(scorer: _Scorer, start_unit: np.ndarray, start_score: float, box, config: AcquisitionConfig):
    d = start_unit.shape[0]
    current, current_score = start_unit, start_score
    step = config.refine_step_size
    for _ in range(config.n_refine_steps):
        offsets = np.vstack([np.eye(d), -np.eye(d)]) * step
        trials = np.clip(current + offsets, 0.0, 1.0)
        scores = scorer(from_unit(trials, box))
        best = int(np.argmax(scores))
        if scores[best] > current_score:
            current, current_score = trials[best], float(scores[best])
        else:
            step *= 0.5
    return current, current_score


def maximize(
    gp_model: GpModel,
    energy_model: Optional[EnergyModel],
    box,
    config: AcquisitionConfig,
    rng: np.random.Generator,
) -> Proposal:
    """
    Maximizes EBM-UCB (plain UCB when ``energy_model`` is None or gamma is 0).

    Candidate energies are min-max normalized over the candidate pool and every
    refinement trial is normalized against the same range. Ties go to the lowest
    candidate index.
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    candidates = propose_candidates(box, config.candidate_count(box.shape[0]), rng)
    scorer = _Scorer(gp_model, energy_model, config)
    scores = scorer(candidates)
    order = np.argsort(-scores, kind="stable")[: config.top_k]

    best_x, best_score = candidates[order[0]], float(scores[order[0]])
    if config.n_refine_steps == 0:
        return Proposal(best_x, best_score)
    for idx in order:
        unit, score = _hill_climb(scorer, to_unit(candidates[idx], box), float(scores[idx]), box, config)
        if score > best_score:
            best_x, best_score = from_unit(unit, box), score
    best_x = np.clip(best_x, box[:, 0], box[:, 1])
    logger.debug("Acquisition maximum %.4f (best raw candidate %.4f).", best_score, scores[order[0]])
    return Proposal(best_x, best_score)
