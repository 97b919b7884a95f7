"""
PPO planner: state featurization from the surrogate and the energy model, a
diagonal Gaussian policy over normalized actions, a value baseline and clipped
policy updates.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.stats import qmc

from rebmbo import net
from rebmbo.ebm import EnergyModel, energy_many, normalize_energies
from rebmbo.errors import InputError, ParameterError
from rebmbo.gp.exact import predict_many
from rebmbo.gp.models import GpModel, from_unit, to_unit


logger = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    enabled: bool = True
    learning_rate: float = 3e-4
    clip_eps: float = 0.2
    discount: float = 0.99
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    epochs: int = 4
    grad_clip: float = 0.5
    hidden: int = 256
    layers: int = 2
    minibatch: Optional[int] = None
    reward_lambda: float = 0.35
    warmup: int = 5
    anchors: int = 16

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ParameterError(f"clip_eps must be in (0, 1), got {self.clip_eps}.")
        if not 0 <= self.discount <= 1:
            raise ParameterError(f"discount must be in [0, 1], got {self.discount}.")
        if self.reward_lambda < 0:
            raise ParameterError(f"reward_lambda must be >= 0, got {self.reward_lambda}.")
        if self.anchors < 1 or self.epochs < 0 or self.layers < 1 or self.warmup < 0:
            raise ParameterError("anchors and layers must be >= 1; epochs and warmup >= 0.")
        if self.minibatch is not None and self.minibatch < 1:
            raise ParameterError(f"minibatch must be >= 1, got {self.minibatch}.")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    logp: float
    reward: float
    value: float


@dataclass
class PolicyState:
    actor: net.MlpParams
    critic: net.MlpParams
    actor_optimizer: net.OptimizerState
    critic_optimizer: net.OptimizerState
    config: PpoConfig
    action_dim: int
    anchors: Optional[np.ndarray] = None
    buffer: List[Transition] = field(default_factory=list)


class Action(NamedTuple):
    x: np.ndarray
    logp: float
    z: np.ndarray


class UpdateDiagnostics(NamedTuple):
    actor_loss: float
    critic_loss: float
    entropy: float
    mean_ratio: float
    clip_fraction: float
    aborted_epochs: int


def feature_length(anchors: int) -> int:
    return 3 * anchors + 2


def make_anchors(box, count: int, rng: np.random.Generator) -> np.ndarray:
    """Latin-hypercube anchor set fixed for a whole run."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    return from_unit(qmc.LatinHypercube(d=box.shape[0], seed=rng).random(count), box)


def init_policy(
    feature_dim: int, action_dim: int, config: PpoConfig = PpoConfig(), seed=0, activation: str = "relu"
) -> PolicyState:
    rng = np.random.default_rng(seed)
    hidden = [config.hidden] * config.layers
    actor = net.init_params([feature_dim, *hidden, 2 * action_dim], activation=activation, seed=rng)
    critic = net.init_params([feature_dim, *hidden, 1], activation=activation, seed=rng)
    # a small output layer starts the policy near mean 0, std 1
    actor.layers[-1].weight *= 0.01
    return PolicyState(
        actor=actor,
        critic=critic,
        actor_optimizer=net.init_optimizer(actor, config.learning_rate),
        critic_optimizer=net.init_optimizer(critic, config.learning_rate),
        config=config,
        action_dim=action_dim,
    )


def featurize(
    gp_model: GpModel, energy_model: Optional[EnergyModel], anchors: np.ndarray, best_y: float, t: int, T: int
) -> np.ndarray:
    """
    (standardized mu, standardized sigma, normalized energy) at each anchor, then the
    standardized best-so-far value and t / T.
    """
    if not 1 <= t <= T:
        raise InputError(f"Iteration {t} outside 1..{T}.")
    mean, var = predict_many(gp_model, anchors)
    mu = (mean - gp_model.y_mean) / gp_model.y_std
    sigma = np.sqrt(var) / gp_model.y_std
    if energy_model is None:
        energies = np.full(anchors.shape[0], 0.5)
    else:
        energies = normalize_energies(energy_many(energy_model, anchors))
    best = (best_y - gp_model.y_mean) / gp_model.y_std
    return np.concatenate([mu, sigma, energies, [best, t / T]])


def _split(policy: PolicyState, out: np.ndarray):
    d = policy.action_dim
    raw_log_std = out[..., d:]
    return out[..., :d], np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX), raw_log_std


def distribution(policy: PolicyState, state) -> tuple:
    """(mean, std) of the Gaussian over normalized actions."""
    out, _ = net.forward(policy.actor, state)
    mean, log_std, _ = _split(policy, out)
    return mean, np.exp(log_std)


def gaussian_log_prob(z, mean, log_std) -> np.ndarray:
    """Diagonal Gaussian log density summed over the last axis."""
    scaled = (np.asarray(z) - mean) / np.exp(log_std)
    return np.sum(-0.5 * scaled ** 2 - log_std - HALF_LOG_2PI, axis=-1)


def log_prob(policy: PolicyState, state, z) -> float:
    out, _ = net.forward(policy.actor, state)
    mean, log_std, _ = _split(policy, out)
    return float(gaussian_log_prob(z, mean, log_std))


def to_box(z, box) -> np.ndarray:
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    return from_unit((np.clip(z, -1.0, 1.0) + 1.0) / 2.0, box)


def from_box(x, box) -> np.ndarray:
    return 2.0 * to_unit(x, np.asarray(box, dtype=float).reshape(-1, 2)) - 1.0


def act(policy: PolicyState, state, rng: np.random.Generator, box) -> Action:
    """
    Samples z ~ N(mean, std^2) in [-1, 1] coordinates and maps clip(z) affinely
    into the box. ``logp`` is the density of the unclipped z.
    """
    mean, std = distribution(policy, state)
    z = mean + std * rng.standard_normal(policy.action_dim)
    logp = float(gaussian_log_prob(z, mean, np.log(std)))
    return Action(to_box(z, box), logp, z)


def value(policy: PolicyState, state) -> float:
    out, _ = net.forward(policy.critic, state)
    return float(out[0])


def reward(y_standardized: float, energy_norm: float, reward_lambda: float) -> float:
    if reward_lambda < 0:
        raise ParameterError(f"reward_lambda must be >= 0, got {reward_lambda}.")
    return y_standardized - reward_lambda * energy_norm


def returns_and_advantages(buffer: List[Transition], discount: float):
    """
    Discounted Monte-Carlo returns over the run so far and advantages G - V,
    standardized when there are at least two records.
    """
    if not buffer:
        raise InputError("Cannot compute returns of an empty buffer.")
    rewards = np.array([tr.reward for tr in buffer])
    values = np.array([tr.value for tr in buffer])
    returns = np.zeros_like(rewards)
    running = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        running = rewards[i] + discount * running
        returns[i] = running
    advantages = returns - values
    if len(buffer) >= 2:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return returns, advantages


def clip_objective(ratio, advantage, eps: float):
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A), elementwise."""
    ratio = np.asarray(ratio, dtype=float)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage)


def actor_loss(policy: PolicyState, states, actions, logp_old, advantages):
    """
    Negative clipped surrogate minus the entropy bonus, averaged over the batch.

    :return: (loss, parameter gradients, diagnostics dict)
    """
    cfg = policy.config
    out, cache = net.forward(policy.actor, np.atleast_2d(states))
    mean, log_std, raw_log_std = _split(policy, out)
    std = np.exp(log_std)
    actions = np.atleast_2d(actions)
    logp_new = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    objective = np.minimum(ratio * advantages, clipped * advantages)
    entropy = np.sum(log_std + 0.5 + HALF_LOG_2PI, axis=-1)
    b = out.shape[0]
    loss = float(-np.mean(objective) - cfg.entropy_coef * np.mean(entropy))

    unclipped = ratio * advantages <= clipped * advantages
    d_logp = np.where(unclipped, -ratio * advantages, 0.0) / b
    scaled = (actions - mean) / std
    g_mean = d_logp[:, None] * scaled / std
    g_log_std = d_logp[:, None] * (scaled ** 2 - 1.0) - cfg.entropy_coef / b
    g_log_std = np.where((raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX), g_log_std, 0.0)
    grads, _ = net.backward(policy.actor, cache, np.concatenate([g_mean, g_log_std], axis=1))
    stats = {
        "entropy": float(np.mean(entropy)),
        "mean_ratio": float(np.mean(ratio)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
    }
    return loss, grads, stats


def critic_loss(policy: PolicyState, states, returns):
    out, cache = net.forward(policy.critic, np.atleast_2d(states))
    diff = out[:, 0] - returns
    loss = float(policy.config.value_coef * np.mean(diff ** 2))
    grad_out = (2.0 * policy.config.value_coef * diff / diff.shape[0])[:, None]
    grads, _ = net.backward(policy.critic, cache, grad_out)
    return loss, grads


def ppo_update(policy: PolicyState, buffer: List[Transition], rng: np.random.Generator) -> UpdateDiagnostics:
    """Clipped PPO epochs over the shuffled buffer; the actor and critic keep separate Adam states."""
    if not buffer:
        raise InputError("ppo_update needs at least one transition.")
    cfg = policy.config
    returns, advantages = returns_and_advantages(buffer, cfg.discount)
    states = np.vstack([tr.state for tr in buffer])
    actions = np.vstack([tr.action for tr in buffer])
    logp_old = np.array([tr.logp for tr in buffer])
    size = cfg.minibatch or len(buffer)

    losses, aborted = [], 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(buffer))
        for start in range(0, len(buffer), size):
            idx = order[start : start + size]
            a_loss, a_grads, stats = actor_loss(policy, states[idx], actions[idx], logp_old[idx], advantages[idx])
            c_loss, c_grads = critic_loss(policy, states[idx], returns[idx])
            if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
                logger.warning("Aborting PPO epoch %d: non-finite loss.", epoch)
                aborted += 1
                break
            a_grads, _ = net.clip_global_norm(a_grads, cfg.grad_clip)
            c_grads, _ = net.clip_global_norm(c_grads, cfg.grad_clip)
            net.adam_step(policy.actor_optimizer, policy.actor, a_grads)
            net.adam_step(policy.critic_optimizer, policy.critic, c_grads)
            losses.append((a_loss, c_loss, stats["entropy"], stats["mean_ratio"], stats["clip_fraction"]))

    if not losses:
        nan = float("nan")
        return UpdateDiagnostics(nan, nan, nan, nan, nan, aborted)
    means = np.mean(np.array(losses), axis=0)
    return UpdateDiagnostics(*(float(v) for v in means), aborted)
