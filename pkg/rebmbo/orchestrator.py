"""
The REBMBO loop and the baseline optimizers.

Each iteration of :func:`run_rebmbo` refits the surrogate, trains the energy
model on the observed inputs, builds the PPO state, selects a point (EBM-UCB
during warmup, the policy afterwards), evaluates it, rewards the agent and
records everything in the trace.
"""
import logging
import time
from typing import Callable, Dict, Optional

import numpy as np
from scipy.linalg import LinAlgError
from scipy.stats import qmc

from rebmbo import agent as ppo
from rebmbo import benchmarks, ebm
from rebmbo.acquisition import maximize
from rebmbo.config import VARIANT_CODES, RunConfig
from rebmbo.errors import ParameterError, RebmboError, RunAborted
from rebmbo.gp import Dataset, GpModel, fit_deep, fit_exact, fit_sparse, initial_params, optimize_hyperparams
from rebmbo.gp.models import from_unit
from rebmbo.kernels import KernelParams
from rebmbo.traces import IterationRecord, RunTrace


logger = logging.getLogger(__name__)

# Independent random streams, spawned in this order from the run seed for every method.
STREAMS = ("design", "ebm_init", "ebm_train", "acquisition", "agent_init", "agent_act", "ppo")

MEMO_TOLERANCE = 1e-12


class MemoizedObjective:
    """
    Wraps an objective so that a point within ``tolerance`` (max-norm) of an
    earlier query reuses the stored value instead of a new evaluation.
    """

    def __init__(self, fn: Callable, tolerance: float = MEMO_TOLERANCE):
        self.fn = fn
        self.tolerance = tolerance
        self._points = None
        self.values = []

    @property
    def evaluations(self) -> int:
        return len(self.values)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        n = len(self.values)
        if n:
            hits = np.flatnonzero(np.max(np.abs(self._points[:n] - x), axis=1) <= self.tolerance)
            if hits.size:
                return self.values[hits[0]]
        value = float(self.fn(x))
        if self._points is None:
            self._points = np.empty((16, x.shape[0]))
        elif n == self._points.shape[0]:
            self._points = np.vstack([self._points, np.empty_like(self._points)])
        self._points[n] = x
        self.values.append(value)
        return value


def select_variant(config: RunConfig) -> Callable[[Dataset, KernelParams], GpModel]:
    """
    Surrogate fitting strategy for the configured variant: C exact, S sparse with
    m = min(inducing, n), D deep features.
    """
    gp = config.gp
    if config.variant == "C":
        return lambda dataset, params: fit_exact(dataset, params, gp.noise)
    if config.variant == "S":
        return lambda dataset, params: fit_sparse(
            dataset, min(gp.inducing, dataset.n), params, gp.noise, seed=config.seed
        )
    if config.variant == "D":
        return lambda dataset, params: fit_deep(
            dataset,
            gp.feature_dim,
            params,
            beta=gp.deep_beta,
            epochs=gp.deep_epochs,
            learning_rate=gp.deep_learning_rate,
            hidden=gp.deep_hidden,
            seed=config.seed,
        )
    raise ParameterError(f"Unknown variant {config.variant!r}; expected one of {sorted(VARIANT_CODES)}.")


class _Run:
    """State shared by all methods: objective, streams, dataset, trace."""

    def __init__(self, config: RunConfig, objective: Optional[Callable]):
        self.config = config
        self.spec = benchmarks.lookup(config.benchmark, config.dim)
        self.box = np.array(self.spec.box, dtype=float)
        self.objective = MemoizedObjective(objective or self.spec)
        sequences = np.random.SeedSequence(config.seed).spawn(len(STREAMS))
        self.rng = {name: np.random.default_rng(seq) for name, seq in zip(STREAMS, sequences)}
        self.params = initial_params(self.spec.dim, config.gp.kernel)
        self.dataset = Dataset.empty(self.box)
        self.best_y = -np.inf
        self.min_regret = np.inf
        self.cumulative = 0.0
        self.trace = RunTrace(header=self._header())

    def _header(self) -> Dict:
        config = self.config.to_dict()
        config["acquisition"]["n_candidates"] = self.config.acquisition.candidate_count(self.spec.dim)
        return {
            "run_id": f"{self.spec.name}-{self.config.method}-seed{self.config.seed}",
            "method": self.config.method,
            "seed": self.config.seed,
            "variant": VARIANT_CODES[self.config.variant],
            "benchmark": self.spec.describe(),
            "lar_reference": list(self.spec.optimizer_points[0]),
            "warmup": self.config.warmup,
            "config": config,
        }

    def initial_design(self) -> None:
        n0 = self.config.initial_design
        design = from_unit(qmc.LatinHypercube(d=self.spec.dim, seed=self.rng["design"]).random(n0), self.box)
        for x in design:
            y = self.objective(x)
            self.dataset = self.dataset.append(x, y)
            self.trace.initial.append({"x": list(x), "y": y})
            self.best_y = max(self.best_y, y)

    def fit_surrogate(self, t: int, fit: Callable):
        gp = self.config.gp
        info = {"refit": False}
        refit = self.config.variant != "D" and (self.dataset.n <= gp.refit_until or t % gp.refit_every == 0)
        if refit:
            result = optimize_hyperparams(
                self.dataset,
                self.params,
                gp.noise,
                budget=gp.hyperparam_budget,
                n_starts=gp.hyperparam_starts,
                seed=self.config.seed + t,
            )
            self.params = result.params
            info.update(refit=True, log_likelihood=result.log_likelihood, fallback=result.fallback)
        model = fit(self.dataset, self.params)
        info.update(jitter=model.jitter, params=self.params.describe())
        return model, info

    def record(self, t: int, x, y: float, started: float, **fields) -> IterationRecord:
        self.dataset = self.dataset.append(x, y)
        self.best_y = max(self.best_y, y)
        regret = self.spec.optimum_value - y
        self.min_regret = min(self.min_regret, regret)
        self.cumulative += regret
        lar = None
        if fields.get("energy_raw") is not None:
            lar = regret + self.config.metrics.alpha * (fields["energy_opt"] - fields["energy_raw"])
        wall_ms = (time.perf_counter() - started) * 1000.0 if self.config.record_wall_time else 0.0
        record = IterationRecord(
            t=t,
            x=[float(v) for v in x],
            y=float(y),
            best_y=float(self.best_y),
            regret_inst=float(regret),
            regret_simple=float(self.min_regret),
            regret_cumulative=float(self.cumulative),
            lar=lar,
            wall_ms=wall_ms,
            **fields,
        )
        self.trace.records.append(record)
        logger.info(
            "[%s] t=%d y=%.6g best=%.6g regret=%.4g", self.trace.run_id, t, y, self.best_y, self.min_regret
        )
        return record

    def guarded(self, body: Callable) -> RunTrace:
        try:
            self.initial_design()
            for t in range(1, self.config.iterations + 1):
                body(t)
        except (RebmboError, LinAlgError, FloatingPointError) as e:
            self.trace.status = "partial"
            self.trace.error = f"{type(e).__name__}: {e}"
            logger.error("Run %s aborted after %d iterations: %s", self.trace.run_id, len(self.trace.records), e)
            raise RunAborted(self.trace.error, self.trace) from e
        return self.trace


def _ebm_diagnostics(model: ebm.EnergyModel) -> Dict:
    last = model.history[-1] if model.history else None
    return {
        "mean_positive": last.mean_positive if last else None,
        "mean_negative": last.mean_negative if last else None,
        "steps": model.steps_trained,
        "skipped": model.optimizer.skipped,
        "reinitialized": model.reinitialized,
    }


def run_rebmbo(config: RunConfig, objective: Optional[Callable] = None) -> RunTrace:
    """
    Runs the full loop for ``config.variant``.

    :param objective: maps an x in the benchmark box to the value to maximize;
                      defaults to the configured benchmark
    :raises RunAborted: with the partial trace attached when a module fails
    """
    run = _Run(config, objective)
    fit = select_variant(config)
    d, T, W = run.spec.dim, config.iterations, config.warmup
    agent_cfg = config.agent
    x_star = np.asarray(run.spec.optimizer_points[0], dtype=float)

    energy_model = None
    if config.ebm.enabled:
        energy_model = ebm.init_energy_model(run.box, config.ebm, seed=run.rng["ebm_init"])
    anchors = ppo.make_anchors(run.box, agent_cfg.anchors, run.rng["agent_init"])
    policy = None
    if agent_cfg.enabled:
        policy = ppo.init_policy(ppo.feature_length(agent_cfg.anchors), d, agent_cfg, seed=run.rng["agent_init"])
        policy.anchors = anchors

    def iteration(t: int) -> None:
        started = time.perf_counter()
        model, gp_info = run.fit_surrogate(t, fit)

        ebm_info = {}
        if energy_model is not None:
            ebm.train_epochs(
                energy_model, run.dataset.X, config.ebm.epochs, config.ebm.batch_size, run.rng["ebm_train"]
            )
            ebm_info = _ebm_diagnostics(energy_model)

        state = None
        if policy is not None:
            state = ppo.featurize(model, energy_model, anchors, run.best_y, t, T)

        score = None
        if policy is None or t <= W:
            proposal = maximize(model, energy_model, run.box, config.acquisition, run.rng["acquisition"])
            x, score, selector = proposal.x, proposal.score, "acquisition"
            z = ppo.from_box(x, run.box)
            logp = ppo.log_prob(policy, state, z) if policy is not None else None
        else:
            action = ppo.act(policy, state, run.rng["agent_act"], run.box)
            x, z, logp, selector = action.x, action.z, action.logp, "policy"

        y = run.objective(x)

        energy_raw = energy_norm = energy_opt = None
        if energy_model is not None:
            energy_raw = ebm.energy(energy_model, x)
            energy_opt = ebm.energy(energy_model, x_star)
            reference = np.append(ebm.energy_many(energy_model, anchors), energy_raw)
            energy_norm = float(ebm.normalize_energies([energy_raw], reference=reference)[0])
        y_standardized = (y - model.y_mean) / model.y_std
        r = ppo.reward(y_standardized, energy_norm if energy_norm is not None else 0.0, agent_cfg.reward_lambda)

        ppo_info = {}
        if policy is not None:
            policy.buffer.append(ppo.Transition(state, np.asarray(z), logp, r, ppo.value(policy, state)))
            ppo_info = ppo.ppo_update(policy, policy.buffer, run.rng["ppo"])._asdict()
            ppo_info["logp"] = logp

        run.record(
            t,
            x,
            y,
            started,
            energy_raw=energy_raw,
            energy_norm=energy_norm,
            energy_opt=energy_opt,
            reward=r,
            selector=selector,
            score=score,
            gp=gp_info,
            ebm=ebm_info,
            ppo=ppo_info,
        )

    return run.guarded(iteration)


def run_gp_ucb(config: RunConfig, objective: Optional[Callable] = None) -> RunTrace:
    """Single-step GP-UCB: the same surrogate, plain UCB maximization, no EBM and no agent."""
    run = _Run(config, objective)
    fit = select_variant(config)

    def iteration(t: int) -> None:
        started = time.perf_counter()
        model, gp_info = run.fit_surrogate(t, fit)
        proposal = maximize(model, None, run.box, config.acquisition, run.rng["acquisition"])
        y = run.objective(proposal.x)
        run.record(t, proposal.x, y, started, selector="ucb", score=proposal.score, gp=gp_info)

    return run.guarded(iteration)


def run_random(config: RunConfig, objective: Optional[Callable] = None) -> RunTrace:
    """Uniform random search over the box after the shared initial design."""
    run = _Run(config, objective)

    def iteration(t: int) -> None:
        started = time.perf_counter()
        x = from_unit(run.rng["acquisition"].uniform(0.0, 1.0, size=run.spec.dim), run.box)
        run.record(t, x, run.objective(x), started, selector="random")

    return run.guarded(iteration)


RUNNERS = {
    "rebmbo": run_rebmbo,
    "rebmbo-c": run_rebmbo,
    "rebmbo-s": run_rebmbo,
    "rebmbo-d": run_rebmbo,
    "gp-ucb": run_gp_ucb,
    "random": run_random,
}


def run_method(config: RunConfig, objective: Optional[Callable] = None) -> RunTrace:
    if config.method not in RUNNERS:
        raise ParameterError(f"Unknown method {config.method!r}; expected one of {sorted(RUNNERS)}.")
    return RUNNERS[config.method](config, objective)
