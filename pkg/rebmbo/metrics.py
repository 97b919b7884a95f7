"""
Regret, Landscape-Aware Regret (LAR) and cross-seed summaries.

LAR_t = [f(x*) - f(x_t)] + alpha * [E(x*) - E(x_t)], with both energies taken
from the same EBM snapshot.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from rebmbo.errors import InputError, ParameterError
from rebmbo.traces import RunTrace


logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.3
METRICS = ("simple_regret", "lar")


@dataclass(frozen=True)
class RegretSeries:
    instantaneous: np.ndarray
    cumulative: np.ndarray
    simple: np.ndarray
    lar: Optional[np.ndarray]
    alpha: float


def _ys(trace_or_ys) -> np.ndarray:
    if isinstance(trace_or_ys, RunTrace):
        return trace_or_ys.ys()
    return np.asarray(trace_or_ys, dtype=float)


def instantaneous_regret(f_opt: Optional[float], y):
    if f_opt is None:
        raise ParameterError("Regret needs a known optimum; this benchmark has none.")
    return f_opt - np.asarray(y, dtype=float) if np.ndim(y) else f_opt - float(y)


def simple_regret(trace, f_opt: float) -> np.ndarray:
    """Running minimum of the instantaneous regret."""
    return np.minimum.accumulate(instantaneous_regret(f_opt, _ys(trace)))


def cumulative_regret(trace, f_opt: float) -> np.ndarray:
    return np.cumsum(instantaneous_regret(f_opt, _ys(trace)))


def lar_values(ys, energies, energies_opt, f_opt: float, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    if any(e is None for e in energies) or any(e is None for e in energies_opt):
        raise InputError("LAR needs the raw energy at x_t and at the optimizer for every iteration.")
    energies = np.asarray(energies, dtype=float)
    energies_opt = np.asarray(energies_opt, dtype=float)
    regret = instantaneous_regret(f_opt, ys)
    if alpha == 0:
        return regret
    return regret + alpha * (energies_opt - energies)


def lar(trace: RunTrace, f_opt: float, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """LAR per iteration from the energies recorded in ``trace``."""
    return lar_values(
        trace.ys(),
        [r.energy_raw for r in trace.records],
        [r.energy_opt for r in trace.records],
        f_opt,
        alpha,
    )


def has_energies(trace: RunTrace) -> bool:
    return bool(trace.records) and all(
        r.energy_raw is not None and r.energy_opt is not None for r in trace.records
    )


def regret_series(trace: RunTrace, f_opt: float, alpha: float = DEFAULT_ALPHA) -> RegretSeries:
    return RegretSeries(
        instantaneous=instantaneous_regret(f_opt, trace.ys()),
        cumulative=cumulative_regret(trace, f_opt),
        simple=simple_regret(trace, f_opt),
        lar=lar(trace, f_opt, alpha) if has_energies(trace) else None,
        alpha=alpha,
    )


def clamp_checkpoints(checkpoints: Iterable[int], horizon: int) -> List[int]:
    """Sorted unique checkpoints inside 1..horizon; larger ones are clamped to the horizon."""
    clamped = []
    for c in checkpoints:
        if c > horizon:
            logger.warning("Checkpoint %d is beyond the %d recorded iterations; using %d.", c, horizon, horizon)
            c = horizon
        if c < 1:
            raise ParameterError(f"Checkpoints must be >= 1, got {c}.")
        clamped.append(int(c))
    return sorted(set(clamped))


def _homogeneity_key(trace: RunTrace):
    benchmark = trace.header.get("benchmark", {})
    return trace.method, benchmark.get("name"), benchmark.get("dim"), len(trace.records)


def summarize(
    traces: Sequence[RunTrace],
    checkpoints: Optional[Iterable[int]] = None,
    alpha: float = DEFAULT_ALPHA,
    metrics: Sequence[str] = METRICS,
) -> pd.DataFrame:
    """
    Mean and sample standard deviation (n - 1 denominator) of each metric at each
    checkpoint across seeds. A single trace reports std 0 with ``single_run`` set.

    :return: DataFrame with columns method, metric, t, mean, std, n, single_run
    """
    if not traces:
        raise InputError("summarize needs at least one trace.")
    keys = {_homogeneity_key(t) for t in traces}
    if len(keys) != 1:
        raise InputError(f"Traces come from different configurations: {sorted(map(str, keys))}.")
    method, _, _, horizon = keys.pop()
    if horizon == 0:
        raise InputError("Traces have no iterations.")
    checkpoints = clamp_checkpoints(checkpoints or [horizon], horizon)
    f_opt = traces[0].header["benchmark"]["optimum_value"]

    data = {"method": [], "metric": [], "t": [], "mean": [], "std": [], "n": [], "single_run": []}
    for metric in metrics:
        if metric == "lar" and not all(has_energies(t) for t in traces):
            continue
        if metric == "simple_regret":
            series = np.vstack([simple_regret(t, f_opt) for t in traces])
        elif metric == "lar":
            series = np.vstack([lar(t, f_opt, alpha) for t in traces])
        else:
            raise ParameterError(f"Unknown metric {metric!r}; expected one of {METRICS}.")
        for c in checkpoints:
            column = series[:, c - 1]
            data["method"].append(method)
            data["metric"].append(metric)
            data["t"].append(c)
            data["mean"].append(float(np.mean(column)))
            data["std"].append(float(np.std(column, ddof=1)) if len(column) > 1 else 0.0)
            data["n"].append(len(column))
            data["single_run"].append(len(column) == 1)
    return pd.DataFrame(data)
