"""
Analytic test objectives with their domain boxes and known optima.

Every objective is exposed under a single maximize-f convention: classical
minimization problems are stored with ``sign = -1`` so that ``f = -raw``.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from rebmbo.errors import InputError, ParameterError, UnknownBenchmarkError


Box = List[Tuple[float, float]]


def _as_point(x, dim: Optional[int] = None, min_dim: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"Expected a 1-d point, got an array of shape {x.shape}.")
    if dim is not None and x.shape[0] != dim:
        raise InputError(f"Expected a point of dimension {dim}, got {x.shape[0]}.")
    if x.shape[0] < min_dim:
        raise InputError(f"Expected a point of dimension at least {min_dim}, got {x.shape[0]}.")
    if not np.all(np.isfinite(x)):
        raise InputError("Point contains non-finite coordinates.")
    return x


def branin(x) -> float:
    """Raw Branin value (minimization form)."""
    x1, x2 = _as_point(x, dim=2)
    b = 5.1 / (4.0 * math.pi ** 2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return float((x2 - b * x1 ** 2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * math.cos(x1) + 10.0)


def ackley(x, a: float = 20.0, b: float = 0.2, c: float = 2.0 * math.pi) -> float:
    """Raw Ackley value; depends only on the mean square and mean cosine of ``x``."""
    x = _as_point(x)
    mean_square = float(np.mean(x ** 2))
    mean_cos = float(np.mean(np.cos(c * x)))
    return -a * math.exp(-b * math.sqrt(mean_square)) - math.exp(mean_cos) + a + math.e


def rosenbrock(x) -> float:
    """Raw Rosenbrock value, sum of 100(x_{i+1} - x_i^2)^2 + (1 - x_i)^2."""
    x = _as_point(x, min_dim=2)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def hdbo_sum_exp(x) -> float:
    """Sum of exponentials, maximized at the upper corner of the box."""
    x = _as_point(x)
    return float(np.sum(np.exp(x)))


@dataclass(frozen=True)
class BenchmarkSpec:
    """
    A benchmark objective together with its domain.

    :param name: CLI-facing identifier
    :param dim: input dimension
    :param box: per-dimension (lower, upper) bounds
    :param optimum_value: max of ``f`` over the box under the maximize convention
    :param optimizer_points: points attaining the optimum (first one is the LAR reference)
    :param sign: +1 or -1 applied to the raw formula
    """

    name: str
    dim: int
    box: Box
    optimum_value: float
    optimizer_points: List[List[float]]
    sign: float
    raw: Callable = field(repr=False, compare=False)

    def __call__(self, x) -> float:
        return self.sign * self.raw(np.asarray(x, dtype=float))

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box], dtype=float)

    def describe(self) -> Dict:
        """Plain-data header for traces."""
        return {
            "name": self.name,
            "dim": self.dim,
            "box": [[float(lo), float(hi)] for lo, hi in self.box],
            "optimum_value": float(self.optimum_value),
            "optimizer_points": [[float(v) for v in p] for p in self.optimizer_points],
            "sign": float(self.sign),
        }


def _branin_spec(dim: int) -> BenchmarkSpec:
    # The three minimizers sit where cos(x1) = -1 and the squared term vanishes.
    points = []
    for x1 in (-math.pi, math.pi, 3.0 * math.pi):
        x2 = 5.1 / (4.0 * math.pi ** 2) * x1 ** 2 - 5.0 / math.pi * x1 + 6.0
        points.append([x1, x2])
    return BenchmarkSpec(
        name="branin",
        dim=2,
        box=[(-5.0, 10.0), (0.0, 15.0)],
        optimum_value=-branin(points[1]),
        optimizer_points=points,
        sign=-1.0,
        raw=branin,
    )


def _ackley_spec(dim: int) -> BenchmarkSpec:
    if dim < 1:
        raise ParameterError(f"ackley needs dim >= 1, got {dim}.")
    return BenchmarkSpec(
        name="ackley",
        dim=dim,
        box=[(-32.768, 32.768)] * dim,
        optimum_value=0.0,
        optimizer_points=[[0.0] * dim],
        sign=-1.0,
        raw=ackley,
    )


def _rosenbrock_spec(dim: int) -> BenchmarkSpec:
    if dim < 2:
        raise ParameterError(f"rosenbrock needs dim >= 2, got {dim}.")
    return BenchmarkSpec(
        name="rosenbrock",
        dim=dim,
        box=[(-2.0, 2.0)] * dim,
        optimum_value=0.0,
        optimizer_points=[[1.0] * dim],
        sign=-1.0,
        raw=rosenbrock,
    )


def _hdbo_spec(dim: int) -> BenchmarkSpec:
    if dim < 1:
        raise ParameterError(f"hdbo needs dim >= 1, got {dim}.")
    return BenchmarkSpec(
        name="hdbo",
        dim=dim,
        box=[(-5.0, 5.0)] * dim,
        optimum_value=hdbo_sum_exp(np.full(dim, 5.0)),
        optimizer_points=[[5.0] * dim],
        sign=1.0,
        raw=hdbo_sum_exp,
    )


# name -> (builder, default dim, dim overridable)
BENCHMARKS: Dict[str, Tuple[Callable[[int], BenchmarkSpec], int, bool]] = {
    "branin": (_branin_spec, 2, False),
    "ackley": (_ackley_spec, 5, True),
    "rosenbrock": (_rosenbrock_spec, 8, True),
    "hdbo": (_hdbo_spec, 200, True),
}


def lookup(name: str, dim_override: Optional[int] = None) -> BenchmarkSpec:
    """
    Returns the populated spec for a benchmark.

    :param name: one of ``BENCHMARKS``
    :param dim_override: replaces the default dimension (not allowed for branin)
    """
    if name not in BENCHMARKS:
        raise UnknownBenchmarkError(f"Unknown benchmark {name!r}; expected one of {sorted(BENCHMARKS)}.")
    builder, default_dim, overridable = BENCHMARKS[name]
    if dim_override is not None and dim_override != default_dim and not overridable:
        raise ParameterError(f"Benchmark {name!r} has a fixed dimension of {default_dim}.")
    return builder(default_dim if dim_override is None else int(dim_override))


def grid_refine_optimum(spec: BenchmarkSpec, points_per_dim: int = 201, n_refine: int = 8):
    """
    Locates the maximum of a low-dimensional benchmark by a dense grid followed by
    bounded local refinement of the best grid cells.

    :return: (best value, list of refined maximizers sorted by value)
    """
    if spec.dim > 3:
        raise ParameterError("Grid search is only meant for benchmarks with dim <= 3.")
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in spec.box]
    grid = np.array(list(itertools.product(*axes)))
    values = np.array([spec(p) for p in grid])
    order = np.argsort(-values)[: n_refine * 8]

    refined = []
    for idx in order:
        res = minimize(lambda z: -spec(z), grid[idx], method="L-BFGS-B", bounds=spec.box)
        if not any(np.allclose(res.x, other, atol=1e-4) for _, other in refined):
            refined.append((-float(res.fun), res.x))
        if len(refined) >= n_refine:
            break
    refined.sort(key=lambda item: -item[0])
    return refined[0][0], [point for _, point in refined]
