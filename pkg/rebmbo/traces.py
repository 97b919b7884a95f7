"""
Run traces: one header plus one record per BO iteration, persisted as a
full-fidelity JSON document and a flat CSV table.
"""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np
import pandas as pd


logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "run_id",
    "method",
    "benchmark",
    "dim",
    "seed",
    "t",
    "y",
    "best_y",
    "energy_raw",
    "energy_norm",
    "reward",
    "regret_inst",
    "regret_simple",
    "lar",
    "wall_ms",
]
# x coordinates only go to the CSV up to this dimension
MAX_CSV_DIM = 20


def plain(value):
    """Converts numpy scalars/arrays to JSON-ready Python types; NaN becomes None."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


@dataclass
class IterationRecord:
    """
    One BO iteration. Energies are ``None`` for methods without an energy model.

    ``energy_opt`` is the raw energy of the reference optimizer on the same EBM
    snapshot as ``energy_raw``.
    """

    t: int
    x: List[float]
    y: float
    best_y: float
    regret_inst: Optional[float] = None
    regret_simple: Optional[float] = None
    regret_cumulative: Optional[float] = None
    energy_raw: Optional[float] = None
    energy_norm: Optional[float] = None
    energy_opt: Optional[float] = None
    reward: Optional[float] = None
    lar: Optional[float] = None
    selector: str = ""
    score: Optional[float] = None
    gp: Dict = field(default_factory=dict)
    ebm: Dict = field(default_factory=dict)
    ppo: Dict = field(default_factory=dict)
    wall_ms: float = 0.0

    @classmethod
    def from_dict(cls, data: Dict) -> "IterationRecord":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class RunTrace:
    """
    :param header: run id, method, seed, benchmark description and the resolved config
    :param initial: the initial design as a list of {"x": ..., "y": ...}
    :param records: one record per iteration, ordered by t
    :param status: "complete" or "partial"
    """

    header: Dict
    initial: List[Dict] = field(default_factory=list)
    records: List[IterationRecord] = field(default_factory=list)
    status: str = "complete"
    error: Optional[str] = None

    @property
    def run_id(self) -> str:
        return self.header.get("run_id", "")

    @property
    def method(self) -> str:
        return self.header.get("method", "")

    def ys(self) -> np.ndarray:
        return np.array([r.y for r in self.records], dtype=float)

    def best(self):
        """(x, y) with the largest y over the initial design and all iterations."""
        points = [(p["x"], p["y"]) for p in self.initial] + [(r.x, r.y) for r in self.records]
        if not points:
            return None, None
        return max(points, key=lambda item: item[1])

    def format_for_dump(self) -> Dict:
        return plain(
            {
                "header": self.header,
                "initial": self.initial,
                "records": [asdict(r) for r in self.records],
                "status": self.status,
                "error": self.error,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.format_for_dump(), sort_keys=True, indent=2)

    def write_json(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def from_dict(cls, data: Dict) -> "RunTrace":
        return cls(
            header=data["header"],
            initial=data.get("initial", []),
            records=[IterationRecord.from_dict(r) for r in data.get("records", [])],
            status=data.get("status", "complete"),
            error=data.get("error"),
        )

    def to_frame(self) -> pd.DataFrame:
        """Flat per-iteration table in the fixed CSV column order."""
        benchmark = self.header.get("benchmark", {})
        dim = int(benchmark.get("dim", len(self.records[0].x) if self.records else 0))
        data = {column: [] for column in CSV_COLUMNS}
        x_columns = [f"x_{i}" for i in range(dim)] if dim <= MAX_CSV_DIM else []
        for column in x_columns:
            data[column] = []
        for r in self.records:
            data["run_id"].append(self.run_id)
            data["method"].append(self.method)
            data["benchmark"].append(benchmark.get("name"))
            data["dim"].append(dim)
            data["seed"].append(self.header.get("seed"))
            for column in CSV_COLUMNS[5:]:
                data[column].append(getattr(r, column))
            for i, column in enumerate(x_columns):
                data[column].append(r.x[i])
        return pd.DataFrame(data, columns=CSV_COLUMNS + x_columns)

    def write_csv(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self.to_frame().to_csv(path, index=False)


def load_trace(path: str) -> RunTrace:
    with open(path, "r") as f:
        return RunTrace.from_dict(json.load(f))


def trace_paths(output_dir: str, benchmark: str, method: str, seed: int, partial: bool = False):
    """(json path, csv path) for one run; names encode benchmark, method and seed."""
    stem = os.path.join(output_dir, f"{benchmark}_{method}_seed{seed}")
    suffix = ".partial" if partial else ""
    return f"{stem}{suffix}.json", f"{stem}{suffix}.csv"
