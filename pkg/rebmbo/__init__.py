__version__ = "0.1.0"

from rebmbo.benchmarks import BenchmarkSpec, lookup  # noqa: E402
from rebmbo.config import ExperimentFile, RunConfig, parse_config  # noqa: E402
from rebmbo.orchestrator import run_gp_ucb, run_method, run_random, run_rebmbo  # noqa: E402
from rebmbo.traces import IterationRecord, RunTrace, load_trace  # noqa: E402
