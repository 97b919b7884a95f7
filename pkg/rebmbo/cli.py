"""
Command-line front end: ``rebmbo run``, ``rebmbo sweep`` and ``rebmbo report``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 partial sweep failure.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import pkg_resources
import yaml
from jinja2 import Environment, FileSystemLoader
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from rebmbo import metrics
from rebmbo.config import BASE_SETTING, ExperimentFile, parse_config
from rebmbo.errors import ConfigError, InputError, RebmboError, RunAborted
from rebmbo.orchestrator import run_method
from rebmbo.traces import load_trace, trace_paths


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

MANIFEST_FILENAME = "manifest.yaml"
THREADS_ENV = "REBMBO_THREADS"

# Local path to the folder containing the report templates
TEMPLATES_FOLDER_PATH = pkg_resources.resource_filename("rebmbo", "templates")

env = Environment(loader=FileSystemLoader(TEMPLATES_FOLDER_PATH), keep_trailing_newline=True)


class SweepManifest(yaml.YAMLObject):
    """
    Index of the runs written by one sweep. Each entry holds setting, method, seed,
    the LAR alpha of its setting, status ("complete", "partial" or "failed"), trace paths relative to the
    manifest and the error text of failed runs.
    """

    yaml_tag = "!SweepManifest"

    def __init__(self, benchmark, dim, iterations, checkpoints, alpha, entries=None):
        self.benchmark = benchmark
        self.dim = dim
        self.iterations = iterations
        self.checkpoints = checkpoints
        self.alpha = alpha
        self.entries = entries or []

    @property
    def failed(self) -> List[Dict]:
        return [e for e in self.entries if e["status"] != "complete"]

    def write_to_file(self, path: str) -> None:
        with open(path, "w") as f:
            yaml.dump(self, f)

    @classmethod
    def read_from_file(cls, path: str) -> "SweepManifest":
        with open(path, "r") as f:
            manifest = yaml.load(f, Loader=yaml.FullLoader)
        if not isinstance(manifest, cls):
            raise InputError(f"{path} is not a sweep manifest.")
        return manifest


def setup_logging(verbose: bool = False) -> None:
    package_logger = logging.getLogger("rebmbo")
    package_logger.handlers = [RichHandler(show_path=False, markup=False)]
    package_logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    package_logger.propagate = False


def cmd_run(experiment: ExperimentFile, method: str, seed: int, output_dir: Optional[str] = None):
    """
    Runs one (method, seed) pair and writes its JSON and CSV traces.

    A failed run leaves ``.partial`` traces behind and re-raises :class:`RunAborted`.

    :return: (json path, csv path)
    """
    output_dir = output_dir or experiment.output_dir
    os.makedirs(output_dir, exist_ok=True)
    config = experiment.run_config(method, seed)
    try:
        trace = run_method(config)
    except RunAborted as e:
        json_path, csv_path = trace_paths(output_dir, experiment.benchmark, method, seed, partial=True)
        e.partial_trace.write_json(json_path)
        e.partial_trace.write_csv(csv_path)
        logger.error("Partial trace written to %s", json_path)
        raise
    json_path, csv_path = trace_paths(output_dir, experiment.benchmark, method, seed)
    trace.write_json(json_path)
    trace.write_csv(csv_path)
    logger.info("Wrote %s and %s", json_path, csv_path)
    return json_path, csv_path


def _sweep_job(
    experiment: ExperimentFile, method: str, seed: int, output_dir: str, setting: str = BASE_SETTING, root=None
) -> Dict:
    root = root or output_dir
    entry = {
        "setting": setting,
        "method": method,
        "seed": int(seed),
        "alpha": experiment.metrics.alpha,
        "status": "complete",
        "json": None,
        "csv": None,
        "error": None,
    }
    try:
        json_path, csv_path = cmd_run(experiment, method, seed, output_dir)
    except RunAborted as e:
        json_path, csv_path = trace_paths(output_dir, experiment.benchmark, method, seed, partial=True)
        entry.update(status="partial", error=str(e))
    except Exception as e:
        logger.exception("Run %s/%s (%s) failed", method, seed, setting)
        entry.update(status="failed", error=f"{type(e).__name__}: {e}")
        return entry
    entry.update(json=os.path.relpath(json_path, root), csv=os.path.relpath(csv_path, root))
    return entry


def sweep_workers(n_seeds: int) -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return max(1, n_seeds)
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}.", THREADS_ENV)
    if workers < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {workers}.", THREADS_ENV)
    return workers


def cmd_sweep(experiment: ExperimentFile, output_dir: Optional[str] = None, workers: Optional[int] = None):
    """
    Runs every method x seed pair of every setting and writes ``manifest.yaml``
    next to the traces. Base-setting traces go to ``output_dir``, swept settings to
    a subdirectory named after their label.

    :return: (manifest path, manifest)
    """
    output_dir = output_dir or experiment.output_dir
    os.makedirs(output_dir, exist_ok=True)
    jobs = []
    for setting, variant in experiment.settings():
        setting_dir = output_dir if setting == BASE_SETTING else os.path.join(output_dir, setting)
        for method in experiment.methods:
            for seed in experiment.seeds:
                jobs.append((variant, method, seed, setting_dir, setting, output_dir))
    workers = workers or sweep_workers(len(experiment.seeds))
    if workers == 1:
        entries = [_sweep_job(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_job, *job) for job in jobs]
            entries = [future.result() for future in futures]

    manifest = SweepManifest(
        benchmark=experiment.benchmark,
        dim=experiment.dim,
        iterations=experiment.iterations,
        checkpoints=list(experiment.checkpoints),
        alpha=experiment.metrics.alpha,
        entries=entries,
    )
    manifest_path = os.path.join(output_dir, MANIFEST_FILENAME)
    manifest.write_to_file(manifest_path)
    logger.info("Sweep finished: %d runs, %d failed. Manifest: %s", len(entries), len(manifest.failed), manifest_path)
    return manifest_path, manifest


def _plot_data(setting: str, traces, alpha: float) -> pd.DataFrame:
    """Long-format mean/std curves over every iteration."""
    horizon = len(traces[0].records)
    frame = metrics.summarize(traces, checkpoints=range(1, horizon + 1), alpha=alpha)
    frame.insert(0, "setting", setting)
    return frame[["setting", "method", "metric", "t", "mean", "std"]]


def cmd_report(manifest_path: str, checkpoints: Optional[List[int]] = None, output_dir: Optional[str] = None):
    """
    Summarizes the completed runs of a sweep into ``summary.csv``,
    ``plot_data.csv`` and ``report.md``.

    :return: summary DataFrame
    """
    manifest = SweepManifest.read_from_file(manifest_path)
    base = os.path.dirname(manifest_path)
    output_dir = output_dir or base
    os.makedirs(output_dir, exist_ok=True)
    checkpoints = checkpoints or manifest.checkpoints

    groups: Dict[tuple, list] = {}
    alphas: Dict[str, float] = {}
    for entry in manifest.entries:
        if entry["status"] != "complete":
            continue
        setting = entry.get("setting", BASE_SETTING)
        alphas.setdefault(setting, entry.get("alpha", manifest.alpha))
        groups.setdefault((setting, entry["method"]), []).append(load_trace(os.path.join(base, entry["json"])))
    if not groups:
        raise InputError(f"{manifest_path} lists no completed runs.")

    order = list(alphas)
    summaries, curves, sections = [], [], []
    for setting, method in sorted(groups, key=lambda key: (order.index(key[0]), key[1])):
        traces = groups[(setting, method)]
        summary = metrics.summarize(traces, checkpoints=checkpoints, alpha=alphas[setting])
        summary.insert(0, "setting", setting)
        summaries.append(summary)
        curves.append(_plot_data(setting, traces, alphas[setting]))
        best = np.array([t.best()[1] for t in traces])
        sections.append(
            {
                "name": method if setting == BASE_SETTING else f"{method} [{setting}]",
                "runs": len(traces),
                "best_mean": float(np.mean(best)),
                "best_std": float(np.std(best, ddof=1)) if len(best) > 1 else 0.0,
                "rows": summary.to_dict("records"),
            }
        )
    summary = pd.concat(summaries, ignore_index=True)
    summary.to_csv(os.path.join(output_dir, "summary.csv"), index=False)
    pd.concat(curves, ignore_index=True).to_csv(os.path.join(output_dir, "plot_data.csv"), index=False)

    report = env.get_template("report.md.jinja").render(
        benchmark=manifest.benchmark,
        dim=manifest.dim,
        iterations=manifest.iterations,
        alpha=manifest.alpha,
        methods=sections,
        skipped=manifest.failed,
    )
    with open(os.path.join(output_dir, "report.md"), "w") as f:
        f.write(report)
    _print_summary(summary)
    return summary


def _print_summary(summary: pd.DataFrame) -> None:
    table = Table(title="Mean ± std across seeds")
    for column in ("setting", "method", "metric", "t", "mean", "std"):
        table.add_column(column, justify="left" if column in ("setting", "method", "metric") else "right")
    for row in summary.itertuples(index=False):
        table.add_row(row.setting, row.method, row.metric, str(row.t), f"{row.mean:.6g}", f"{row.std:.3g}")
    Console(stderr=True).print(table)


def _parse_checkpoints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Checkpoints must be a comma-separated list of integers, got {text!r}.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rebmbo", description="Seeded black-box optimization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="run one method with one seed")
    run.add_argument("--config", required=True, help="path to the experiment file")
    run.add_argument("--method", required=True, help="rebmbo-c, rebmbo-s, rebmbo-d, gp-ucb or random")
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--out", help="output directory (defaults to output_dir in the config)")

    sweep = subparsers.add_parser("sweep", help="run every method x seed of every setting in the experiment file")
    sweep.add_argument("--config", required=True, help="path to the experiment file")
    sweep.add_argument("--out", help="output directory (defaults to output_dir in the config)")

    report = subparsers.add_parser("report", help="summarize a sweep")
    report.add_argument("--manifest", required=True, help=f"path to {MANIFEST_FILENAME}")
    report.add_argument("--checkpoints", type=_parse_checkpoints, help="e.g. 10,20,30")
    report.add_argument("--out", help="output directory (defaults to the manifest's directory)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        if args.command == "run":
            cmd_run(parse_config(args.config), args.method, args.seed, args.out)
        elif args.command == "sweep":
            _, manifest = cmd_sweep(parse_config(args.config), args.out)
            if manifest.failed:
                return EXIT_PARTIAL
        else:
            cmd_report(args.manifest, args.checkpoints, args.out)
    except (ConfigError, InputError, FileNotFoundError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except (RebmboError, OSError) as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
