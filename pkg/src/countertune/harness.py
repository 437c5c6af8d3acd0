"""Replay experiments: repeated simulated searches and their reports.

A simulated search walks a recorded dataset instead of launching kernels,
so thousands of repetitions cost seconds. The quantity of interest is the
number of empirical tests until the search first evaluates a
well-performing configuration (runtime within slack * best); reports also
carry best-so-far convergence curves per step and per unit of simulated
tuning time.

Repetitions fan out over processes when COUNTERTUNE_WORKERS asks for more
than one worker. Per-repetition seeds derive from the master seed alone and
aggregation runs in repetition order, so worker count never changes any
reported number.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import counters as counter_catalog
from .counters import GLOBAL_THREADS
from .bottlenecks import DEFAULT_INST_REACTION
from .errors import CounterTuneError
from .models import ExactModelSet, ModelSet
from .search import (DatasetReplaySource, PredictionTable, run_profile_search,
                     run_random_search, STATUS_STOPPED)
from .space import Dataset, well_performing_set

WORKERS_ENV = "COUNTERTUNE_WORKERS"

SEARCHER_PROFILE = "profile"
SEARCHER_RANDOM = "random"

DEFAULT_REPETITIONS = 1000
DEFAULT_TIME_REPETITIONS = 100
# Assumed wall-time cost of one profiled run relative to a plain run. Real
# collection needs one pass per counter group plus replay, so a profiled
# evaluation is severalfold slower; 3.0 is this simulator's invented
# default and should be overridden with a measured value when one exists.
DEFAULT_PROFILING_OVERHEAD = 3.0

TIME_GRID_POINTS = 100


@dataclass
class ExperimentSpec:
    """Everything one batch of simulated repetitions depends on."""

    dataset: Dataset
    searcher: str = SEARCHER_RANDOM
    model: object = None
    name: str = "experiment"
    repetitions: int = DEFAULT_REPETITIONS
    inner_steps: int = 5
    outer_iterations: Optional[int] = None
    seed: int = 0
    slack: float = 1.1
    profiling_overhead: float = DEFAULT_PROFILING_OVERHEAD
    inst_reaction: float = DEFAULT_INST_REACTION
    literal_sign: bool = False
    score_top_k: Optional[int] = None
    # Time-convergence curves conventionally average fewer repetitions than
    # step statistics; None means use them all.
    time_repetitions: Optional[int] = None

    def __post_init__(self):
        if self.searcher not in (SEARCHER_PROFILE, SEARCHER_RANDOM):
            raise ValueError(f"unknown searcher {self.searcher!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.time_repetitions is not None and self.time_repetitions < 1:
            raise ValueError("time_repetitions must be >= 1")
        if self.slack < 1.0:
            raise ValueError("slack must be >= 1.0")
        if self.profiling_overhead < 1.0:
            raise ValueError("profiling_overhead must be >= 1.0")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")
        if self.searcher == SEARCHER_PROFILE and self.model is None:
            raise ValueError("the profile searcher needs a model")

    def resolved_outer_iterations(self) -> int:
        """Enough outer iterations to cover the space when none are given."""
        if self.outer_iterations is not None:
            if self.outer_iterations < 1:
                raise ValueError("outer_iterations must be >= 1")
            return self.outer_iterations
        n = len(self.dataset.space)
        if self.inner_steps == 0:
            return n
        return max(1, math.ceil((n - 1) / self.inner_steps))


@dataclass
class ConvergenceReport:
    """Aggregated outcome of one experiment's repetitions."""

    name: str
    searcher: str
    dataset_label: str
    repetitions: int
    inner_steps: int
    outer_iterations: int
    seed: int
    slack: float
    profiling_overhead: float
    steps: np.ndarray
    censored: int
    mean_time_seconds: float
    step_curve_mean: np.ndarray
    step_curve_std: np.ndarray
    time_grid_seconds: np.ndarray
    time_curve_mean: np.ndarray
    time_curve_std: np.ndarray
    baseline_name: Optional[str] = None
    improvement: Optional[float] = None

    @property
    def mean_steps(self) -> float:
        return float(np.mean(self.steps))

    @property
    def median_steps(self) -> float:
        return float(np.median(self.steps))

    @property
    def stddev_steps(self) -> float:
        return float(np.std(self.steps))


def _rep_seeds(master_seed: int, repetitions: int):
    return np.random.SeedSequence(master_seed).spawn(repetitions)


def _run_repetitions(spec: ExperimentSpec, rep_indices) -> List[Tuple[int, bool, np.ndarray,
                                                                      np.ndarray]]:
    dataset = spec.dataset
    source = DatasetReplaySource(dataset)
    well = well_performing_set(dataset, spec.slack)
    seeds = _rep_seeds(spec.seed, spec.repetitions)
    table = None
    if spec.searcher == SEARCHER_PROFILE:
        table = PredictionTable.from_model_set(spec.model, dataset.space)
    outer = spec.resolved_outer_iterations()

    out = []
    for rep in rep_indices:
        if spec.searcher == SEARCHER_RANDOM:
            trace = run_random_search(source, seed=seeds[rep], stop_indices=well)
        else:
            trace = run_profile_search(source, table, i=outer, n=spec.inner_steps,
                                       seed=seeds[rep], inst_reaction=spec.inst_reaction,
                                       literal_sign=spec.literal_sign,
                                       stop_indices=well, score_top_k=spec.score_top_k)
        hit = trace.status == STATUS_STOPPED
        bsf = trace.best_so_far()
        times = trace.completion_times_us(spec.profiling_overhead)
        out.append((rep, hit, bsf, times))
    return out


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise CounterTuneError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(1, workers)


def simulate(spec: ExperimentSpec) -> ConvergenceReport:
    """Run the repetitions and aggregate steps, curves, and simulated time."""
    workers = _worker_count()
    reps = spec.repetitions
    if workers <= 1 or reps < 2 * workers:
        results = _run_repetitions(spec, range(reps))
    else:
        chunks = [range(start, reps, workers) for start in range(workers)]
        results = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_repetitions, [spec] * workers, chunks):
                results.extend(part)
    results.sort(key=lambda item: item[0])

    steps = np.array([len(bsf) for _, _, bsf, _ in results], dtype=float)
    censored = sum(1 for _, hit, _, _ in results if not hit)
    total_times = np.array([times[-1] for _, _, _, times in results])

    max_len = max(len(bsf) for _, _, bsf, _ in results)
    col_sum = np.zeros(max_len)
    col_sq = np.zeros(max_len)
    for _, _, bsf, _ in results:
        padded = np.concatenate([bsf, np.full(max_len - len(bsf), bsf[-1])])
        col_sum += padded
        col_sq += padded * padded
    mean = col_sum / reps
    var = np.maximum(0.0, col_sq / reps - mean * mean)
    step_std = np.sqrt(var)

    # The time axis starts once every repetition has finished at least one
    # evaluation; before that point an average over repetitions is not
    # defined.
    time_results = results
    if spec.time_repetitions is not None:
        time_results = results[:spec.time_repetitions]
    t_start = max(float(times[0]) for _, _, _, times in time_results)
    t_end = max(float(times[-1]) for _, _, _, times in time_results)
    if t_end > t_start:
        grid = np.linspace(t_start, t_end, TIME_GRID_POINTS)
    else:
        grid = np.array([t_start])
    tc_sum = np.zeros(grid.size)
    tc_sq = np.zeros(grid.size)
    for _, _, bsf, times in time_results:
        pos = np.searchsorted(times, grid, side="right") - 1
        sampled = bsf[np.clip(pos, 0, len(bsf) - 1)]
        tc_sum += sampled
        tc_sq += sampled * sampled
    tmean = tc_sum / len(time_results)
    tvar = np.maximum(0.0, tc_sq / len(time_results) - tmean * tmean)

    return ConvergenceReport(
        name=spec.name,
        searcher=spec.searcher,
        dataset_label=f"{spec.dataset.arch.name}/{spec.dataset.input_label}",
        repetitions=reps,
        inner_steps=spec.inner_steps,
        outer_iterations=spec.resolved_outer_iterations(),
        seed=spec.seed,
        slack=spec.slack,
        profiling_overhead=spec.profiling_overhead,
        steps=steps,
        censored=censored,
        mean_time_seconds=float(np.mean(total_times)) / 1e6,
        step_curve_mean=mean,
        step_curve_std=step_std,
        time_grid_seconds=grid / 1e6,
        time_curve_mean=tmean,
        time_curve_std=np.sqrt(tvar),
    )


def pair_with_baseline(candidate: ConvergenceReport,
                       baseline: ConvergenceReport) -> ConvergenceReport:
    """Attach the improvement factor baseline_mean / candidate_mean."""
    if candidate.repetitions != baseline.repetitions:
        raise ValueError("improvement factors require identical repetition counts")
    candidate.baseline_name = baseline.name
    candidate.improvement = baseline.mean_steps / candidate.mean_steps
    return candidate


@dataclass
class CrossEvalReport:
    """Model portability check against a dataset it was not trained on."""

    model_label: str
    dataset_label: str
    counter_errors: Dict[str, Tuple[float, float]]
    profile_report: ConvergenceReport
    random_report: ConvergenceReport


def counter_prediction_errors(models, dataset: Dataset) -> Dict[str, Tuple[float, float]]:
    """Per-counter (MAE, RMSE) of model predictions over all records."""
    table = PredictionTable.from_model_set(models, dataset.space)
    errors: Dict[str, Tuple[float, float]] = {}
    for abbr in table.counter_names:
        measured = []
        predicted = []
        col = table.column[abbr]
        for rec in dataset.records:
            if abbr == GLOBAL_THREADS:
                measured.append(float(rec.global_threads))
            elif abbr in rec.counters:
                measured.append(rec.counters[abbr])
            else:
                continue
            predicted.append(table.matrix[rec.config_index, col])
        if not measured:
            continue
        err = np.array(predicted) - np.array(measured)
        errors[abbr] = (float(np.mean(np.abs(err))),
                        float(math.sqrt(np.mean(err * err))))
    return errors


def cross_evaluate(models, dataset: Dataset, repetitions: int = DEFAULT_REPETITIONS,
                   inner_steps: int = 5, outer_iterations: Optional[int] = None,
                   seed: int = 0, slack: float = 1.1,
                   profiling_overhead: float = DEFAULT_PROFILING_OVERHEAD,
                   inst_reaction: float = DEFAULT_INST_REACTION) -> CrossEvalReport:
    """Judge a foreign model on this dataset: prediction error and search value.

    Runs the profile searcher driven by the foreign model against the
    uniform-random baseline with the same seeds, and reports per-counter
    prediction errors over every record.
    """
    errors = counter_prediction_errors(models, dataset)
    profile_spec = ExperimentSpec(dataset=dataset, searcher=SEARCHER_PROFILE, model=models,
                                  name="profile-foreign-model", repetitions=repetitions,
                                  inner_steps=inner_steps, outer_iterations=outer_iterations,
                                  seed=seed, slack=slack,
                                  profiling_overhead=profiling_overhead,
                                  inst_reaction=inst_reaction)
    random_spec = ExperimentSpec(dataset=dataset, searcher=SEARCHER_RANDOM,
                                 name="random-baseline", repetitions=repetitions,
                                 seed=seed, slack=slack,
                                 profiling_overhead=profiling_overhead)
    profile_report = simulate(profile_spec)
    random_report = simulate(random_spec)
    pair_with_baseline(profile_report, random_report)
    model_label = getattr(models, "source_arch", "?")
    model_input = getattr(models, "source_input", "?")
    return CrossEvalReport(model_label=f"{model_label}/{model_input}",
                           dataset_label=f"{dataset.arch.name}/{dataset.input_label}",
                           counter_errors=errors,
                           profile_report=profile_report,
                           random_report=random_report)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "-" for ch in name)


SUMMARY_COLUMNS = ("name", "searcher", "dataset", "repetitions", "n", "i", "seed",
                   "slack", "profiling_overhead", "mean_steps", "median_steps",
                   "stddev_steps", "censored", "mean_time_seconds",
                   "improvement_vs_baseline", "baseline")


def report(reports: List[ConvergenceReport], out_dir) -> List[str]:
    """Write summary.csv plus two convergence curve files per experiment.

    Row and column order is fixed and floats are written with repr, so a
    deterministic simulation produces byte-identical report files.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    lines = [",".join(SUMMARY_COLUMNS)]
    for rep in reports:
        lines.append(",".join([
            rep.name, rep.searcher, rep.dataset_label, str(rep.repetitions),
            str(rep.inner_steps), str(rep.outer_iterations), str(rep.seed),
            _fmt(rep.slack), _fmt(rep.profiling_overhead), _fmt(rep.mean_steps),
            _fmt(rep.median_steps), _fmt(rep.stddev_steps), str(rep.censored),
            _fmt(rep.mean_time_seconds), _fmt(rep.improvement),
            rep.baseline_name or "",
        ]))
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(summary_path)

    for rep in reports:
        base = _safe_name(rep.name)
        step_path = os.path.join(out_dir, f"curve_{base}.csv")
        rows = ["step,mean,stddev"]
        for i in range(rep.step_curve_mean.size):
            rows.append(f"{i + 1},{_fmt(float(rep.step_curve_mean[i]))},"
                        f"{_fmt(float(rep.step_curve_std[i]))}")
        with open(step_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")
        written.append(step_path)

        time_path = os.path.join(out_dir, f"curve_{base}_time.csv")
        rows = ["seconds,mean,stddev"]
        for i in range(rep.time_grid_seconds.size):
            rows.append(f"{_fmt(float(rep.time_grid_seconds[i]))},"
                        f"{_fmt(float(rep.time_curve_mean[i]))},"
                        f"{_fmt(float(rep.time_curve_std[i]))}")
        with open(time_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")
        written.append(time_path)
    return written


def write_counter_errors(errors: Dict[str, Tuple[float, float]], path) -> None:
    lines = ["counter,mae,rmse"]
    for abbr in counter_catalog.ABBREVIATIONS:
        if abbr in errors:
            mae, rmse = errors[abbr]
            lines.append(f"{abbr},{repr(mae)},{repr(rmse)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
