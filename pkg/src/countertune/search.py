"""Profile-guided biased search and the uniform-random baseline.

The searcher never touches real hardware. It talks to a MeasurementSource;
replaying an exhaustively benchmarked dataset and driving a live runner
through a pipe are interchangeable behind that interface.

One profile-guided outer iteration costs n+1 empirical tests: one profiled
run of the current profile configuration, then n runtime-only runs of
configurations drawn by score. Scores rank unexplored configurations by how
well their predicted counters move in the directions the bottleneck
reaction asked for.
"""

import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import counters as counter_catalog
from .bottlenecks import DEFAULT_INST_REACTION, analyze, react
from .counters import ArchProfile
from .errors import CounterTuneError, SpaceExhaustedError
from .space import Dataset, TuningConfiguration, TuningSpace

SCORE_EXPONENT = 8
SCORE_FLOOR = 0.0001
SCORE_CEILING = 256.0
DEFAULT_GAMMA = -0.25
DEFAULT_INNER_STEPS = 5

STATUS_BUDGET = "budget"        # ran all requested iterations
STATUS_STOPPED = "stopped"      # hit a configuration from stop_indices
STATUS_EXHAUSTED = "exhausted"  # no unexplored configuration left to draw


class PredictionTable:
    """Model predictions for every configuration of one space, precomputed.

    Scoring reads whole columns, and a search scores the space once per
    outer iteration, so a (N x counters) matrix beats re-walking trees by
    orders of magnitude. Counters a model omits for a configuration are
    stored as 0, which scoring already treats as "no usable prediction".
    """

    def __init__(self, space: TuningSpace, counter_names: Sequence[str],
                 matrix: np.ndarray):
        self.space = space
        self.counter_names = tuple(counter_names)
        self.column = {name: i for i, name in enumerate(self.counter_names)}
        self.matrix = matrix

    @classmethod
    def from_model_set(cls, models, space: TuningSpace) -> "PredictionTable":
        models.check_space(space)
        names = tuple(models.counters)
        matrix = np.zeros((len(space), len(names)))
        for conf in space.configurations:
            predicted = models.predict(conf)
            for j, name in enumerate(names):
                matrix[conf.index, j] = predicted.get(name, 0.0)
        return cls(space, names, matrix)


def _as_table(models, space: TuningSpace) -> PredictionTable:
    if isinstance(models, PredictionTable):
        if models.space is not space and len(models.space) != len(space):
            raise CounterTuneError("prediction table was built for a different space")
        return models
    return PredictionTable.from_model_set(models, space)


@dataclass
class ScoreVector:
    """Raw and normalized scores aligned with configuration indices."""

    raw: np.ndarray
    explored: np.ndarray
    norm: Optional[np.ndarray] = None
    scoreable: Optional[np.ndarray] = None

    def pool(self) -> np.ndarray:
        if self.scoreable is not None:
            return self.scoreable & ~self.explored
        return ~self.explored


def score_configurations(models, c_profile: TuningConfiguration, delta: Dict[str, float],
                         space: TuningSpace, explored: Iterable[int],
                         literal_sign: bool = False,
                         score_top_k: Optional[int] = None) -> ScoreVector:
    """Score every unexplored configuration against the wanted counter moves.

    Each counter with a nonzero delta and nonzero predictions for both the
    profiled and the candidate configuration contributes
    delta * (pc(candidate) - pc(profile)) / (pc(candidate) + pc(profile)),
    so a candidate predicted to move counters the asked way scores positive.
    literal_sign=True flips the numerator to (profile - candidate), the
    published orientation, kept for comparison runs. Explored entries score
    0; score_top_k limits scoring to the K nearest unexplored candidates by
    Euclidean parameter distance.
    """
    table = _as_table(models, space)
    n = len(space)
    if isinstance(explored, np.ndarray) and explored.dtype == bool:
        explored_mask = explored.copy()
    else:
        explored_mask = np.zeros(n, dtype=bool)
        for idx in explored:
            explored_mask[idx] = True

    raw = np.zeros(n)
    profile_row = table.matrix[c_profile.index]
    for name, d in delta.items():
        if d == 0.0:
            continue
        j = table.column.get(name)
        if j is None:
            continue
        col = table.matrix[:, j]
        p = profile_row[j]
        if p == 0.0:
            continue
        usable = col != 0.0
        diff = (col - p) if not literal_sign else (p - col)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = d * diff / (col + p)
        raw += np.where(usable, term, 0.0)

    raw[explored_mask] = 0.0
    scoreable = None
    if score_top_k is not None and score_top_k < int((~explored_mask).sum()):
        assignments = np.array([c.assignment for c in space.configurations])
        dist = np.linalg.norm(assignments - np.array(c_profile.assignment), axis=1)
        dist[explored_mask] = np.inf
        keep = np.argsort(dist, kind="stable")[:score_top_k]
        scoreable = np.zeros(n, dtype=bool)
        scoreable[keep] = True
        raw[~scoreable] = 0.0
    return ScoreVector(raw=raw, explored=explored_mask, scoreable=scoreable)


def normalize_scores(scores: ScoreVector, gamma: float = DEFAULT_GAMMA) -> ScoreVector:
    """Map raw scores into selection weights in <0.0001, 256>.

    Positive scores are amplified relative to the iteration's maximum,
    mildly negative ones (above gamma) are damped relative to the minimum,
    and anything at or below gamma keeps the floor weight so no unexplored
    configuration is ever completely unreachable. Explored configurations
    stay at weight 0.
    """
    pool = scores.pool()
    if not pool.any():
        raise SpaceExhaustedError("no unexplored configurations to normalize")
    s = scores.raw
    s_max = float(s[pool].max())
    s_min = float(s[pool].min())
    norm = np.zeros_like(s)

    positive = pool & (s > 0.0)
    if positive.any():
        ratio = s[positive] / s_max if s_max != 0.0 else 0.0
        norm[positive] = np.minimum((1.0 + ratio) ** SCORE_EXPONENT, SCORE_CEILING)
    mid = pool & (s <= 0.0) & (s > gamma)
    if mid.any():
        ratio = s[mid] / s_min if s_min != 0.0 else np.zeros(int(mid.sum()))
        norm[mid] = np.maximum(SCORE_FLOOR, (1.0 - ratio) ** SCORE_EXPONENT)
    low = pool & (s <= gamma)
    norm[low] = SCORE_FLOOR
    return ScoreVector(raw=scores.raw, explored=scores.explored, norm=norm,
                       scoreable=scores.scoreable)


def weighted_select(scores: ScoreVector, rng: np.random.Generator) -> int:
    """Draw one configuration index with probability proportional to norm."""
    if scores.norm is None:
        raise ValueError("scores must be normalized before selection")
    weights = scores.norm
    cumulative = np.cumsum(weights)
    total = cumulative[-1] if weights.size else 0.0
    if total <= 0.0:
        raise SpaceExhaustedError("every configuration is explored")
    r = rng.random() * total
    return int(np.searchsorted(cumulative, r, side="right"))


@dataclass
class Measurement:
    """One empirical test; counters and threads only when profiled."""

    runtime_us: float
    global_threads: Optional[int] = None
    counters: Optional[Dict[str, float]] = None


class DatasetReplaySource:
    """Serves measurements by looking them up in an exhaustive dataset."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.space = dataset.space
        self.arch = dataset.arch

    def measure(self, config_index: int, profiled: bool) -> Measurement:
        try:
            rec = self.dataset.record_for(config_index)
        except KeyError:
            raise CounterTuneError(f"dataset holds no measurement for configuration "
                                   f"{config_index}")
        if not profiled:
            return Measurement(runtime_us=rec.runtime_us)
        return Measurement(runtime_us=rec.runtime_us, global_threads=rec.global_threads,
                           counters=dict(rec.counters))

    def close(self) -> None:
        pass


class SubprocessMeasurementSource:
    """Drives a live runner over a line pipe.

    Protocol, one line per message, UTF-8:
      request   `<v1>,<v2>,...,<vk>,<flag>` - the configuration's parameter
                values in declared order plus 1 (profiled) or 0 (runtime only).
      response  `<runtime_us>` for flag 0, or
                `<runtime_us>,<global_threads>,<name>=<value>,...` for flag 1,
                where names are canonical abbreviations or the arch's raw
                counter names; values are canonicalized on receipt.
    The runner must answer requests in order and exit when stdin closes.
    """

    def __init__(self, command, space: TuningSpace, arch: ArchProfile):
        self.space = space
        self.arch = arch
        if isinstance(command, str):
            command = shlex.split(command)
        self._proc = subprocess.Popen(command, stdin=subprocess.PIPE,
                                      stdout=subprocess.PIPE, text=True, bufsize=1)

    def measure(self, config_index: int, profiled: bool) -> Measurement:
        conf = self.space.configurations[config_index]
        request = ",".join(repr(v) for v in conf.assignment) + f",{1 if profiled else 0}\n"
        self._proc.stdin.write(request)
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise CounterTuneError("measurement runner closed its pipe")
        cells = line.strip().split(",")
        try:
            runtime = float(cells[0])
        except ValueError:
            raise CounterTuneError(f"runner sent a malformed runtime: {line.strip()!r}")
        if not profiled:
            return Measurement(runtime_us=runtime)
        if len(cells) < 2:
            raise CounterTuneError("profiled response is missing global_threads")
        threads = int(cells[1])
        counter_map: Dict[str, float] = {}
        for cell in cells[2:]:
            name, _, value = cell.partition("=")
            abbr, canonical = counter_catalog.canonicalize(name, float(value), self.arch)
            counter_map[abbr] = canonical
        return Measurement(runtime_us=runtime, global_threads=threads, counters=counter_map)

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class TraceStep:
    step: int
    config_index: int
    runtime_us: float
    profiled: bool


@dataclass
class SearchTrace:
    """Every empirical test of one search, in execution order."""

    steps: List[TraceStep]
    seed: int
    status: str

    def runtimes(self) -> np.ndarray:
        return np.array([s.runtime_us for s in self.steps])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.runtimes())

    def completion_times_us(self, profiling_overhead: float = 1.0) -> np.ndarray:
        """Cumulative simulated wall time; profiled runs cost extra."""
        costs = np.array([s.runtime_us * (profiling_overhead if s.profiled else 1.0)
                          for s in self.steps])
        return np.cumsum(costs)

    def selected_indices(self) -> List[int]:
        """Distinct configurations in first-evaluation order."""
        seen: Set[int] = set()
        out = []
        for s in self.steps:
            if s.config_index not in seen:
                seen.add(s.config_index)
                out.append(s.config_index)
        return out


def run_random_search(source, seed: int = 0, stop_indices: Optional[Set[int]] = None,
                      max_steps: Optional[int] = None) -> SearchTrace:
    """Uniform random search without replacement, runtime-only evaluations."""
    n = len(source.space)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    if max_steps is not None:
        order = order[:max_steps]
    steps: List[TraceStep] = []
    status = STATUS_EXHAUSTED if max_steps is None or max_steps >= n else STATUS_BUDGET
    for pos, idx in enumerate(order, start=1):
        idx = int(idx)
        m = source.measure(idx, profiled=False)
        steps.append(TraceStep(step=pos, config_index=idx, runtime_us=m.runtime_us,
                               profiled=False))
        if stop_indices is not None and idx in stop_indices:
            status = STATUS_STOPPED
            break
    return SearchTrace(steps=steps, seed=seed, status=status)


def run_profile_search(source, models, *, i: int, n: int = DEFAULT_INNER_STEPS,
                       seed: int = 0, inst_reaction: float = DEFAULT_INST_REACTION,
                       literal_sign: bool = False,
                       stop_indices: Optional[Set[int]] = None,
                       score_top_k: Optional[int] = None) -> SearchTrace:
    """Run i profile-guided outer iterations of n biased draws each.

    Within an outer iteration the current profile configuration is measured
    with counters, its bottlenecks converted to wanted counter moves, all
    unexplored configurations scored, and n weighted draws evaluated for
    runtime only. The fastest of those draws (later ties win) is profiled
    next. The first profile configuration is drawn uniformly. No
    configuration is ever drawn twice, though the winner of an inner batch
    is deliberately re-measured once more when it is profiled.
    """
    if i < 1:
        raise ValueError(f"need at least one outer iteration, got i={i}")
    if n < 0:
        raise ValueError(f"inner step count must be >= 0, got n={n}")
    space = source.space
    table = _as_table(models, space)
    rng = np.random.default_rng(seed)
    total = len(space)

    explored = np.zeros(total, dtype=bool)
    steps: List[TraceStep] = []
    c_profile = space.configurations[int(rng.integers(0, total))]

    def record(idx: int, runtime: float, profiled: bool) -> bool:
        steps.append(TraceStep(step=len(steps) + 1, config_index=idx,
                               runtime_us=runtime, profiled=profiled))
        explored[idx] = True
        return stop_indices is not None and idx in stop_indices

    for _ in range(i):
        measurement = source.measure(c_profile.index, profiled=True)
        if record(c_profile.index, measurement.runtime_us, True):
            return SearchTrace(steps=steps, seed=seed, status=STATUS_STOPPED)

        bottleneck = analyze(measurement.counters, source.arch,
                             measurement.global_threads)
        delta = react(bottleneck, inst_reaction)
        if not (~explored).any():
            return SearchTrace(steps=steps, seed=seed, status=STATUS_EXHAUSTED)
        scores = score_configurations(table, c_profile, delta, space, explored,
                                      literal_sign=literal_sign,
                                      score_top_k=score_top_k)
        scores = normalize_scores(scores)

        t_best = np.inf
        for _ in range(n):
            if scores.norm.max() <= 0.0:
                return SearchTrace(steps=steps, seed=seed, status=STATUS_EXHAUSTED)
            chosen = weighted_select(scores, rng)
            runtime = source.measure(chosen, profiled=False).runtime_us
            scores.norm[chosen] = 0.0
            if record(chosen, runtime, False):
                return SearchTrace(steps=steps, seed=seed, status=STATUS_STOPPED)
            if runtime <= t_best:
                t_best = runtime
                c_profile = space.configurations[chosen]
    return SearchTrace(steps=steps, seed=seed, status=STATUS_BUDGET)
