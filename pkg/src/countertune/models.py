"""Surrogate models mapping tuning parameters to operation counters.

Only OPS counters (plus GLOBAL_THREADS and the multiprocessor efficiency
SM_E) are modeled: they are properties of the compiled kernel and survive a
change of GPU, which is what makes cross-architecture simulation possible.

Two trained families, one replay family:

  tree        one regression tree per counter, grown by variance reduction,
              hyperparameters picked on a held-out half of the data.
  regression  per binary-subspace least squares with intercept, linear,
              quadratic, and pairwise interaction terms.
  exact       no generalization at all, replays measured counters; mirrors
              running the search with profiling data instead of a model.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import counters as counter_catalog
from .counters import GLOBAL_THREADS
from .errors import (ModelFormatError, ModelTrainingError, ParameterMismatchError,
                     CounterTuneError)
from .space import Dataset, TuningConfiguration, TuningSpace, binary_subspace_key

log = logging.getLogger(__name__)

MODEL_FORMAT = "countertune-model"
MODEL_VERSION = 1

# Candidate grid for tree selection; iteration order breaks exact ties.
TREE_DEPTHS = (2, 3, 4, 6, 8, 10)
TREE_MIN_LEAF = (1, 2, 5)

FAMILY_TREE = "tree"
FAMILY_REGRESSION = "regression"
FAMILY_EXACT = "exact"

# Modeled on top of the OPS set so the reaction's occupancy delta has a
# prediction to score against.
EXTRA_MODELED = ("SM_E",)


@dataclass
class TreeNode:
    """Inner node (feature/threshold/children) or leaf (value)."""

    feature: Optional[int] = None
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: float = 0.0

    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self):
        if self.is_leaf():
            return {"v": self.value}
        return {"f": self.feature, "t": self.threshold,
                "l": self.left.to_dict(), "r": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if "v" in d:
            return cls(value=float(d["v"]))
        return cls(feature=int(d["f"]), threshold=float(d["t"]),
                   left=cls.from_dict(d["l"]), right=cls.from_dict(d["r"]))


@dataclass
class DecisionTreeModel:
    counter: str
    root: TreeNode
    max_depth: int
    min_leaf: int
    seed: int
    test_mae: float
    test_rmse: float

    def predict_assignment(self, assignment) -> float:
        node = self.root
        while not node.is_leaf():
            node = node.left if assignment[node.feature] <= node.threshold else node.right
        return node.value


@dataclass
class RegressionModel:
    """Least-squares fit valid inside one binary subspace.

    terms is a list of ("intercept",), ("lin", name), ("quad", name) or
    ("cross", name_a, name_b) tuples over non-binary parameter names,
    aligned with coefficients.
    """

    counter: str
    subspace_key: str
    terms: List[Tuple]
    coefficients: List[float]

    def predict_assignment(self, assignment, name_to_pos) -> float:
        total = 0.0
        for term, coef in zip(self.terms, self.coefficients):
            kind = term[0]
            if kind == "intercept":
                total += coef
            elif kind == "lin":
                total += coef * assignment[name_to_pos[term[1]]]
            elif kind == "quad":
                v = assignment[name_to_pos[term[1]]]
                total += coef * v * v
            else:
                total += coef * (assignment[name_to_pos[term[1]]]
                                 * assignment[name_to_pos[term[2]]])
        return total


def _node_sse(prefix_y, prefix_y2, lo, hi) -> float:
    n = hi - lo
    s = prefix_y[hi] - prefix_y[lo]
    s2 = prefix_y2[hi] - prefix_y2[lo]
    return max(0.0, s2 - s * s / n)


def _grow_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int) -> TreeNode:
    def build(idx: np.ndarray, depth: int) -> TreeNode:
        node_y = y[idx]
        mean = float(np.mean(node_y))
        n = idx.size
        if depth >= max_depth or n < 2 * min_leaf or np.all(node_y == node_y[0]):
            return TreeNode(value=mean)
        parent_sse = float(np.sum((node_y - mean) ** 2))
        best = None  # (sse, feature, threshold)
        for j in range(X.shape[1]):
            xv = X[idx, j]
            srt = np.argsort(xv, kind="stable")
            xs = xv[srt]
            ys = node_y[srt]
            py = np.concatenate(([0.0], np.cumsum(ys)))
            py2 = np.concatenate(([0.0], np.cumsum(ys * ys)))
            for cut in range(min_leaf, n - min_leaf + 1):
                if xs[cut - 1] == xs[cut]:
                    continue
                sse = _node_sse(py, py2, 0, cut) + _node_sse(py, py2, cut, n)
                if best is None or sse < best[0]:
                    thr = (xs[cut - 1] + xs[cut]) / 2.0
                    best = (sse, j, thr, srt[:cut], srt[cut:])
        if best is None or not best[0] < parent_sse:
            return TreeNode(value=mean)
        _, j, thr, left_srt, right_srt = best
        left = build(idx[left_srt], depth + 1)
        right = build(idx[right_srt], depth + 1)
        return TreeNode(feature=j, threshold=thr, left=left, right=right)

    return build(np.arange(len(y)), 0)


def _counter_targets(dataset: Dataset, counter: str) -> Tuple[np.ndarray, np.ndarray]:
    X = np.array([dataset.space.configurations[r.config_index].assignment
                  for r in dataset.records], dtype=float)
    if counter == GLOBAL_THREADS:
        y = np.array([float(r.global_threads) for r in dataset.records])
    else:
        y = np.array([r.counters[counter] for r in dataset.records])
    return X, y


def train_decision_tree(dataset: Dataset, counter: str, seed: int = 0) -> DecisionTreeModel:
    """Fit one counter with the tree whose held-out MAE is lowest.

    Half the records (seeded shuffle) train each candidate from the depth
    and leaf-size grid; the other half ranks them. Ties fall to lower RMSE,
    then the shallower bound, then grid order, so a (dataset, seed) pair
    always yields the identical tree.
    """
    X, y = _counter_targets(dataset, counter)
    n = len(y)
    if n < 4:
        raise ModelTrainingError(f"{counter}: need at least 4 records to train a tree, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = (n + 1) // 2
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    Xtr, ytr = X[train_idx], y[train_idx]
    Xte, yte = X[test_idx], y[test_idx]

    best = None
    for max_depth in TREE_DEPTHS:
        for min_leaf in TREE_MIN_LEAF:
            root = _grow_tree(Xtr, ytr, max_depth, min_leaf)
            pred = np.array([_route(root, row) for row in Xte])
            err = pred - yte
            mae = float(np.mean(np.abs(err)))
            rmse = float(math.sqrt(np.mean(err * err)))
            key = (mae, rmse, max_depth)
            if best is None or key < best[0]:
                best = (key, root, max_depth, min_leaf, mae, rmse)
    _, root, max_depth, min_leaf, mae, rmse = best
    return DecisionTreeModel(counter=counter, root=root, max_depth=max_depth,
                             min_leaf=min_leaf, seed=seed, test_mae=mae, test_rmse=rmse)


def _route(root: TreeNode, row) -> float:
    node = root
    while not node.is_leaf():
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


def _choose_training_values(values: List[float]) -> List[float]:
    # Two or three spread-out values per parameter keep the sampling of a
    # subspace even while bounding the number of fitted rows.
    vs = sorted(values)
    if len(vs) <= 2:
        return vs
    return [vs[0], vs[len(vs) // 2], vs[-1]]


def train_regression(dataset: Dataset, counter: str) -> List[RegressionModel]:
    """Fit per-binary-subspace polynomial least squares for one counter.

    Subspaces with fewer sampled rows than terms are skipped with a warning;
    a rank-deficient design matrix is an error naming the subspace, because
    silently pseudo-inverting it would hide confounded parameters.
    """
    space = dataset.space
    nonbin = [(pos, p) for pos, p in enumerate(space.parameters) if not p.is_binary]
    X, y = _counter_targets(dataset, counter)

    groups: Dict[str, List[int]] = {}
    for row, rec in enumerate(dataset.records):
        key = binary_subspace_key(space, space.configurations[rec.config_index])
        groups.setdefault(key, []).append(row)

    models: List[RegressionModel] = []
    for key in sorted(groups):
        rows = groups[key]
        chosen: Dict[int, set] = {}
        for pos, param in nonbin:
            observed = sorted({X[r, pos] for r in rows})
            chosen[pos] = set(_choose_training_values(observed))
        picked = [r for r in rows
                  if all(X[r, pos] in chosen[pos] for pos, _ in nonbin)]

        varying = [(pos, param) for pos, param in nonbin
                   if len({X[r, pos] for r in picked}) >= 2]
        terms: List[Tuple] = [("intercept",)]
        for pos, param in varying:
            terms.append(("lin", param.name))
            if len({X[r, pos] for r in picked}) >= 3:
                terms.append(("quad", param.name))
        for a in range(len(varying)):
            for b in range(a + 1, len(varying)):
                terms.append(("cross", varying[a][1].name, varying[b][1].name))

        if len(picked) < len(terms):
            log.warning("%s: subspace '%s' has %d sampled rows for %d terms, skipped",
                        counter, key, len(picked), len(terms))
            continue

        name_to_pos = {p.name: pos for pos, p in nonbin}
        A = np.empty((len(picked), len(terms)))
        for i, r in enumerate(picked):
            for t, term in enumerate(terms):
                if term[0] == "intercept":
                    A[i, t] = 1.0
                elif term[0] == "lin":
                    A[i, t] = X[r, name_to_pos[term[1]]]
                elif term[0] == "quad":
                    A[i, t] = X[r, name_to_pos[term[1]]] ** 2
                else:
                    A[i, t] = X[r, name_to_pos[term[1]]] * X[r, name_to_pos[term[2]]]
        if np.linalg.matrix_rank(A) < len(terms):
            raise ModelTrainingError(
                f"{counter}: rank-deficient design matrix in subspace '{key}'")
        coefs, _, _, _ = np.linalg.lstsq(A, np.array([y[r] for r in picked]), rcond=None)
        models.append(RegressionModel(counter=counter, subspace_key=key,
                                      terms=terms, coefficients=[float(c) for c in coefs]))
    return models


@dataclass
class ModelSet:
    """Every modeled counter for one (space, GPU, input) training run."""

    family: str
    param_names: Tuple[str, ...]
    param_binary: Tuple[bool, ...]
    source_arch: str
    source_input: str
    seed: int
    trees: Dict[str, DecisionTreeModel] = field(default_factory=dict)
    regressions: Dict[str, List[RegressionModel]] = field(default_factory=dict)

    @property
    def counters(self) -> Tuple[str, ...]:
        names = set(self.trees) | set(self.regressions)
        return tuple(a for a in counter_catalog.ABBREVIATIONS if a in names)

    def _subspace_key(self, assignment) -> str:
        return "".join("1" if v == 1.0 else "0"
                       for v, b in zip(assignment, self.param_binary) if b)

    def predict(self, config: TuningConfiguration) -> Dict[str, float]:
        """Predicted counter values for one configuration, clamped at 0.

        A counter whose subspace has no regression model is omitted; the
        scoring layer treats omissions as zero predictions.
        """
        if len(config.assignment) != len(self.param_names):
            raise ParameterMismatchError(
                f"model expects {len(self.param_names)} parameters "
                f"({', '.join(self.param_names)}), configuration has {len(config.assignment)}")
        out: Dict[str, float] = {}
        name_to_pos = {n: i for i, n in enumerate(self.param_names)}
        key = self._subspace_key(config.assignment)
        for abbr in self.counters:
            if abbr in self.trees:
                value = self.trees[abbr].predict_assignment(config.assignment)
            else:
                model = next((m for m in self.regressions[abbr] if m.subspace_key == key),
                             None)
                if model is None:
                    continue
                value = model.predict_assignment(config.assignment, name_to_pos)
            out[abbr] = max(0.0, value)
        return out

    def check_space(self, space: TuningSpace) -> None:
        if (space.parameter_names != self.param_names
                or tuple(p.is_binary for p in space.parameters) != self.param_binary):
            raise ParameterMismatchError(
                f"model was trained on parameters {list(self.param_names)} "
                f"(binary {list(self.param_binary)}), space declares "
                f"{list(space.parameter_names)}")


def modeled_counters(dataset: Dataset) -> Tuple[str, ...]:
    """OPS counters present in the dataset, GLOBAL_THREADS, and SM_E."""
    present = set(dataset.counter_names)
    names = [a for a in counter_catalog.ops_counters()
             if a in present and a != GLOBAL_THREADS]
    names.append(GLOBAL_THREADS)
    names.extend(a for a in EXTRA_MODELED if a in present)
    return tuple(names)


def train_model_set(dataset: Dataset, family: str = FAMILY_TREE, seed: int = 0) -> ModelSet:
    """Train one model per modeled counter; the same seed splits them all."""
    if family not in (FAMILY_TREE, FAMILY_REGRESSION):
        raise ValueError(f"unknown model family {family!r}")
    ms = ModelSet(family=family,
                  param_names=dataset.space.parameter_names,
                  param_binary=tuple(p.is_binary for p in dataset.space.parameters),
                  source_arch=dataset.arch.name,
                  source_input=dataset.input_label,
                  seed=seed)
    for abbr in modeled_counters(dataset):
        if family == FAMILY_TREE or abbr in EXTRA_MODELED:
            ms.trees[abbr] = train_decision_tree(dataset, abbr, seed=seed)
        else:
            ms.regressions[abbr] = train_regression(dataset, abbr)
    return ms


class ExactModelSet:
    """Replays measured counters instead of predicting them.

    Equivalent to biasing the search with profiling data for every
    configuration; the upper bound on what any trained model can deliver.
    """

    family = FAMILY_EXACT

    def __init__(self, dataset: Dataset):
        self.param_names = dataset.space.parameter_names
        self.param_binary = tuple(p.is_binary for p in dataset.space.parameters)
        self.source_arch = dataset.arch.name
        self.source_input = dataset.input_label
        names = modeled_counters(dataset)
        self.counters = names
        self._table: Dict[Tuple[float, ...], Dict[str, float]] = {}
        for rec in dataset.records:
            conf = dataset.space.configurations[rec.config_index]
            values = {}
            for abbr in names:
                if abbr == GLOBAL_THREADS:
                    values[abbr] = float(rec.global_threads)
                else:
                    values[abbr] = rec.counters[abbr]
            self._table[conf.assignment] = values

    def predict(self, config: TuningConfiguration) -> Dict[str, float]:
        try:
            return dict(self._table[config.assignment])
        except KeyError:
            raise CounterTuneError(
                f"no measurement recorded for configuration {config.index}")

    def check_space(self, space: TuningSpace) -> None:
        if (space.parameter_names != self.param_names
                or tuple(p.is_binary for p in space.parameters) != self.param_binary):
            raise ParameterMismatchError(
                "replay table was built for a different parameter list")


def save_model_set(ms: ModelSet, path) -> None:
    """Versioned JSON text; floats keep full precision via repr."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": ms.family,
        "param_names": list(ms.param_names),
        "param_binary": [1 if b else 0 for b in ms.param_binary],
        "source_arch": ms.source_arch,
        "source_input": ms.source_input,
        "seed": ms.seed,
        "trees": {
            abbr: {
                "max_depth": t.max_depth, "min_leaf": t.min_leaf, "seed": t.seed,
                "test_mae": t.test_mae, "test_rmse": t.test_rmse,
                "root": t.root.to_dict(),
            } for abbr, t in ms.trees.items()
        },
        "regressions": {
            abbr: [
                {"subspace_key": m.subspace_key,
                 "terms": [list(t) for t in m.terms],
                 "coefficients": m.coefficients}
                for m in models
            ] for abbr, models in ms.regressions.items()
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model_set(path) -> ModelSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a complete model file ({exc})")
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: missing '{MODEL_FORMAT}' format tag")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {doc.get('version')!r}, "
                               f"this build reads version {MODEL_VERSION}")
    try:
        ms = ModelSet(
            family=doc["family"],
            param_names=tuple(doc["param_names"]),
            param_binary=tuple(bool(b) for b in doc["param_binary"]),
            source_arch=doc["source_arch"],
            source_input=doc["source_input"],
            seed=int(doc["seed"]),
        )
        for abbr, t in doc["trees"].items():
            ms.trees[abbr] = DecisionTreeModel(
                counter=abbr, root=TreeNode.from_dict(t["root"]),
                max_depth=int(t["max_depth"]), min_leaf=int(t["min_leaf"]),
                seed=int(t["seed"]), test_mae=float(t["test_mae"]),
                test_rmse=float(t["test_rmse"]))
        for abbr, entries in doc["regressions"].items():
            ms.regressions[abbr] = [
                RegressionModel(counter=abbr, subspace_key=e["subspace_key"],
                                terms=[tuple(t) for t in e["terms"]],
                                coefficients=[float(c) for c in e["coefficients"]])
                for e in entries
            ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model document ({exc})")
    return ms
