"""Synthetic dataset generation from closed-form counter recipes.

A generator spec is a plain dict (usually read from JSON): parameter value
lists, an arch block, and one arithmetic formula per counter plus runtime
and thread count. Formulas are expressions over the parameter names with
min/max/clamp/abs available, nothing else. Every value is an exact function
of the tuning parameters, so generated files are reproducible byte for byte
and searches over them have known ground truth.
"""

import itertools
import json
from typing import Dict, List, Tuple

from . import counters as counter_catalog
from .counters import ArchProfile
from .errors import CounterTuneError
from .space import (Dataset, MeasurementRecord, TuningConfiguration, TuningParameter,
                    TuningSpace, save_dataset)

_FORMULA_HELPERS = {
    "min": min,
    "max": max,
    "abs": abs,
    "clamp": lambda x, lo, hi: max(lo, min(hi, x)),
}


def _formula(expr, where: str):
    if isinstance(expr, (int, float)):
        code = None
        value = float(expr)
        return lambda ns: value
    try:
        code = compile(str(expr), f"<{where}>", "eval")
    except SyntaxError as exc:
        raise CounterTuneError(f"{where}: cannot parse formula {expr!r}: {exc}")

    def evaluate(ns):
        scope = dict(_FORMULA_HELPERS)
        scope.update(ns)
        try:
            return float(eval(code, {"__builtins__": {}}, scope))
        except NameError as exc:
            raise CounterTuneError(f"{where}: formula {expr!r} references an unknown "
                                   f"parameter ({exc})")
        except ZeroDivisionError:
            raise CounterTuneError(f"{where}: formula {expr!r} divides by zero for {ns}")

    return evaluate


def _build_space(param_specs: List[dict]) -> TuningSpace:
    params = []
    for p in param_specs:
        values = tuple(float(v) for v in p["values"])
        binary = bool(p.get("binary", set(values) == {0.0, 1.0}))
        params.append(TuningParameter(name=p["name"], values=tuple(sorted(set(values))),
                                      is_binary=binary))
    rows = []
    for idx, combo in enumerate(itertools.product(*(p.values for p in params))):
        rows.append(TuningConfiguration(assignment=tuple(combo), index=idx))
    return TuningSpace(parameters=tuple(params), configurations=tuple(rows))


def build_dataset(spec: dict) -> Dataset:
    """Evaluate a generator spec into an in-memory dataset."""
    for key in ("parameters", "arch", "runtime_us", "counters", "global_threads"):
        if key not in spec:
            raise CounterTuneError(f"generator spec is missing the {key!r} entry")
    space = _build_space(spec["parameters"])
    arch_block = spec["arch"]
    arch = ArchProfile(name=arch_block["name"], generation=arch_block["generation"],
                       cores=int(arch_block["cores"]))
    for abbr in spec["counters"]:
        if abbr not in counter_catalog.BY_ABBR or abbr == counter_catalog.GLOBAL_THREADS:
            raise CounterTuneError(f"generator spec names unknown counter {abbr!r}")

    runtime_f = _formula(spec["runtime_us"], "runtime_us")
    threads_f = _formula(spec["global_threads"], "global_threads")
    counter_fs = {abbr: _formula(expr, abbr) for abbr, expr in spec["counters"].items()}

    records = []
    for conf in space.configurations:
        ns = dict(zip(space.parameter_names, conf.assignment))
        runtime = runtime_f(ns)
        if not runtime > 0:
            raise CounterTuneError(f"configuration {conf.index}: runtime formula "
                                   f"yields {runtime!r}, must be positive")
        threads = int(round(threads_f(ns)))
        values = {abbr: f(ns) for abbr, f in counter_fs.items()}
        try:
            records.append(MeasurementRecord(config_index=conf.index, runtime_us=runtime,
                                             global_threads=threads, counters=values))
        except ValueError as exc:
            raise CounterTuneError(f"generator spec produced an invalid record: {exc}")
    return Dataset(space=space, arch=arch, input_label=spec.get("input_label", spec.get(
        "name", "synthetic")), records=tuple(records))


def gen_synthetic(spec: dict, out_dir, seed: int = 0) -> Dataset:
    """Write a generated dataset directory; returns the in-memory dataset.

    Generation is exact, so the seed changes nothing today; it is part of
    the signature so noisy recipes could be added without breaking callers,
    and identical seeds trivially reproduce identical files.
    """
    del seed
    dataset = build_dataset(spec)
    save_dataset(dataset, out_dir)
    return dataset


def load_generator_spec(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise CounterTuneError(f"{path}: not valid generator JSON ({exc})")


def _benign_counters(**overrides) -> Dict[str, object]:
    base = {
        "DRAM_RT": 0, "DRAM_WT": 0, "DRAM_U": 0,
        "L2_RT": 0, "L2_WT": 0, "L2_U": 0,
        "TEX_RWT": 0, "TEX_U": 0,
        "SHR_LT": 0, "SHR_WT": 0, "SHR_U": 0,
        "LOC_O": 0,
        "INST_F32": 0, "INST_F64": 0, "INST_INT": 0, "INST_MISC": 0,
        "INST_LDST": 0, "INST_CONT": 0, "INST_BCONV": 0,
        "INST_EXE": 1000, "INST_ISSUE_U": 20,
        "WARP_E": 100, "WARP_NP_E": 100, "SM_E": 100,
    }
    base.update(overrides)
    return base


_SYNTH_ARCH = {"name": "synthetic-pre-volta", "generation": "pre_volta", "cores": 1024}

# A three-parameter space whose runtime grows exactly with DRAM read
# traffic while everything else stays flat: the cleanest possible test bed
# for a search that is told to shrink DRAM_RT. 12 of its 1000
# configurations sit within 1.1x of the best runtime.
GRADIENT_SPEC = {
    "name": "gradient",
    "input_label": "gradient",
    "arch": dict(_SYNTH_ARCH),
    "parameters": [
        {"name": "x", "values": list(range(1, 11))},
        {"name": "y", "values": list(range(1, 11))},
        {"name": "z", "values": list(range(0, 10))},
    ],
    "global_threads": 5 * 1024,
    "runtime_us": "100*x + 10*y + z",
    "counters": _benign_counters(**{
        "DRAM_RT": "1000*x + 100*y + 10*z",
        "DRAM_WT": 100,
        "DRAM_U": 9,
        "L2_RT": 100, "L2_WT": 100, "L2_U": 1,
        "TEX_RWT": 50, "TEX_U": 1,
        "INST_F32": 3200,
    }),
}

# The same space and counters with every runtime scaled threefold: a stand-in
# for the same kernel on a proportionally slower GPU. Runtime ratios are
# unchanged, so the well-performing set is identical.
GRADIENT_3X_SPEC = {
    **GRADIENT_SPEC,
    "name": "gradient3x",
    "input_label": "gradient3x",
    "runtime_us": "3*(100*x + 10*y + z)",
}

# One flat parameter, exactly 20 configurations within the 1.1x slack and a
# hard runtime cliff behind them; calibrates random-search step counts
# against the closed-form expectation (N+1)/(k+1).
CALIBRATION_SPEC = {
    "name": "calibration",
    "input_label": "calibration",
    "arch": dict(_SYNTH_ARCH),
    "parameters": [
        {"name": "idx", "values": list(range(0, 1000))},
    ],
    "global_threads": 5 * 1024,
    "runtime_us": "100 + max(0, min(1, idx - 19))*1000 + max(0, idx - 19)",
    "counters": _benign_counters(),
}

GENERATOR_PRESETS: Dict[str, dict] = {
    "gradient": GRADIENT_SPEC,
    "gradient3x": GRADIENT_3X_SPEC,
    "calibration": CALIBRATION_SPEC,
}
