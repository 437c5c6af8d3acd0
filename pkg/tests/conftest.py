import numpy as np
import pytest

from countertune.counters import ArchProfile
from countertune.space import (Dataset, MeasurementRecord, TuningConfiguration,
                               TuningParameter, TuningSpace)
from countertune.synth import GENERATOR_PRESETS, build_dataset


@pytest.fixture(scope="session")
def gradient_dataset():
    return build_dataset(GENERATOR_PRESETS["gradient"])


@pytest.fixture(scope="session")
def gradient3x_dataset():
    return build_dataset(GENERATOR_PRESETS["gradient3x"])


@pytest.fixture(scope="session")
def calibration_dataset():
    return build_dataset(GENERATOR_PRESETS["calibration"])


@pytest.fixture
def pre_volta_arch():
    return ArchProfile(name="gtx1070", generation="pre_volta", cores=1920)


@pytest.fixture
def volta_arch():
    return ArchProfile(name="rtx2080", generation="volta_plus", cores=2944)


def grid_space(*params):
    """Full cross product space over (name, values) pairs."""
    tps = tuple(TuningParameter.make(name, values) for name, values in params)
    combos = [()]
    for tp in tps:
        combos = [c + (v,) for c in combos for v in tp.values]
    confs = tuple(TuningConfiguration(assignment=c, index=i) for i, c in enumerate(combos))
    return TuningSpace(parameters=tps, configurations=confs)


def make_dataset(space, runtime_fn, counter_fns, arch=None, threads_fn=None,
                 indices=None):
    """Dataset from value functions of the assignment tuple.

    indices restricts which configurations carry measurements; model
    training accepts such partial coverage even though replay needs all.
    """
    if arch is None:
        arch = ArchProfile(name="synth", generation="pre_volta", cores=1024)
    records = []
    for conf in space.configurations:
        if indices is not None and conf.index not in indices:
            continue
        threads = 5 * 1024 if threads_fn is None else int(threads_fn(conf.assignment))
        records.append(MeasurementRecord(
            config_index=conf.index,
            runtime_us=float(runtime_fn(conf.assignment)),
            global_threads=threads,
            counters={name: float(fn(conf.assignment)) for name, fn in counter_fns.items()},
        ))
    return Dataset(space=space, arch=arch, input_label="unit", records=tuple(records))


# Counter map that analyzes to an idle GPU: no memory traffic, full
# efficiency, so only the chosen overrides light up.
BENIGN_COUNTERS = {
    "DRAM_RT": 0.0, "DRAM_WT": 0.0, "DRAM_U": 0.0,
    "L2_RT": 0.0, "L2_WT": 0.0, "L2_U": 0.0,
    "SHR_LT": 0.0, "SHR_WT": 0.0, "SHR_U": 0.0,
    "TEX_U": 0.0, "LOC_O": 0.0,
    "INST_F32": 0.0, "INST_F64": 0.0, "INST_INT": 0.0, "INST_MISC": 0.0,
    "INST_LDST": 0.0, "INST_CONT": 0.0, "INST_BCONV": 0.0,
    "INST_EXE": 1000.0, "INST_ISSUE_U": 20.0,
    "WARP_E": 100.0, "WARP_NP_E": 100.0, "SM_E": 100.0,
}


def benign_counters(**overrides):
    out = dict(BENIGN_COUNTERS)
    out.update(overrides)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
