"""Expert system: counters -> bottleneck vector -> required counter changes.

All formulas operate on canonical counter values (see counters.py): DRAM_U,
TEX_U, SHR_U ranked in <0, 10>, percentages like SM_E in <0, 100>. Every
bottleneck component is clamped into <0, 1>, where 0 means the subsystem is
idle and 1 means it fully limits the kernel, so downstream code can rely on
the bounds even when a counter drifts past its nominal range.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

from .counters import ArchProfile, PRE_VOLTA
from .errors import AnalysisError

DeltaPC = Dict[str, float]

# Counters the bottleneck equations read. TEX_RWT is absent on purpose: the
# texture path is judged by its utilization alone, the transaction count
# only matters when reacting.
REQUIRED_COUNTERS: Tuple[str, ...] = (
    "DRAM_RT", "DRAM_WT", "DRAM_U",
    "L2_RT", "L2_WT", "L2_U",
    "SHR_LT", "SHR_WT", "SHR_U",
    "TEX_U", "LOC_O",
    "INST_F32", "INST_F64", "INST_INT", "INST_MISC",
    "INST_LDST", "INST_CONT", "INST_BCONV",
    "INST_EXE", "INST_ISSUE_U", "WARP_E", "WARP_NP_E",
    "SM_E",
)

# Bottleneck component -> OPS counter its reaction asks to change.
MEMORY_TARGETS: Tuple[Tuple[str, str], ...] = (
    ("b_dram_read", "DRAM_RT"),
    ("b_dram_write", "DRAM_WT"),
    ("b_l2_read", "L2_RT"),
    ("b_l2_write", "L2_WT"),
    ("b_shared_read", "SHR_LT"),
    ("b_shared_write", "SHR_WT"),
    ("b_tex", "TEX_RWT"),
    ("b_local", "LOC_O"),
)
INSTRUCTION_TARGETS: Tuple[Tuple[str, str], ...] = (
    ("b_fp32", "INST_F32"),
    ("b_fp64", "INST_F64"),
    ("b_int", "INST_INT"),
    ("b_misc", "INST_MISC"),
    ("b_ldst", "INST_LDST"),
    ("b_control", "INST_CONT"),
    ("b_bconv", "INST_BCONV"),
    ("b_issue", "INST_ISSUE_U"),
)

COMPONENT_NAMES: Tuple[str, ...] = tuple(
    name for name, _ in MEMORY_TARGETS + INSTRUCTION_TARGETS) + ("b_sm", "b_paral")

# Issue-slot pressure reacts on INST_ISSUE_U with the same negative formula
# as the other instruction classes. Raising issue-slot utilization would
# arguably soften the bottleneck too; flip this to +1.0 to try that reading.
ISSUE_DELTA_SIGN = -1.0

DEFAULT_INST_REACTION = 0.7
# When the user states the kernel is instruction bound, reactions should
# fire earlier.
INSTRUCTION_BOUND_REACTION = 0.5

# Threads per core the scheduler wants available before parallelism stops
# being the limiter.
SATURATION_THREADS_PER_CORE = 5


@dataclass(frozen=True)
class BottleneckVector:
    """Per-subsystem bottleneck ranks in <0, 1>.

    degenerate_instructions marks counter maps where instruction pressure is
    undefined (no instructions executed, or a zero warp efficiency); the
    eight instruction components are reported as 0 in that case.
    """

    b_dram_read: float
    b_dram_write: float
    b_l2_read: float
    b_l2_write: float
    b_shared_read: float
    b_shared_write: float
    b_tex: float
    b_local: float
    b_fp32: float
    b_fp64: float
    b_int: float
    b_misc: float
    b_ldst: float
    b_control: float
    b_bconv: float
    b_issue: float
    b_sm: float
    b_paral: float
    degenerate_instructions: bool = False

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in COMPONENT_NAMES}


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def _traffic_share(part: float, total: float) -> float:
    # An idle subsystem (no transactions at all) is no bottleneck in either
    # direction, so 0/0 resolves to 0 rather than an error.
    return part / total if total > 0.0 else 0.0


def analyze(counter_map: Dict[str, float], arch: ArchProfile,
            global_threads: int) -> BottleneckVector:
    """Rank how much each GPU subsystem limits the measured kernel.

    Memory subsystems combine their utilization with the read/write split
    of their traffic. Instruction classes are their share of the warp-size
    adjusted instruction stream, weighted by issue-slot usage. b_sm and
    b_paral grow as multiprocessor occupancy and launched parallelism fall
    short of saturating the GPU.
    """
    missing = [c for c in REQUIRED_COUNTERS if c not in counter_map]
    if missing:
        raise AnalysisError(f"counter map is missing {', '.join(missing)}")
    c = counter_map

    rw_total = c["DRAM_RT"] + c["DRAM_WT"]
    b_dram_read = _traffic_share(c["DRAM_RT"], rw_total) * c["DRAM_U"] / 10.0
    b_dram_write = _traffic_share(c["DRAM_WT"], rw_total) * c["DRAM_U"] / 10.0

    l2_total = c["L2_RT"] + c["L2_WT"]
    b_l2_read = _traffic_share(c["L2_RT"], l2_total) * c["L2_U"] / 10.0
    b_l2_write = _traffic_share(c["L2_WT"], l2_total) * c["L2_U"] / 10.0

    shr_total = c["SHR_LT"] + c["SHR_WT"]
    b_shared_read = _traffic_share(c["SHR_LT"], shr_total) * c["SHR_U"] / 10.0
    b_shared_write = _traffic_share(c["SHR_WT"], shr_total) * c["SHR_U"] / 10.0

    b_tex = c["TEX_U"] / 10.0

    # Local memory spills travel through the whole cache hierarchy, so rank
    # them by the busiest stage it can stress.
    b_local = (c["LOC_O"] / 100.0) * max(c["DRAM_U"], c["L2_U"], c["TEX_U"]) / 10.0

    degenerate = c["INST_EXE"] <= 0.0 or c["WARP_E"] <= 0.0 or c["WARP_NP_E"] <= 0.0
    if degenerate:
        inst = {name: 0.0 for name, _ in INSTRUCTION_TARGETS}
    else:
        # Thread-level instruction count a fully efficient kernel would
        # execute: warp instructions times warp width, with both efficiency
        # losses scaled back in.
        ins_fitted = 32.0 * c["INST_EXE"] * (100.0 / c["WARP_E"]) * (100.0 / c["WARP_NP_E"])
        if arch.generation == PRE_VOLTA:
            ins_util = c["INST_ISSUE_U"] / 100.0
        else:
            # Newer schedulers dual-issue, so 50% issue-slot use already
            # saturates the pipelines.
            ins_util = min(1.0, c["INST_ISSUE_U"] / 50.0)
        ratios = {}
        for name, counter in INSTRUCTION_TARGETS:
            if name == "b_issue":
                continue
            ratios[name] = c[counter] / ins_fitted
        inst = {name: ratio * ins_util for name, ratio in ratios.items()}
        util_max = max(ratios.values())
        inst["b_issue"] = util_max * (100.0 - c["INST_ISSUE_U"]) / 100.0

    b_sm = (100.0 - c["SM_E"]) / 100.0
    saturation = float(arch.cores * SATURATION_THREADS_PER_CORE)
    b_paral = max(0.0, (saturation - float(global_threads)) / saturation)

    return BottleneckVector(
        b_dram_read=_clamp01(b_dram_read),
        b_dram_write=_clamp01(b_dram_write),
        b_l2_read=_clamp01(b_l2_read),
        b_l2_write=_clamp01(b_l2_write),
        b_shared_read=_clamp01(b_shared_read),
        b_shared_write=_clamp01(b_shared_write),
        b_tex=_clamp01(b_tex),
        b_local=_clamp01(b_local),
        b_fp32=_clamp01(inst["b_fp32"]),
        b_fp64=_clamp01(inst["b_fp64"]),
        b_int=_clamp01(inst["b_int"]),
        b_misc=_clamp01(inst["b_misc"]),
        b_ldst=_clamp01(inst["b_ldst"]),
        b_control=_clamp01(inst["b_control"]),
        b_bconv=_clamp01(inst["b_bconv"]),
        b_issue=_clamp01(inst["b_issue"]),
        b_sm=_clamp01(b_sm),
        b_paral=_clamp01(b_paral),
        degenerate_instructions=degenerate,
    )


def _clamp_signed(x: float) -> float:
    return -1.0 if x < -1.0 else (1.0 if x > 1.0 else x)


def react(b: BottleneckVector, inst_reaction: float = DEFAULT_INST_REACTION,
          issue_delta_sign: float = ISSUE_DELTA_SIGN) -> DeltaPC:
    """Turn a bottleneck vector into desired relative counter changes.

    Returns a map counter -> delta in <-1, 1>: negative asks the search for
    configurations with less of that counter, positive for more. Memory
    pressure converts directly (delta = -b). Instruction classes only react
    above the inst_reaction threshold, because shrinking an instruction mix
    is rarely possible and only worth asking for when the class dominates.
    SM_E and GLOBAL_THREADS get positive deltas: occupancy and launched
    parallelism are the two quantities the search should try to raise.
    """
    if not 0.0 < inst_reaction < 1.0:
        raise ValueError(f"inst_reaction must lie in (0, 1), got {inst_reaction}")
    delta: DeltaPC = {}
    for name, counter in MEMORY_TARGETS:
        delta[counter] = _clamp_signed(-getattr(b, name))
    for name, counter in INSTRUCTION_TARGETS:
        value = getattr(b, name)
        if value <= inst_reaction:
            scaled = 0.0
        else:
            scaled = -(value - inst_reaction) / (1.0 - inst_reaction)
        if name == "b_issue":
            scaled = issue_delta_sign * abs(scaled)
        delta[counter] = _clamp_signed(scaled)
    delta["SM_E"] = _clamp_signed(b.b_sm)
    delta["GLOBAL_THREADS"] = _clamp_signed(b.b_paral)
    return delta
