"""Performance-counter catalog and per-GPU name canonicalization.

Counters live in two generations of vendor naming: the classic event names
(pre-Volta tooling) and the newer dotted metric names (Volta and later).
Internally everything is stored under a short canonical abbreviation on the
pre-Volta scale: utilization ranks in <0, 10>, efficiency percentages in
<0, 100>, operation counts as plain non-negative numbers.

Two counter kinds matter downstream:

  OPS    -- operation counts and issue-slot usage; mostly a property of the
            compiled kernel, so they transfer between GPUs and are what the
            surrogate models predict.
  STRESS -- utilization of a hardware subsystem; specific to the GPU that
            executed the kernel, consumed only by the bottleneck equations.

GLOBAL_THREADS is a synthetic OPS entry: the size of the launched grid is
carried alongside the hardware counters so the modeling and scoring layers
can treat it uniformly.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from .errors import DatasetFormatError

OPS = "ops"
STRESS = "stress"

PRE_VOLTA = "pre_volta"
VOLTA_PLUS = "volta_plus"

GENERATIONS = (PRE_VOLTA, VOLTA_PLUS)

GLOBAL_THREADS = "GLOBAL_THREADS"


@dataclass(frozen=True)
class CounterDescriptor:
    """One catalog row.

    volta_scale is the multiplier applied to a Volta-generation reading to
    reach the canonical pre-Volta scale. Pre-Volta readings are canonical
    by definition and never rescaled.
    """

    abbr: str
    kind: str
    pre_volta_name: Optional[str]
    volta_name: Optional[str]
    volta_scale: float = 1.0


# Catalog order doubles as the canonical column order in measurement files.
# The newer lts l2 utilization metric reports percent-of-peak and ships with
# no rescale annotation, so its readings pass through unchanged; every
# formula that consumes L2_U divides by 10 and clamps, same as DRAM_U.
CATALOG: Tuple[CounterDescriptor, ...] = (
    CounterDescriptor("DRAM_RT", OPS, "dram_read_transactions", "dram__sectors_read.sum"),
    CounterDescriptor("DRAM_WT", OPS, "dram_write_transactions", "dram__sectors_write.sum"),
    CounterDescriptor("L2_RT", OPS, "l2_read_transactions", "lts__t_sectors_op_read.sum"),
    CounterDescriptor("L2_WT", OPS, "l2_write_transactions", "lts__t_sectors_op_write.sum"),
    CounterDescriptor("TEX_RWT", OPS, "tex_cache_transactions",
                      "l1tex__t_requests_pipe_lsu_mem_global_op_ld.sum"),
    CounterDescriptor("LOC_O", OPS, "local_memory_overhead",
                      "l1tex__t_sectors_pipe_lsu_mem_local_op_st.sum"),
    CounterDescriptor("SHR_LT", OPS, "shared_load_transactions",
                      "l1tex__data_pipe_lsu_wavefronts_mem_shared_op_ld.sum"),
    CounterDescriptor("SHR_WT", OPS, "shared_store_transactions",
                      "l1tex__data_pipe_lsu_wavefronts_mem_shared_op_st.sum"),
    CounterDescriptor("INST_F32", OPS, "inst_fp_32",
                      "smsp__sass_thread_inst_executed_op_fp32_pred_on.sum"),
    CounterDescriptor("INST_F64", OPS, "inst_fp_64",
                      "smsp__sass_thread_inst_executed_op_fp64_pred_on.sum"),
    CounterDescriptor("INST_INT", OPS, "inst_integer",
                      "smsp__sass_thread_inst_executed_op_integer_pred_on.sum"),
    CounterDescriptor("INST_MISC", OPS, "inst_misc",
                      "smsp__sass_thread_inst_executed_op_misc_pred_on.sum"),
    CounterDescriptor("INST_LDST", OPS, "inst_compute_ld_st",
                      "smsp__sass_thread_inst_executed_op_memory_pred_on.sum"),
    CounterDescriptor("INST_CONT", OPS, "inst_control",
                      "smsp__sass_thread_inst_executed_op_control_pred_on.sum"),
    CounterDescriptor("INST_BCONV", OPS, "inst_bit_convert",
                      "smsp__sass_thread_inst_executed_op_conversion_pred_on.sum"),
    CounterDescriptor("INST_EXE", OPS, "inst_executed", "smsp__inst_executed.sum"),
    CounterDescriptor("INST_ISSUE_U", OPS, "issue_slot_utilization",
                      "smsp__issue_active.avg.pct_of_peak_sustained_active"),
    CounterDescriptor("DRAM_U", STRESS, "dram_utilization",
                      "dram__throughput.avg.pct_of_peak_sustained_elapsed", 0.1),
    CounterDescriptor("L2_U", STRESS, "l2_utilization",
                      "lts__t_sectors.avg.pct_of_peak_sustained_elapsed"),
    CounterDescriptor("TEX_U", STRESS, "tex_utilization",
                      "l1tex__t_requests_pipe_lsu_mem_global_op_ld.avg.pct_of_peak_sustained_active",
                      0.1),
    CounterDescriptor("SHR_U", STRESS, "shared_utilization",
                      "l1tex__data_pipe_lsu_wavefronts_mem_shared.avg.pct_of_peak_sustained_elapsed",
                      0.1),
    CounterDescriptor("SM_E", STRESS, "sm_efficiency",
                      "smsp__cycles_active.avg.pct_of_peak_sustained_elapsed"),
    CounterDescriptor("WARP_E", STRESS, "warp_execution_efficiency",
                      "smsp__thread_inst_executed_per_inst_executed.ratio", 100.0 / 32.0),
    CounterDescriptor("WARP_NP_E", STRESS, "warp_nonpred_execution_efficiency",
                      "smsp__thread_inst_executed_per_inst_executed.pct"),
    CounterDescriptor(GLOBAL_THREADS, OPS, None, None),
)

BY_ABBR: Dict[str, CounterDescriptor] = {d.abbr: d for d in CATALOG}
_BY_PRE_VOLTA = {d.pre_volta_name: d for d in CATALOG if d.pre_volta_name}
_BY_VOLTA = {d.volta_name: d for d in CATALOG if d.volta_name}

ABBREVIATIONS: Tuple[str, ...] = tuple(d.abbr for d in CATALOG)

# Admissible canonical value range per counter, used when validating loaded
# measurements. None means unbounded above. L2_U is deliberately loose: its
# Volta reading is a percentage that canonicalizes unscaled.
VALUE_RANGES: Dict[str, Tuple[float, Optional[float]]] = {}
for _d in CATALOG:
    if _d.kind == OPS:
        VALUE_RANGES[_d.abbr] = (0.0, None)
    elif _d.abbr in ("DRAM_U", "TEX_U", "SHR_U"):
        VALUE_RANGES[_d.abbr] = (0.0, 10.0)
    else:
        VALUE_RANGES[_d.abbr] = (0.0, 100.0)
del _d


def classify(abbr: str) -> str:
    """Return OPS or STRESS for a canonical abbreviation."""
    try:
        return BY_ABBR[abbr].kind
    except KeyError:
        raise KeyError(f"unknown counter abbreviation {abbr!r}")


def ops_counters() -> Tuple[str, ...]:
    """Canonical abbreviations of all OPS counters, catalog order."""
    return tuple(d.abbr for d in CATALOG if d.kind == OPS)


@dataclass(frozen=True)
class ArchProfile:
    """Identity and counter dialect of one GPU.

    overrides maps a raw counter name to (abbreviation, scale) and wins over
    the built-in catalog, so a profile can graft vendor-renamed or exotic
    counters onto the canonical set without code changes.
    """

    name: str
    generation: str
    cores: int
    overrides: Dict[str, Tuple[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.generation not in GENERATIONS:
            raise ValueError(f"generation must be one of {GENERATIONS}, got {self.generation!r}")
        if self.cores < 1:
            raise ValueError(f"cores must be >= 1, got {self.cores}")


def canonicalize(raw_name: str, value: float, arch: ArchProfile) -> Tuple[str, float]:
    """Map one raw counter reading to (abbreviation, canonical value).

    Accepts arch overrides first, then the generation's catalog names, then
    canonical abbreviations verbatim (identity), so measurement files may be
    written directly in canonical form. Raises KeyError for anything else.
    """
    if raw_name in arch.overrides:
        abbr, scale = arch.overrides[raw_name]
        if abbr not in BY_ABBR:
            raise KeyError(f"arch override for {raw_name!r} targets unknown counter {abbr!r}")
        return abbr, value * scale
    table = _BY_PRE_VOLTA if arch.generation == PRE_VOLTA else _BY_VOLTA
    desc = table.get(raw_name)
    if desc is not None:
        scale = 1.0 if arch.generation == PRE_VOLTA else desc.volta_scale
        return desc.abbr, value * scale
    if raw_name in BY_ABBR:
        return raw_name, value
    raise KeyError(f"counter name {raw_name!r} is not known for generation {arch.generation}")


def load_arch(path) -> ArchProfile:
    """Parse an arch profile from `key = value` text.

    Recognized keys: name, generation, cores, and the override pairs
    `map.<raw_name> = <ABBR>` / `ratio.<raw_name> = <float>`. Blank lines
    and lines starting with # are ignored.
    """
    name = None
    generation = None
    cores = None
    maps: Dict[str, str] = {}
    ratios: Dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DatasetFormatError(path, lineno, f"expected 'key = value', got {stripped!r}")
            key, _, val = stripped.partition("=")
            key = key.strip()
            val = val.strip()
            if key == "name":
                name = val
            elif key == "generation":
                if val not in GENERATIONS:
                    raise DatasetFormatError(path, lineno,
                                             f"generation must be one of {GENERATIONS}, got {val!r}")
                generation = val
            elif key == "cores":
                try:
                    cores = int(val)
                except ValueError:
                    raise DatasetFormatError(path, lineno, f"cores must be an integer, got {val!r}")
                if cores < 1:
                    raise DatasetFormatError(path, lineno, f"cores must be >= 1, got {cores}")
            elif key.startswith("map."):
                raw = key[len("map."):]
                if val not in BY_ABBR:
                    raise DatasetFormatError(path, lineno,
                                             f"map target {val!r} is not a canonical counter")
                maps[raw] = val
            elif key.startswith("ratio."):
                raw = key[len("ratio."):]
                try:
                    ratios[raw] = float(val)
                except ValueError:
                    raise DatasetFormatError(path, lineno, f"ratio must be a number, got {val!r}")
            else:
                raise DatasetFormatError(path, lineno, f"unknown key {key!r}")
    if name is None or generation is None or cores is None:
        raise DatasetFormatError(path, 0, "arch file must define name, generation, and cores")
    for raw in ratios:
        if raw not in maps:
            raise DatasetFormatError(path, 0, f"ratio.{raw} given without a matching map.{raw}")
    overrides = {raw: (abbr, ratios.get(raw, 1.0)) for raw, abbr in maps.items()}
    return ArchProfile(name=name, generation=generation, cores=cores, overrides=overrides)


def save_arch(arch: ArchProfile, path) -> None:
    """Write an arch profile in the canonical key order load_arch accepts."""
    lines = [
        f"name = {arch.name}",
        f"generation = {arch.generation}",
        f"cores = {arch.cores}",
    ]
    for raw in sorted(arch.overrides):
        abbr, ratio = arch.overrides[raw]
        lines.append(f"map.{raw} = {abbr}")
        if ratio != 1.0:
            lines.append(f"ratio.{raw} = {ratio!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
