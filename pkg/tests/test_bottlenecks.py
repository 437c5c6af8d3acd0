import dataclasses
import json
import os

import numpy as np
import pytest

from countertune.bottlenecks import (BottleneckVector, COMPONENT_NAMES,
                                     DEFAULT_INST_REACTION, INSTRUCTION_BOUND_REACTION,
                                     ISSUE_DELTA_SIGN, REQUIRED_COUNTERS, analyze, react)
from countertune.counters import ArchProfile
from countertune.errors import AnalysisError
from conftest import benign_counters

FIXTURE = os.path.join(os.path.dirname(__file__), "data", "bottleneck_cases.json")


def load_cases():
    with open(FIXTURE) as fh:
        return json.load(fh)


@pytest.mark.parametrize("case", load_cases(), ids=lambda c: c["name"])
def test_fixture_case(case):
    arch = ArchProfile(name=case["name"], generation=case["generation"],
                       cores=case["cores"])
    b = analyze(case["counters"], arch, case["threads"])
    assert b.degenerate_instructions == case["degenerate"]
    got = b.as_dict()
    for name, want in case["expected_b"].items():
        assert got[name] == pytest.approx(want, abs=1e-9), name
    delta = react(b, inst_reaction=case["inst_reaction"])
    for counter, want in case["expected_delta"].items():
        assert delta[counter] == pytest.approx(want, abs=1e-9), counter


def test_missing_counter_is_an_error(pre_volta_arch):
    counters = benign_counters()
    del counters["SM_E"]
    with pytest.raises(AnalysisError) as err:
        analyze(counters, pre_volta_arch, 5000)
    assert "SM_E" in str(err.value)


def test_component_names_cover_the_vector():
    fields = {f.name for f in dataclasses.fields(BottleneckVector)}
    assert set(COMPONENT_NAMES) <= fields
    assert len(COMPONENT_NAMES) == 18


def test_zero_traffic_means_zero_memory_pressure(pre_volta_arch):
    # full utilization but no transactions: the 0/0 share convention
    b = analyze(benign_counters(DRAM_U=10.0, L2_U=100.0, SHR_U=10.0),
                pre_volta_arch, 100000)
    assert b.b_dram_read == 0.0 and b.b_dram_write == 0.0
    assert b.b_l2_read == 0.0 and b.b_l2_write == 0.0
    assert b.b_shared_read == 0.0 and b.b_shared_write == 0.0


def test_degenerate_instruction_stream_zeroes_instruction_components(pre_volta_arch):
    for overrides in ({"INST_EXE": 0.0}, {"WARP_E": 0.0}, {"WARP_NP_E": 0.0}):
        b = analyze(benign_counters(INST_F32=1000.0, **overrides), pre_volta_arch, 100000)
        assert b.degenerate_instructions
        for name in ("b_fp32", "b_fp64", "b_int", "b_misc", "b_ldst", "b_control",
                     "b_bconv", "b_issue"):
            assert getattr(b, name) == 0.0
        # memory and occupancy components still computed
        assert b.b_sm == 0.0


def test_issue_utilization_scale_differs_by_generation(volta_arch, pre_volta_arch):
    counters = benign_counters(INST_F32=32000.0, INST_EXE=1000.0, INST_ISSUE_U=50.0)
    pre = analyze(counters, pre_volta_arch, 10**6)
    post = analyze(counters, volta_arch, 10**6)
    # share is 1.0 in both; pre-volta issue util 0.5, volta 50/50 capped at 1.0
    assert pre.b_fp32 == pytest.approx(0.5, abs=1e-12)
    assert post.b_fp32 == pytest.approx(1.0, abs=1e-12)


def make_vector(**overrides):
    values = {name: 0.0 for name in COMPONENT_NAMES}
    values.update(overrides)
    return BottleneckVector(**values)


def test_react_memory_deltas_negate_the_bottleneck():
    b = make_vector(b_dram_read=0.3, b_l2_write=0.8, b_tex=0.05, b_local=1.0)
    delta = react(b)
    assert delta["DRAM_RT"] == -0.3
    assert delta["L2_WT"] == -0.8
    assert delta["TEX_RWT"] == -0.05
    assert delta["LOC_O"] == -1.0
    assert delta["DRAM_WT"] == 0.0


def test_react_instruction_threshold():
    at = react(make_vector(b_fp32=DEFAULT_INST_REACTION))
    assert at["INST_F32"] == 0.0
    above = react(make_vector(b_fp32=0.85))
    assert above["INST_F32"] == pytest.approx(-0.5, abs=1e-12)
    maxed = react(make_vector(b_fp32=1.0))
    assert maxed["INST_F32"] == pytest.approx(-1.0, abs=1e-12)
    lowered = react(make_vector(b_fp32=0.75), inst_reaction=INSTRUCTION_BOUND_REACTION)
    assert lowered["INST_F32"] == pytest.approx(-0.5, abs=1e-12)


def test_react_issue_sign_constant():
    assert ISSUE_DELTA_SIGN == -1.0
    b = make_vector(b_issue=0.85)
    assert react(b)["INST_ISSUE_U"] == pytest.approx(-0.5, abs=1e-12)
    assert react(b, issue_delta_sign=1.0)["INST_ISSUE_U"] == pytest.approx(0.5, abs=1e-12)


def test_react_raises_occupancy_and_parallelism():
    delta = react(make_vector(b_sm=0.4, b_paral=0.9))
    assert delta["SM_E"] == 0.4
    assert delta["GLOBAL_THREADS"] == 0.9


def test_react_validates_threshold():
    b = make_vector()
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            react(b, inst_reaction=bad)


def random_counter_map(rng):
    c = {}
    for name in REQUIRED_COUNTERS:
        if name in ("DRAM_U", "TEX_U", "SHR_U"):
            c[name] = float(rng.uniform(0, 10))
        elif name in ("L2_U", "SM_E", "WARP_E", "WARP_NP_E", "INST_ISSUE_U"):
            c[name] = float(rng.uniform(0, 100))
        else:
            c[name] = float(rng.uniform(0, 10**7))
    # keep a slice of degenerate streams in the mix
    if rng.random() < 0.05:
        c[rng.choice(["INST_EXE", "WARP_E", "WARP_NP_E"])] = 0.0
    return c


def test_ranges_hold_under_random_inputs(rng):
    for _ in range(1000):
        gen = "pre_volta" if rng.random() < 0.5 else "volta_plus"
        arch = ArchProfile(name="r", generation=gen, cores=int(rng.integers(1, 5000)))
        threads = int(rng.integers(1, 10**7))
        b = analyze(random_counter_map(rng), arch, threads)
        for name in COMPONENT_NAMES:
            v = getattr(b, name)
            assert 0.0 <= v <= 1.0, f"{name}={v}"
        reaction = float(rng.uniform(0.05, 0.95))
        for counter, d in react(b, inst_reaction=reaction).items():
            assert -1.0 <= d <= 1.0, f"{counter}={d}"
