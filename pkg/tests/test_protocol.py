import sys
import textwrap

import pytest

from countertune.errors import CounterTuneError
from countertune.models import ExactModelSet
from countertune.search import (STATUS_STOPPED, SubprocessMeasurementSource,
                                run_profile_search, run_random_search)
from countertune.space import well_performing_set
from conftest import benign_counters, grid_space, make_dataset

# Runner speaking the line protocol: x,y plus the profiled flag in, runtime
# (and counters when profiled) out. Counter names mix canonical
# abbreviations with one raw vendor name to exercise canonicalization.
RUNNER = textwrap.dedent("""\
    import sys

    BENIGN = {benign!r}

    for line in sys.stdin:
        cells = line.strip().split(",")
        x, y = float(cells[0]), float(cells[1])
        profiled = cells[-1] == "1"
        runtime = 100.0 * x + 10.0 * y
        if not profiled:
            print(repr(runtime), flush=True)
            continue
        counters = dict(BENIGN)
        counters.pop("DRAM_RT", None)
        parts = [repr(runtime), "5120"]
        parts.append("dram_read_transactions=" + repr(1000.0 * x + 100.0 * y))
        parts.extend(name + "=" + repr(v) for name, v in counters.items())
        print(",".join(parts), flush=True)
    """)


def runner_dataset():
    space = grid_space(("x", range(1, 6)), ("y", range(1, 6)))
    counter_fns = {name: (lambda v: (lambda a: v))(val)
                   for name, val in benign_counters(DRAM_U=9.0).items()}
    counter_fns["DRAM_RT"] = lambda a: 1000.0 * a[0] + 100.0 * a[1]
    return make_dataset(space, lambda a: 100.0 * a[0] + 10.0 * a[1], counter_fns,
                        threads_fn=lambda a: 5120)


def write_runner(tmp_path, body=None):
    script = tmp_path / "runner.py"
    script.write_text(body if body is not None else
                      RUNNER.format(benign=benign_counters(DRAM_U=9.0)))
    return [sys.executable, str(script)]


def test_measure_round_trip(tmp_path):
    ds = runner_dataset()
    with SubprocessMeasurementSource(write_runner(tmp_path), ds.space, ds.arch) as source:
        plain = source.measure(0, profiled=False)
        assert plain.runtime_us == 110.0
        assert plain.counters is None

        profiled = source.measure(7, profiled=True)
        conf = ds.space.configurations[7]
        assert profiled.runtime_us == 100.0 * conf.assignment[0] + 10.0 * conf.assignment[1]
        assert profiled.global_threads == 5120
        # the raw vendor name canonicalized to the abbreviation
        assert profiled.counters["DRAM_RT"] == 1000.0 * conf.assignment[0] + \
            100.0 * conf.assignment[1]
        assert profiled.counters["DRAM_U"] == 9.0


def test_random_search_over_a_subprocess(tmp_path):
    ds = runner_dataset()
    well = well_performing_set(ds)
    with SubprocessMeasurementSource(write_runner(tmp_path), ds.space, ds.arch) as source:
        trace = run_random_search(source, seed=4, stop_indices=well)
    assert trace.status == STATUS_STOPPED
    assert trace.steps[-1].config_index in well


def test_profile_search_over_a_subprocess(tmp_path):
    # models come from a replayed dataset; measurements come from the runner
    ds = runner_dataset()
    well = well_performing_set(ds)
    exact = ExactModelSet(ds)
    with SubprocessMeasurementSource(write_runner(tmp_path), ds.space, ds.arch) as source:
        trace = run_profile_search(source, exact, i=25, n=3, seed=8, stop_indices=well)
    assert trace.status == STATUS_STOPPED
    assert trace.steps[-1].config_index in well
    runtimes = {s.config_index: s.runtime_us for s in trace.steps}
    for idx, rt in runtimes.items():
        conf = ds.space.configurations[idx]
        assert rt == 100.0 * conf.assignment[0] + 10.0 * conf.assignment[1]


def test_malformed_runtime_is_an_error(tmp_path):
    ds = runner_dataset()
    body = "import sys\nfor line in sys.stdin:\n    print('not-a-number', flush=True)\n"
    with SubprocessMeasurementSource(write_runner(tmp_path, body), ds.space,
                                     ds.arch) as source:
        with pytest.raises(CounterTuneError) as err:
            source.measure(0, profiled=False)
        assert "malformed" in str(err.value)


def test_closed_pipe_is_an_error(tmp_path):
    ds = runner_dataset()
    with SubprocessMeasurementSource(write_runner(tmp_path, "pass\n"), ds.space,
                                     ds.arch) as source:
        with pytest.raises(CounterTuneError) as err:
            source.measure(0, profiled=False)
        assert "closed" in str(err.value)
