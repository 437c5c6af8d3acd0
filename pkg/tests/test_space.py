import pytest

from countertune.errors import DatasetFormatError, UnknownCounterError
from countertune.space import (Dataset, MeasurementRecord, TuningConfiguration,
                               TuningParameter, TuningSpace, binary_subspace_key,
                               load_dataset_dir, load_measurements, load_space,
                               save_dataset, save_space, well_performing_set)
from conftest import grid_space, make_dataset


def test_parameter_values_must_be_ascending_and_distinct():
    with pytest.raises(ValueError):
        TuningParameter(name="a", values=(2.0, 1.0), is_binary=False)
    with pytest.raises(ValueError):
        TuningParameter(name="a", values=(1.0, 1.0), is_binary=False)
    with pytest.raises(ValueError):
        TuningParameter(name="a", values=(), is_binary=False)


def test_binary_flag_is_a_biconditional():
    TuningParameter(name="a", values=(0.0, 1.0), is_binary=True)
    with pytest.raises(ValueError):
        TuningParameter(name="a", values=(0.0, 1.0), is_binary=False)
    with pytest.raises(ValueError):
        TuningParameter(name="a", values=(0.0, 2.0), is_binary=True)
    # make() derives the flag
    assert TuningParameter.make("a", [1, 0]).is_binary
    assert not TuningParameter.make("a", [0, 2]).is_binary


def test_space_validation():
    p = TuningParameter.make("x", [1, 2])
    ok = TuningSpace(parameters=(p,), configurations=(
        TuningConfiguration((1.0,), 0), TuningConfiguration((2.0,), 1)))
    assert len(ok) == 2
    assert ok.parameter_names == ("x",)

    with pytest.raises(ValueError):  # index not positional
        TuningSpace(parameters=(p,), configurations=(TuningConfiguration((1.0,), 1),))
    with pytest.raises(ValueError):  # arity mismatch
        TuningSpace(parameters=(p,), configurations=(TuningConfiguration((1.0, 2.0), 0),))
    with pytest.raises(ValueError):  # duplicate assignment
        TuningSpace(parameters=(p,), configurations=(
            TuningConfiguration((1.0,), 0), TuningConfiguration((1.0,), 1)))
    with pytest.raises(ValueError):  # out of domain
        TuningSpace(parameters=(p,), configurations=(TuningConfiguration((3.0,), 0),))


def test_measurement_record_validation():
    ok = MeasurementRecord(config_index=0, runtime_us=1.0, global_threads=1,
                           counters={"DRAM_U": 10.0})
    assert ok.runtime_us == 1.0
    with pytest.raises(ValueError):
        MeasurementRecord(config_index=0, runtime_us=0.0, global_threads=1, counters={})
    with pytest.raises(ValueError):
        MeasurementRecord(config_index=0, runtime_us=float("nan"), global_threads=1,
                          counters={})
    with pytest.raises(ValueError):
        MeasurementRecord(config_index=0, runtime_us=1.0, global_threads=0, counters={})
    with pytest.raises(ValueError):  # utilization above its scale
        MeasurementRecord(config_index=0, runtime_us=1.0, global_threads=1,
                          counters={"DRAM_U": 10.5})
    with pytest.raises(ValueError):  # negative count
        MeasurementRecord(config_index=0, runtime_us=1.0, global_threads=1,
                          counters={"DRAM_RT": -1.0})
    # L2_U is a percent internally
    MeasurementRecord(config_index=0, runtime_us=1.0, global_threads=1,
                      counters={"L2_U": 55.0})


def test_dataset_validation():
    space = grid_space(("x", [1, 2]))
    rec = lambda i, rt: MeasurementRecord(config_index=i, runtime_us=rt,
                                          global_threads=1, counters={"DRAM_RT": 1.0})
    ds = Dataset(space=space, arch=None, input_label="t", records=(rec(0, 5.0), rec(1, 4.0)))
    assert ds.best_runtime == 4.0
    assert ds.record_for(1).runtime_us == 4.0

    with pytest.raises(ValueError):
        Dataset(space=space, arch=None, input_label="t", records=())
    with pytest.raises(ValueError):  # index beyond the space
        Dataset(space=space, arch=None, input_label="t", records=(rec(2, 1.0),))
    with pytest.raises(ValueError):  # duplicate index
        Dataset(space=space, arch=None, input_label="t", records=(rec(0, 1.0), rec(0, 2.0)))
    with pytest.raises(ValueError):  # ragged counter sets
        other = MeasurementRecord(config_index=1, runtime_us=1.0, global_threads=1,
                                  counters={"DRAM_WT": 1.0})
        Dataset(space=space, arch=None, input_label="t", records=(rec(0, 1.0), other))


def test_counter_names_follow_catalog_order():
    space = grid_space(("x", [1, 2]))
    cmap = {"SM_E": 100.0, "DRAM_RT": 1.0, "INST_F32": 2.0}
    records = tuple(MeasurementRecord(config_index=i, runtime_us=1.0, global_threads=1,
                                      counters=dict(cmap)) for i in range(2))
    ds = Dataset(space=space, arch=None, input_label="t", records=records)
    assert ds.counter_names == ("DRAM_RT", "INST_F32", "SM_E")


def test_well_performing_set_and_slack_monotonicity(gradient_dataset):
    base = well_performing_set(gradient_dataset)  # slack 1.1
    assert len(base) == 12
    best_idx = min(gradient_dataset.records, key=lambda r: r.runtime_us).config_index
    assert best_idx in base
    tight = well_performing_set(gradient_dataset, slack=1.0)
    wide = well_performing_set(gradient_dataset, slack=1.5)
    assert tight <= base <= wide
    assert tight == {best_idx}
    with pytest.raises(ValueError):
        well_performing_set(gradient_dataset, slack=0.9)


def test_binary_subspace_key_partitions_the_space():
    space = grid_space(("a", [0, 1]), ("x", [1, 2, 3]), ("b", [0, 1]))
    keys = {}
    for conf in space.configurations:
        keys.setdefault(binary_subspace_key(space, conf), []).append(conf)
    assert set(keys) == {"00", "01", "10", "11"}
    assert all(len(v) == 3 for v in keys.values())
    # and a space with no binary parameters collapses to one empty key
    flat = grid_space(("x", [1, 2, 3]))
    assert {binary_subspace_key(flat, c) for c in flat.configurations} == {""}


def test_dataset_round_trip_is_byte_stable(tmp_path, gradient_dataset):
    first = tmp_path / "one"
    second = tmp_path / "two"
    save_dataset(gradient_dataset, first)
    loaded = load_dataset_dir(first)
    assert loaded.input_label == "one"
    assert len(loaded.space) == len(gradient_dataset.space)
    assert loaded.counter_names == gradient_dataset.counter_names
    for rec in gradient_dataset.records:
        got = loaded.record_for(rec.config_index)
        assert got.runtime_us == rec.runtime_us
        assert got.global_threads == rec.global_threads
        assert got.counters == rec.counters
    save_dataset(loaded, second)
    for name in ("space.csv", "measurements.csv", "arch.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_space_round_trip_preserves_fractional_values(tmp_path):
    space = grid_space(("x", [0.5, 1.25, 2.0]), ("flag", [0, 1]))
    path = tmp_path / "space.csv"
    save_space(space, path)
    loaded = load_space(path)
    assert loaded == space


def test_load_space_errors(tmp_path):
    path = tmp_path / "space.csv"

    path.write_text("x,y\n")
    with pytest.raises(DatasetFormatError) as err:
        load_space(path)
    assert ":1:" in str(err.value)

    path.write_text("param:x\nbinary:2\n1.0\n")
    with pytest.raises(DatasetFormatError) as err:
        load_space(path)
    assert ":2:" in str(err.value)

    path.write_text("param:x\nbinary:0\n1.0\n1.0\n")
    with pytest.raises(DatasetFormatError) as err:
        load_space(path)
    assert "duplicate configuration" in str(err.value)

    # binary-valued column must carry the binary flag
    path.write_text("param:x,param:f\nbinary:0,binary:0\n1.0,0.0\n1.0,1.0\n2.0,0.0\n2.0,1.0\n")
    with pytest.raises(DatasetFormatError) as err:
        load_space(path)
    assert "must be flagged binary:1" in str(err.value)

    # flagged binary column cannot hold other values
    path.write_text("param:x\nbinary:1\n0.0\n2.0\n")
    with pytest.raises(DatasetFormatError) as err:
        load_space(path)
    assert "binary" in str(err.value)


def test_load_measurements_errors(tmp_path, pre_volta_arch):
    space = grid_space(("x", [1, 2]))
    path = tmp_path / "m.csv"

    path.write_text("index,runtime_us,global_threads\n")
    with pytest.raises(DatasetFormatError):
        load_measurements(path, space, pre_volta_arch)

    path.write_text("config_index,runtime_us,global_threads,GLOBAL_THREADS\n0,1.0,1,5\n")
    with pytest.raises(DatasetFormatError) as err:
        load_measurements(path, space, pre_volta_arch)
    assert "global_threads column" in str(err.value)

    path.write_text("config_index,runtime_us,global_threads,bogus\n0,1.0,1,5\n")
    with pytest.raises(UnknownCounterError):
        load_measurements(path, space, pre_volta_arch)

    path.write_text("config_index,runtime_us,global_threads,DRAM_RT\n"
                    "0,1.0,1,5\n0,2.0,1,5\n")
    with pytest.raises(DatasetFormatError) as err:
        load_measurements(path, space, pre_volta_arch)
    assert "duplicate config_index 0" in str(err.value)
    assert ":3:" in str(err.value)

    path.write_text("config_index,runtime_us,global_threads,DRAM_RT\n5,1.0,1,5\n")
    with pytest.raises(DatasetFormatError) as err:
        load_measurements(path, space, pre_volta_arch)
    assert "outside the space" in str(err.value)

    path.write_text("config_index,runtime_us,global_threads,DRAM_U\n0,1.0,1,11.0\n")
    with pytest.raises(DatasetFormatError) as err:
        load_measurements(path, space, pre_volta_arch)
    assert "DRAM_U" in str(err.value)


def test_load_measurements_canonicalizes_raw_names(tmp_path, volta_arch):
    space = grid_space(("x", [1, 2]))
    path = tmp_path / "m.csv"
    path.write_text(
        "config_index,runtime_us,global_threads,"
        "dram__throughput.avg.pct_of_peak_sustained_elapsed\n"
        "0,1.0,64,80.0\n1,2.0,64,40.0\n")
    records = load_measurements(path, space, volta_arch)
    assert records[0].counters == {"DRAM_U": 8.0}
    assert records[1].counters == {"DRAM_U": 4.0}


def test_partial_coverage_dataset_is_allowed_for_training():
    # model training tolerates datasets that measure a subset of the space
    space = grid_space(("x", [1, 2, 3]))
    ds = make_dataset(space, lambda a: a[0], {"DRAM_RT": lambda a: a[0]},
                      indices={0, 2})
    assert len(ds.records) == 2
