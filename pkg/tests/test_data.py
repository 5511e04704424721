"""Dataset ingestion, splitting, windowing, and synthesis tests."""

import numpy as np
import pytest

from ister.data import (
    SeriesTable,
    SplitSpec,
    TimeWindow,
    chronological_split,
    load_csv,
    synth_multiperiodic,
    windows,
)
from ister.errors import DataError


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- load_csv ---------------------------------------------------------------


def test_load_basic_two_channels(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3,4\n5,6\n")
    table = load_csv(p)
    assert table.values.shape == (3, 2)
    assert table.channel_names == ["a", "b"]
    assert len(table) == 3


def test_load_with_timestamp_column(tmp_path):
    p = write(tmp_path, "date,OT\n2016-07-01,5.0\n2016-07-02,6.0\n")
    table = load_csv(p, timestamp_column="date")
    assert table.n_channels == 1
    assert table.channel_names == ["OT"]
    assert table.timestamps == ["2016-07-01", "2016-07-02"]
    np.testing.assert_array_equal(table.values[:, 0], [5.0, 6.0])


def test_load_nan_cell_names_location(tmp_path):
    p = write(tmp_path, "a,b\n1,2\nNaN,4\n")
    with pytest.raises(DataError) as exc:
        load_csv(p)
    msg = str(exc.value)
    assert "line 3" in msg and "'a'" in msg


def test_load_unparsable_cell_names_location(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3,oops\n")
    with pytest.raises(DataError) as exc:
        load_csv(p)
    assert "line 3" in str(exc.value) and "'b'" in str(exc.value)


def test_load_ragged_row_errors(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3\n")
    with pytest.raises(DataError) as exc:
        load_csv(p)
    assert "columns" in str(exc.value)


def test_load_missing_file_errors():
    with pytest.raises(DataError) as exc:
        load_csv("/nonexistent/nope.csv")
    assert "/nonexistent/nope.csv" in str(exc.value)


def test_load_headerless(tmp_path):
    p = write(tmp_path, "1,2\n3,4\n")
    table = load_csv(p, has_header=False)
    assert table.values.shape == (2, 2)
    assert table.channel_names == ["c0", "c1"]


# -- chronological_split ------------------------------------------------------


def _table(n_rows, n_channels=2):
    vals = np.arange(n_rows * n_channels, dtype=np.float64).reshape(n_rows, n_channels)
    return SeriesTable("t", vals, [f"c{i}" for i in range(n_channels)])


def test_split_fractions_70_10_20():
    train, val, test = chronological_split(_table(100), SplitSpec())
    assert (len(train), len(val), len(test)) == (70, 10, 20)
    # contiguous and ordered
    assert train.values[-1, 0] < val.values[0, 0] < test.values[0, 0]
    joined = np.concatenate([train.values, val.values, test.values], axis=0)
    np.testing.assert_array_equal(joined, _table(100).values)


def test_split_empty_train_errors():
    with pytest.raises(DataError):
        chronological_split(_table(100), SplitSpec(fractions=(0.0, 0.0, 1.0)))


def test_split_explicit_ett_style_counts():
    spec = SplitSpec(fractions=None, counts=(34465, 11521, 11521))
    train, val, test = chronological_split(_table(34465 + 11521 + 11521, 1), spec)
    assert (len(train), len(val), len(test)) == (34465, 11521, 11521)


def test_split_counts_too_large_error_names_minimum():
    spec = SplitSpec(fractions=None, counts=(80, 20, 20))
    with pytest.raises(DataError) as exc:
        chronological_split(_table(100), spec)
    assert "120" in str(exc.value)


def test_split_spec_validation():
    with pytest.raises(DataError):
        SplitSpec(fractions=(0.5, 0.2, 0.2))
    with pytest.raises(DataError):
        SplitSpec(fractions=None, counts=None)
    with pytest.raises(DataError):
        SplitSpec(fractions=(0.7, 0.1, 0.2), counts=(1, 1, 1))


def test_splits_share_no_timestep():
    table = _table(100)
    train, val, test = chronological_split(table, SplitSpec())
    seen = set()
    for seg in (train, val, test):
        for row in seg.values[:, 0]:
            assert row not in seen
            seen.add(row)


# -- windows -------------------------------------------------------------------


def test_window_count_len200():
    assert len(windows(_table(200), T=96, S=96, stride=1)) == 9


def test_window_exact_fit():
    ws = windows(_table(192), T=96, S=96)
    assert len(ws) == 1
    assert ws[0].origin_index == 0


def test_window_horizon_starts_at_T():
    table = _table(50, 1)
    ws = windows(table, T=20, S=10)
    w = ws[0]
    np.testing.assert_array_equal(w.horizon[0], table.values[20])
    assert w.lookback.shape == (20, 1) and w.horizon.shape == (10, 1)


def test_window_stride_and_order():
    ws = windows(_table(60, 1), T=16, S=8, stride=4)
    assert [w.origin_index for w in ws] == [0, 4, 8, 12, 16, 20, 24, 28, 32, 36]


def test_window_validation():
    with pytest.raises(DataError):
        windows(_table(100), T=0, S=5)
    with pytest.raises(DataError):
        windows(_table(100), T=5, S=-1)
    with pytest.raises(DataError) as exc:
        windows(_table(10), T=8, S=8)
    assert "16" in str(exc.value)


def test_windowing_is_pure():
    table = _table(64)
    a = windows(table, T=16, S=8, stride=2)
    b = windows(table, T=16, S=8, stride=2)
    assert len(a) == len(b)
    for wa, wb in zip(a, b):
        np.testing.assert_array_equal(wa.lookback, wb.lookback)
        assert wa.origin_index == wb.origin_index


# -- synth_multiperiodic ----------------------------------------------------------


def test_synth_noiseless_exactly_periodic():
    table = synth_multiperiodic(240, 2, periods=[24], amplitudes=[1.0], seed=5)
    x = table.values
    np.testing.assert_allclose(x[:-24], x[24:], atol=1e-9)


def test_synth_pure_ramp():
    table = synth_multiperiodic(50, 1, periods=[10], amplitudes=[0.0], trend_slope=0.5, seed=1)
    np.testing.assert_allclose(table.values[:, 0], 0.5 * np.arange(50), atol=1e-12)


def test_synth_seed_determinism():
    a = synth_multiperiodic(100, 3, [24, 12], [1.0, 0.5], noise_sd=0.2, seed=42)
    b = synth_multiperiodic(100, 3, [24, 12], [1.0, 0.5], noise_sd=0.2, seed=42)
    assert np.array_equal(a.values, b.values)
    c = synth_multiperiodic(100, 3, [24, 12], [1.0, 0.5], noise_sd=0.2, seed=43)
    assert not np.array_equal(a.values, c.values)


def test_synth_validation():
    with pytest.raises(DataError):
        synth_multiperiodic(100, 2, [24], [1.0, 2.0])
    with pytest.raises(DataError):
        synth_multiperiodic(100, 2, [-5], [1.0])
