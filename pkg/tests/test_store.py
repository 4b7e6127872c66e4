import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densefeed import (
    DimensionError,
    IngestParseError,
    StoreCorruptionError,
    StoreVersionError,
    ValidationError,
    build_store,
    open_store,
)
from conftest import build_random_store, random_sparse_entries, write_coordinate_file


class TestBuildStore:
    def test_hand_constructed_csr(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 3, 4,
                                    [(0, 1, 2.0), (0, 3, 1.0), (2, 0, 5.0)])
        build_store(mtx, tmp_path / "s")
        store = open_store(tmp_path / "s")
        assert list(store.row_ptr) == [0, 2, 2, 3]
        assert list(store.col_idx) == [1, 3, 0]
        assert list(store.values) == [2.0, 1.0, 5.0]

    def test_empty_matrix(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 2, 2, [])
        report = build_store(mtx, tmp_path / "s")
        store = open_store(tmp_path / "s")
        assert list(store.row_ptr) == [0, 0, 0]
        assert store.nnz == 0
        assert report.entries_in == 0

    def test_duplicates_summed(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 1, 1, [(0, 0, 1.0), (0, 0, 2.0)])
        report = build_store(mtx, tmp_path / "s")
        store = open_store(tmp_path / "s")
        assert store.nnz == 1
        assert store.get_row(0).vals[0] == 3.0
        assert report.duplicates_merged == 1

    def test_explicit_zeros_dropped(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 2, 2, [(0, 0, 0.0), (1, 1, 4.0)])
        report = build_store(mtx, tmp_path / "s")
        assert report.zeros_dropped == 1
        assert open_store(tmp_path / "s").nnz == 1

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("2 2 2\n1 1 1.0\n1 oops 2.0\n")
        with pytest.raises(IngestParseError, match="line 3"):
            build_store(path, tmp_path / "s")

    def test_index_out_of_range_reports_line(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("2 2 1\n3 1 1.0\n")
        with pytest.raises(IngestParseError, match="line 2"):
            build_store(path, tmp_path / "s")

    def test_entry_count_mismatch(self, tmp_path):
        path = tmp_path / "m.mtx"
        path.write_text("2 2 3\n1 1 1.0\n")
        with pytest.raises(IngestParseError):
            build_store(path, tmp_path / "s")

    def test_metadata_row_count_mismatch(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 3, 3, [(0, 0, 1.0)])
        meta = tmp_path / "meta.tsv"
        meta.write_text("a\n1\n2\n")
        with pytest.raises(DimensionError):
            build_store(mtx, tmp_path / "s", metadata_path=meta)

    def test_refuses_nonempty_out_dir(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 1, 1, [(0, 0, 1.0)])
        out = tmp_path / "s"
        out.mkdir()
        (out / "junk").write_text("x")
        with pytest.raises(ValidationError):
            build_store(mtx, out)
        build_store(mtx, out, overwrite=True)
        assert open_store(out).nnz == 1


class TestOpenStore:
    def test_round_trip_rows(self, small_store):
        row = small_store.get_row(0)
        assert list(row.cols) == [1, 3]
        assert list(row.vals) == [2.0, 1.0]
        assert len(small_store.get_row(1)) == 0
        assert list(small_store.get_row(2).cols) == [0]
        assert list(small_store.get_row(2).vals) == [5.0]

    def test_row_out_of_range(self, small_store):
        with pytest.raises(IndexError):
            small_store.get_row(3)
        with pytest.raises(IndexError):
            small_store.get_row(-1)

    def test_size_mismatch_is_corruption(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 2, 2, [(0, 0, 1.0), (1, 1, 2.0)])
        build_store(mtx, tmp_path / "s")
        header = json.loads((tmp_path / "s" / "header.json").read_text())
        header["nnz"] = 10
        (tmp_path / "s" / "header.json").write_text(json.dumps(header))
        with pytest.raises(StoreCorruptionError):
            open_store(tmp_path / "s")

    def test_unsupported_version(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 1, 1, [(0, 0, 1.0)])
        build_store(mtx, tmp_path / "s")
        header = json.loads((tmp_path / "s" / "header.json").read_text())
        header["format_version"] = 99
        (tmp_path / "s" / "header.json").write_text(json.dumps(header))
        with pytest.raises(StoreVersionError):
            open_store(tmp_path / "s")

    def test_missing_file_is_corruption(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 1, 1, [(0, 0, 1.0)])
        build_store(mtx, tmp_path / "s")
        (tmp_path / "s" / "values.bin").unlink()
        with pytest.raises(StoreCorruptionError):
            open_store(tmp_path / "s")

    def test_deep_validate_catches_bad_columns(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 1, 4, [(0, 1, 1.0), (0, 2, 2.0)])
        build_store(mtx, tmp_path / "s")
        bad = np.array([2, 1], dtype="<u8")
        bad.tofile(tmp_path / "s" / "colidx.bin")
        store = open_store(tmp_path / "s")
        with pytest.raises(StoreCorruptionError):
            store.deep_validate()


class TestMetadata:
    def test_reads_are_type_faithful(self, small_store):
        assert small_store.get_metadata("cell_type", 0) == "T"
        assert small_store.get_metadata("cell_type", 2) == "NK"
        value = small_store.get_metadata("score", 1)
        assert isinstance(value, float) and value == 1.5

    def test_unknown_column(self, small_store):
        with pytest.raises(KeyError):
            small_store.get_metadata("foo", 0)

    def test_int_column_inference(self, tmp_path):
        mtx = write_coordinate_file(tmp_path / "m.mtx", 2, 2, [(0, 0, 1.0)])
        meta = tmp_path / "meta.tsv"
        meta.write_text("count\n7\n9\n")
        build_store(mtx, tmp_path / "s", metadata_path=meta)
        store = open_store(tmp_path / "s")
        value = store.get_metadata("count", 1)
        assert isinstance(value, int) and value == 9

    def test_numeric_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        floats = rng.standard_normal(1000) * rng.uniform(1e-6, 1e6, 1000)
        mtx = write_coordinate_file(tmp_path / "m.mtx", 1000, 2, [(0, 0, 1.0)])
        meta = tmp_path / "meta.tsv"
        meta.write_text("x\n" + "\n".join(repr(float(v)) for v in floats) + "\n")
        build_store(mtx, tmp_path / "s", metadata_path=meta)
        store = open_store(tmp_path / "s")
        got = np.array([store.get_metadata("x", i) for i in range(1000)])
        assert np.array_equal(got, floats)


class TestRoundTripProperty:
    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_matches_scipy_csr_oracle(self, tmp_path_factory, data):
        import scipy.sparse as sp

        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        n_rows = data.draw(st.integers(1, 60))
        n_cols = data.draw(st.integers(1, 80))
        density = data.draw(st.floats(0.0, 0.05))
        tmp_path = tmp_path_factory.mktemp("rt")
        store, dense = build_random_store(tmp_path, rng, n_rows, n_cols, density)
        oracle = sp.csr_matrix(dense)
        assert np.array_equal(np.asarray(store.row_ptr, dtype=np.int64), oracle.indptr)
        for r in range(n_rows):
            row = store.get_row(r)
            lo, hi = oracle.indptr[r], oracle.indptr[r + 1]
            assert np.array_equal(np.asarray(row.cols, dtype=np.int64), oracle.indices[lo:hi])
            assert np.array_equal(np.asarray(row.vals), oracle.data[lo:hi])
        # structural invariants
        rp = np.asarray(store.row_ptr, dtype=np.int64)
        assert np.all(np.diff(rp) >= 0)
        store.deep_validate()
