import numpy as np
import pytest

from densefeed import build_store, open_store


def write_coordinate_file(path, n_rows, n_cols, entries):
    """Write 0-based (row, col, value) entries as a 1-based coordinate file."""
    lines = ["% generated by test", f"{n_rows} {n_cols} {len(entries)}"]
    for r, c, v in entries:
        lines.append(f"{r + 1} {c + 1} {v!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def random_sparse_entries(rng, n_rows, n_cols, density):
    """Random duplicate-free entry list plus the dense oracle matrix."""
    nnz = int(n_rows * n_cols * density)
    dense = np.zeros((n_rows, n_cols), dtype=np.float32)
    if nnz:
        flat = rng.choice(n_rows * n_cols, size=nnz, replace=False)
        vals = rng.uniform(0.5, 10.0, size=nnz).astype(np.float32)
        dense[np.unravel_index(flat, dense.shape)] = vals
    rows, cols = np.nonzero(dense)
    entries = [(int(r), int(c), float(dense[r, c])) for r, c in zip(rows, cols)]
    return entries, dense


@pytest.fixture
def small_store(tmp_path):
    """3x4 store with the entries {(0,1)=2.0, (0,3)=1.0, (2,0)=5.0} and metadata."""
    mtx = write_coordinate_file(tmp_path / "m.mtx", 3, 4,
                                [(0, 1, 2.0), (0, 3, 1.0), (2, 0, 5.0)])
    meta = tmp_path / "meta.tsv"
    meta.write_text("cell_type\tscore\nT\t0.5\nB\t1.5\nNK\t2.5\n")
    build_store(mtx, tmp_path / "store", metadata_path=meta)
    return open_store(tmp_path / "store")


def build_random_store(tmp_path, rng, n_rows, n_cols, density, name="store"):
    entries, dense = random_sparse_entries(rng, n_rows, n_cols, density)
    mtx = write_coordinate_file(tmp_path / f"{name}.mtx", n_rows, n_cols, entries)
    build_store(mtx, tmp_path / name)
    return open_store(tmp_path / name), dense
