import io
import tarfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densefeed import (
    Sample,
    ShardFormatError,
    StageError,
    StorageError,
    ValidationError,
    batch_stage,
    compose,
    filter_stage,
    load_shard_set,
    map_stage,
    stream_samples,
    write_shards,
)


def make_samples(n, payload=lambda i: bytes([i % 256])):
    return [Sample(f"k{i:05d}", {"bin": payload(i), "json": b"{}"}) for i in range(n)]


class TestWriteShards:
    def test_ceiling_split(self, tmp_path):
        shard_set = write_shards(make_samples(5), tmp_path, 2)
        assert shard_set.shard_counts == [2, 2, 1]
        assert [p.name for p in shard_set.shard_paths] == [
            "shard-000000.tar", "shard-000001.tar", "shard-000002.tar"]

    def test_entries_adjacent_and_named(self, tmp_path):
        write_shards([Sample("a", {"bin": b"xy", "json": b"{}"}),
                      Sample("b", {"bin": b"z"})], tmp_path, 10)
        with tarfile.open(tmp_path / "shard-000000.tar") as tar:
            names = tar.getnames()
        assert names == ["a.bin", "a.json", "b.bin"]

    def test_duplicate_key_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            write_shards([Sample("a", {"x": b"1"}), Sample("a", {"x": b"2"})], tmp_path, 10)

    def test_empty_sample_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            write_shards([Sample("a", {})], tmp_path, 10)

    def test_dotted_key_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            write_shards([Sample("a.b", {"x": b"1"})], tmp_path, 10)

    def test_manifest_round_trip(self, tmp_path):
        written = write_shards(make_samples(7), tmp_path, 3)
        loaded = load_shard_set(tmp_path)
        assert loaded.shard_counts == written.shard_counts
        assert loaded.total_samples == 7
        assert loaded.samples_per_shard == 3


class TestStreamSamples:
    def test_ordered_when_unbuffered(self, tmp_path):
        samples = make_samples(9)
        shard_set = write_shards(samples, tmp_path, 4)
        got = list(stream_samples(shard_set, 0, 0))
        assert [s.key for s in got] == [s.key for s in samples]
        assert got[3].parts == samples[3].parts

    def test_full_buffer_is_seeded_permutation(self, tmp_path):
        samples = make_samples(20)
        shard_set = write_shards(samples, tmp_path, 6)
        a = [s.key for s in stream_samples(shard_set, 20, seed=5)]
        b = [s.key for s in stream_samples(shard_set, 20, seed=5)]
        c = [s.key for s in stream_samples(shard_set, 20, seed=6)]
        assert a == b
        assert sorted(a) == sorted(s.key for s in samples)
        assert a != c  # overwhelmingly likely for 20 samples

    @settings(max_examples=25, deadline=None)
    @given(buffer=st.integers(0, 120), seed=st.integers(0, 2**31))
    def test_exactly_once_any_buffer(self, tmp_path_factory, buffer, seed):
        tmp_path = tmp_path_factory.mktemp("shards")
        samples = make_samples(100)
        shard_set = write_shards(samples, tmp_path, 8)
        got = [s.key for s in stream_samples(shard_set, buffer, seed)]
        assert sorted(got) == sorted(s.key for s in samples)

    def test_round_trip_multiset(self, tmp_path):
        rng = np.random.default_rng(8)
        samples = [Sample(f"s{i:04d}", {"bin": rng.bytes(rng.integers(0, 64))})
                   for i in range(1000)]
        shard_set = write_shards(samples, tmp_path, 64)
        got = sorted((s.key, s.parts["bin"]) for s in stream_samples(shard_set, 16, 1))
        assert got == sorted((s.key, s.parts["bin"]) for s in samples)

    def test_interleaved_keys_rejected(self, tmp_path):
        path = tmp_path / "shard-000000.tar"
        with tarfile.open(path, "w", format=tarfile.USTAR_FORMAT) as tar:
            for name in ("a.x", "b.x", "a.y"):
                info = tarfile.TarInfo(name)
                info.size = 1
                tar.addfile(info, io.BytesIO(b"0"))
        (tmp_path / "manifest.json").write_text(
            '{"version": 1, "total_samples": 2, "samples_per_shard": 10,'
            ' "shards": [{"path": "shard-000000.tar", "count": 2}]}')
        shard_set = load_shard_set(tmp_path)
        with pytest.raises(ShardFormatError):
            list(stream_samples(shard_set, 0, 0))

    def test_missing_shard(self, tmp_path):
        shard_set = write_shards(make_samples(3), tmp_path, 2)
        shard_set.shard_paths[1].unlink()
        with pytest.raises(StorageError):
            list(stream_samples(shard_set, 0, 0))

    def test_worker_subsets_cover_exactly_once(self, tmp_path):
        samples = make_samples(30)
        shard_set = write_shards(samples, tmp_path, 5)
        keys = []
        for w in range(3):
            keys += [s.key for s in stream_samples(shard_set.subset(w, 3), 4, seed=w)]
        assert sorted(keys) == sorted(s.key for s in samples)


class TestCompose:
    def test_identity_map(self):
        samples = make_samples(4)
        assert list(compose(samples, [map_stage(lambda s: s)])) == samples

    def test_filter(self):
        samples = [Sample(k, {"x": b""}) for k in ("a", "b", "c")]
        got = compose(samples, [filter_stage(lambda s: s.key != "a")])
        assert [s.key for s in got] == ["b", "c"]

    def test_map_then_batch_windows(self):
        samples = make_samples(7)
        got = list(compose(samples, [map_stage(lambda s: s.key), batch_stage(3)]))
        assert [len(w) for w in got] == [3, 3, 1]
        assert got[0] == ["k00000", "k00001", "k00002"]

    def test_lazy_evaluation(self):
        pulled = []

        def source():
            for s in make_samples(100):
                pulled.append(s.key)
                yield s

        it = compose(source(), [map_stage(lambda s: s.key), batch_stage(3)])
        next(it)
        assert len(pulled) == 3

    def test_stage_error_carries_stage_and_key(self):
        samples = make_samples(3)

        def bad(sample):
            if sample.key == "k00001":
                raise ValueError("nope")
            return sample

        with pytest.raises(StageError) as err:
            list(compose(samples, [map_stage(lambda s: s), map_stage(bad)]))
        assert err.value.stage_index == 1
        assert err.value.sample_key == "k00001"

    def test_collate_applied_per_window(self):
        samples = make_samples(6)
        got = list(compose(samples, [batch_stage(2, collate=lambda w: [s.key for s in w])]))
        assert got == [["k00000", "k00001"], ["k00002", "k00003"], ["k00004", "k00005"]]
