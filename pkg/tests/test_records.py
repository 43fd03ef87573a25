import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionnet import records
from ionnet.netsim import ShotRecord


class TestShotFiles:
    def test_roundtrip(self, tmp_path):
        recs = [ShotRecord(0, 5, 10.5, 0, (0, 1), None, (0, 1)), ShotRecord(1, 7, 3.25, 2, None, 0.5, (1, 1))]
        p = records.write_records(tmp_path / "r.jsonl", recs, {"kind": "srsr", "qubits": ["Alice.N", "Bob.N"]})
        head, back = records.read_records(p)
        assert back == recs
        assert head["schema"] == records.SHOT_SCHEMA and head["qubits"] == ["Alice.N", "Bob.N"]

    def test_empty(self, tmp_path):
        p = records.write_records(tmp_path / "r.jsonl", [], {"kind": "ghz4"})
        assert records.read_records(p)[1] == []

    def test_wrong_schema(self, tmp_path):
        p = tmp_path / "r.jsonl"
        p.write_text('{"schema": "other"}\n')
        with pytest.raises(records.RecordFormatError):
            records.read_records(p)

    def test_blank_file(self, tmp_path):
        p = tmp_path / "r.jsonl"
        p.write_text("")
        with pytest.raises(records.RecordFormatError):
            records.read_records(p)


class TestMatrixDump:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 16]))
    def test_roundtrip_exact(self, seed, d):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        with tempfile.TemporaryDirectory() as tmp:
            p = records.write_matrix(Path(tmp) / "m.txt", m, "superoperator")
            head, back = records.read_matrix(p)
        assert np.array_equal(back, m)
        assert head["vectorization"] == "column" and head["order"] == "row-major"

    def test_shape_mismatch(self, tmp_path):
        p = records.write_matrix(tmp_path / "m.txt", np.eye(2), "density")
        p.write_text(p.read_text().replace('"shape": [2, 2]', '"shape": [4, 4]'))
        with pytest.raises(records.RecordFormatError):
            records.read_matrix(p)
