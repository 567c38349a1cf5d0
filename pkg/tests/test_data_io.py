from __future__ import annotations

import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from gazegate.core import EventLabel
from gazegate.data_io import (
    HEADER,
    format_real,
    load_dataset,
    read_recording,
    recording_text,
    write_dataset,
    write_recording,
)
from gazegate.errors import DomainError, ManifestError, NonMonotoneTimestamps, ParseError

CODES = [int(c) for c in EventLabel]


def write_text(path, text):
    path.write_bytes(text.encode("utf-8"))
    return path


class TestRecording:
    def test_two_rows(self, tmp_path):
        p = write_text(tmp_path / "r.csv", f"{HEADER}\n0.0,10.5,90.0,F\n10.0,11.0,90.5,S\n")
        s = read_recording(p)
        assert len(s) == 2 and s.sampling_rate_hz == 100.0
        assert s.e.tolist() == [int(EventLabel.FIXATION), int(EventLabel.SACCADE)]

    def test_domain_error_names_row(self, tmp_path):
        p = write_text(tmp_path / "r.csv", f"{HEADER}\n0.0,10.0,90.0,F\n10.0,400.0,90.0,F\n")
        with pytest.raises(DomainError) as exc:
            read_recording(p)
        assert exc.value.line == 3 and "line 3" in str(exc.value)

    def test_non_monotone(self, tmp_path):
        p = write_text(tmp_path / "r.csv", f"{HEADER}\n5.0,10.0,90.0,F\n1.0,10.0,90.0,F\n")
        with pytest.raises(NonMonotoneTimestamps) as exc:
            read_recording(p)
        assert exc.value.line == 3

    @pytest.mark.parametrize(
        "body",
        ["0.0,1e2,90.0,F", "0.0,10.0,90.0,X", "0.0,10.0,90.0", "0.0, 10.0,90.0,F", "0.0,10.0,90.0,F "],
    )
    def test_parse_errors(self, tmp_path, body):
        with pytest.raises(ParseError):
            read_recording(write_text(tmp_path / "r.csv", f"{HEADER}\n{body}\n"))

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError):
            read_recording(write_text(tmp_path / "r.csv", "t,x,y,e\n"))

    def test_empty_series_is_header_only(self, tmp_path):
        p = tmp_path / "e.csv"
        write_recording(make_series([], []), p)
        assert p.read_bytes() == (HEADER + "\n").encode()
        assert len(read_recording(p, 100.0)) == 0

    def test_float_formatting(self):
        assert format_real(0.1875) == "0.1875"
        assert format_real(100.0) == "100.0"
        assert format_real(1e-7) == "0.0000001"
        assert "e" not in format_real(1.5e20)

    def test_label_roundtrip(self, tmp_path):
        s = make_series([1, 2, 3, 4], [5, 6, 7, 8], e=CODES)
        p = tmp_path / "l.csv"
        write_recording(s, p)
        assert p.read_text().splitlines()[1:] == [
            f"{format_real(t)},{format_real(x)},{format_real(y)},{c}"
            for t, x, y, c in zip(s.t, s.x, s.y, ["F", "S", "SP", "U"])
        ]
        assert read_recording(p, 100.0).e.tolist() == CODES

    def test_irregular_gap_warns(self, tmp_path, caplog):
        p = write_text(tmp_path / "g.csv", f"{HEADER}\n0.0,1.0,1.0,F\n10.0,1.0,1.0,F\n100.0,1.0,1.0,F\n")
        with caplog.at_level(logging.WARNING):
            read_recording(p, 100.0)
        assert "gap" in caplog.text

    @given(
        st.lists(
            st.tuples(st.floats(0, 360, exclude_max=True), st.floats(0, 180, exclude_max=True), st.sampled_from(CODES)),
            max_size=40,
        ),
        st.floats(1.0, 2000.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_is_identity(self, tmp_path_factory, rows, rate):
        s = make_series([r[0] for r in rows], [r[1] for r in rows], e=[r[2] for r in rows], rate=rate)
        p = tmp_path_factory.mktemp("rt") / "r.csv"
        write_recording(s, p)
        back = read_recording(p, rate, "s", "img")
        assert back == s
        assert recording_text(back) == p.read_text()


class TestDataset:
    @pytest.fixture
    def written(self, tmp_path, small_dataset):
        write_dataset(small_dataset, tmp_path)
        return tmp_path

    def test_roundtrip(self, written, small_dataset, caplog):
        with caplog.at_level(logging.WARNING):
            back = load_dataset(written / "manifest.json")
        assert back == small_dataset
        assert caplog.text == ""

    def test_rewrite_is_byte_identical(self, written, small_dataset, tmp_path_factory):
        other = tmp_path_factory.mktemp("again")
        write_dataset(load_dataset(written), other)
        for f in written.rglob("*"):
            if f.is_file():
                assert (other / f.relative_to(written)).read_bytes() == f.read_bytes()

    def _edit(self, written, fn):
        mpath = written / "manifest.json"
        doc = json.loads(mpath.read_text())
        fn(doc)
        mpath.write_text(json.dumps(doc))

    def test_missing_file(self, written):
        (written / "recordings/s01/img01.csv").unlink()
        with pytest.raises(ManifestError) as exc:
            load_dataset(written)
        assert any("recordings/s01/img01.csv" in v for v in exc.value.violations)

    def test_duplicate_recording(self, written):
        def dup(doc):
            rec = dict(doc["recordings"][0])
            rec["path"] = "recordings/s01/img02.csv"
            doc["recordings"].append(rec)

        self._edit(written, dup)
        with pytest.raises(ManifestError) as exc:
            load_dataset(written)
        assert any("duplicate recording" in v for v in exc.value.violations)

    def test_violations_aggregated(self, written):
        def break_two(doc):
            doc["recordings"][0]["subject_id"] = "nobody"
            doc["recordings"][1]["stimulus_id"] = "nothing"

        self._edit(written, break_two)
        with pytest.raises(ManifestError) as exc:
            load_dataset(written)
        assert len(exc.value.violations) >= 2

    def test_bad_version(self, written):
        self._edit(written, lambda d: d.update(format_version=2))
        with pytest.raises(ManifestError):
            load_dataset(written)

    def test_order_independent(self, written, small_dataset):
        order = np.random.default_rng(0).permutation

        def shuffle(doc):
            recs = doc["recordings"]
            doc["recordings"] = [recs[i] for i in order(len(recs))]

        self._edit(written, shuffle)
        back = load_dataset(written)
        assert back == small_dataset
        assert list(back.recordings) == sorted(back.recordings)
