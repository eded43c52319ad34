import io
import json
import tracemalloc

import numpy as np
import pytest

from tokensieve import ProbDist, TokenRecord
from tokensieve.errors import (
    OutputError,
    ParseError,
    RecordValidationError,
    SchemaError,
)
from tokensieve.records import (
    emit_records,
    header_line,
    parse_record_lines,
    parse_records,
    record_to_line,
)

from conftest import random_records


def _file_text(records):
    return header_line(records[0].vocab_size) + "\n" + "\n".join(
        record_to_line(r) for r in records
    ) + "\n"


class TestParse:
    def test_single_uniform_record(self):
        text = "\n".join(
            [
                header_line(4),
                json.dumps(
                    {
                        "position": 0,
                        "sampled_token": 1,
                        "student": [0.25, 0.25, 0.25, 0.25],
                        "teacher": [0.25, 0.25, 0.25, 0.25],
                    }
                ),
            ]
        )
        [rec] = parse_records(io.StringIO(text))
        assert rec.position == 0
        np.testing.assert_array_equal(rec.student.probs, [0.25] * 4)

    def test_bad_sum_names_line(self):
        text = "\n".join(
            [
                header_line(2),
                json.dumps({"position": 0, "sampled_token": 0, "student": [0.5, 0.5], "teacher": [0.5, 0.5]}),
                json.dumps({"position": 1, "sampled_token": 0, "student": [0.5, 0.4], "teacher": [0.5, 0.5]}),
            ]
        )
        with pytest.raises(RecordValidationError, match="line 3"):
            parse_records(io.StringIO(text))

    def test_malformed_json_names_line(self):
        text = header_line(2) + "\n{not json}\n"
        with pytest.raises(ParseError, match="line 2"):
            parse_records(io.StringIO(text))

    def test_vocab_mismatch_is_schema_error(self):
        text = "\n".join(
            [
                header_line(3),
                json.dumps({"position": 0, "sampled_token": 0, "student": [0.5, 0.5], "teacher": [0.5, 0.5]}),
            ]
        )
        with pytest.raises(SchemaError, match="line 2"):
            parse_records(io.StringIO(text))

    def test_missing_header(self):
        with pytest.raises(SchemaError):
            parse_records(io.StringIO("{}\n"))

    def test_unknown_encoding(self):
        bad = json.dumps(
            {"format": "token-records", "version": 1, "vocab_size": 2, "encoding": "sparse"}
        )
        with pytest.raises(SchemaError):
            parse_records(io.StringIO(bad + "\n"))

    def test_missing_fields(self):
        text = header_line(2) + "\n" + json.dumps({"position": 0}) + "\n"
        with pytest.raises(ParseError, match="missing fields"):
            parse_records(io.StringIO(text))

    def test_logits_encoding(self):
        text = "\n".join(
            [
                header_line(2, encoding="logits"),
                json.dumps({"position": 0, "sampled_token": 0, "student": [0.0, 0.0], "teacher": [1000.0, 1000.0]}),
            ]
        )
        [rec] = parse_records(io.StringIO(text))
        np.testing.assert_allclose(rec.student.probs, [0.5, 0.5])
        np.testing.assert_allclose(rec.teacher.probs, [0.5, 0.5])

    def test_logprobs_encoding(self, rng):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        text = "\n".join(
            [
                header_line(4, encoding="logprobs"),
                json.dumps(
                    {
                        "position": 0,
                        "sampled_token": 0,
                        "student": list(np.log(p)),
                        "teacher": list(np.log(p)),
                    }
                ),
            ]
        )
        [rec] = parse_records(io.StringIO(text))
        np.testing.assert_allclose(rec.student.probs, p, atol=1e-15)

    def test_rollout_id_preserved(self):
        text = "\n".join(
            [
                header_line(2),
                json.dumps(
                    {
                        "position": 0,
                        "rollout_id": "r7",
                        "sampled_token": 0,
                        "student": [0.5, 0.5],
                        "teacher": [0.5, 0.5],
                    }
                ),
            ]
        )
        [rec] = parse_records(io.StringIO(text))
        assert rec.rollout_id == "r7"

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OutputError):
            parse_records(tmp_path / "nope.jsonl")


class TestRoundTrip:
    def test_thousand_records_bit_identical(self, rng, tmp_path):
        records = random_records(rng, 1000, 7)
        path = tmp_path / "records.jsonl"
        emit_records(records, path)
        parsed = parse_records(path)
        assert len(parsed) == 1000
        for a, b in zip(records, parsed):
            assert a.position == b.position
            assert a.sampled_token == b.sampled_token
            np.testing.assert_array_equal(a.student.probs, b.student.probs)
            np.testing.assert_array_equal(a.teacher.probs, b.teacher.probs)

    def test_emit_is_deterministic(self, rng, tmp_path):
        records = random_records(rng, 20, 5)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        emit_records(records, p1)
        emit_records(records, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestStreaming:
    def test_consumes_a_lazy_line_iterator(self, rng):
        # The parser must not require the whole payload up front.
        records = random_records(rng, 50, 4)
        text = _file_text(records)

        def line_gen():
            yield from text.splitlines()

        out = list(parse_record_lines(line_gen()))
        assert len(out) == 50

    def test_memory_stays_proportional_to_batch(self, rng, tmp_path):
        records = random_records(rng, 4000, 8)
        path = tmp_path / "big.jsonl"
        emit_records(records, path)
        size = path.stat().st_size
        tracemalloc.start()
        parsed = parse_records(path)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert len(parsed) == 4000
        # Parsed records dominate the peak; a whole-file slurp on top of
        # that would roughly double it.  Loose ceiling: 30x file size.
        assert peak < 30 * size
