"""Line-delimited token-record files.

Layout: a JSON header line, then one JSON object per token::

    {"format": "token-records", "version": 1, "vocab_size": 8, "encoding": "probs"}
    {"position": 0, "sampled_token": 3, "student": [...], "teacher": [...]}

``encoding`` declares how the student/teacher arrays are stored:
``probs`` (validated to sum to 1 within 1e-6), ``logprobs``
(exp-normalized on read), or ``logits`` (softmaxed on read).  Records may
carry an optional ``rollout_id`` used to group normalisation scopes.
Probabilities are written as shortest round-trip decimal text (at most
17 significant digits), so emit -> parse reproduces every double bit for
bit.  Parsing is a single pass over the input lines; emission writes to
a temp file and renames into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .dist import PROB_SUM_TOL, ProbDist, TokenRecord, softmax
from .errors import (
    InvalidInputError,
    OutputError,
    ParseError,
    RecordValidationError,
    SchemaError,
)

FORMAT_NAME = "token-records"
FORMAT_VERSION = 1

ENCODING_PROBS = "probs"
ENCODING_LOGPROBS = "logprobs"
ENCODING_LOGITS = "logits"
ENCODINGS = (ENCODING_PROBS, ENCODING_LOGPROBS, ENCODING_LOGITS)


def _parse_header(line: str) -> tuple[int, str]:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"header is not valid JSON: {exc}", line=1) from exc
    if not isinstance(header, dict):
        raise SchemaError("header must be a JSON object", line=1)
    if header.get("format") != FORMAT_NAME:
        raise SchemaError(f"unknown format {header.get('format')!r}", line=1)
    if header.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported version {header.get('version')!r}", line=1)
    vocab = header.get("vocab_size")
    if not isinstance(vocab, int) or vocab < 2:
        raise SchemaError(f"vocab_size must be an integer >= 2, got {vocab!r}", line=1)
    encoding = header.get("encoding")
    if encoding not in ENCODINGS:
        raise SchemaError(f"encoding must be one of {ENCODINGS}, got {encoding!r}", line=1)
    return vocab, encoding


def _vector_to_dist(values, encoding: str, vocab: int, line: int, name: str) -> ProbDist:
    if not isinstance(values, list):
        raise ParseError(f"{name} must be an array", line=line)
    if len(values) != vocab:
        raise SchemaError(
            f"{name} has {len(values)} entries, header declares vocab_size {vocab}",
            line=line,
        )
    arr = np.asarray(values, dtype=np.float64)
    if encoding == ENCODING_PROBS:
        if not np.all(np.isfinite(arr)):
            raise RecordValidationError(f"{name} contains non-finite entries", line=line)
        total = float(arr.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise RecordValidationError(
                f"{name} probabilities sum to {total!r}, expected 1 within {PROB_SUM_TOL}",
                line=line,
            )
        try:
            return ProbDist(arr)
        except InvalidInputError as exc:
            raise RecordValidationError(f"{name}: {exc}", line=line) from exc
    # logprobs and logits both exp-normalize with max subtraction.
    try:
        return softmax(arr)
    except InvalidInputError as exc:
        raise RecordValidationError(f"{name}: {exc}", line=line) from exc


def _record_from_obj(obj, encoding: str, vocab: int, line: int) -> TokenRecord:
    if not isinstance(obj, dict):
        raise ParseError("record line must be a JSON object", line=line)
    missing = [k for k in ("position", "sampled_token", "student", "teacher") if k not in obj]
    if missing:
        raise ParseError(f"record is missing fields {missing}", line=line)
    position = obj["position"]
    sampled = obj["sampled_token"]
    if not isinstance(position, int) or not isinstance(sampled, int):
        raise ParseError("position and sampled_token must be integers", line=line)
    rollout_id = obj.get("rollout_id")
    if rollout_id is not None and not isinstance(rollout_id, (str, int)):
        raise ParseError("rollout_id must be a string or integer", line=line)
    student = _vector_to_dist(obj["student"], encoding, vocab, line, "student")
    teacher = _vector_to_dist(obj["teacher"], encoding, vocab, line, "teacher")
    try:
        return TokenRecord(
            position=position,
            student=student,
            teacher=teacher,
            sampled_token=sampled,
            rollout_id=None if rollout_id is None else str(rollout_id),
        )
    except (InvalidInputError,) as exc:
        raise RecordValidationError(str(exc), line=line) from exc


def parse_record_lines(lines: Iterable[str]) -> Iterator[TokenRecord]:
    """Parse records from an iterable of lines, one pass, lazily."""
    it = iter(lines)
    try:
        first = next(it)
    except StopIteration:
        raise SchemaError("empty input: missing header line", line=1) from None
    vocab, encoding = _parse_header(first)
    for n, raw in enumerate(it, start=2):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line=n) from exc
        yield _record_from_obj(obj, encoding, vocab, n)


def parse_records(source: str | Path | IO[str]) -> list[TokenRecord]:
    """Read and validate a record file (path or open text stream)."""
    if isinstance(source, (str, Path)):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                return list(parse_record_lines(fh))
        except OSError as exc:
            raise OutputError(f"cannot read {source}: {exc}") from exc
    return list(parse_record_lines(source))


def record_to_line(rec: TokenRecord) -> str:
    """Serialize one record (probs encoding) as a JSON line."""
    obj: dict = {"position": rec.position}
    if rec.rollout_id is not None:
        obj["rollout_id"] = rec.rollout_id
    obj["sampled_token"] = rec.sampled_token
    obj["student"] = rec.student.probs.tolist()
    obj["teacher"] = rec.teacher.probs.tolist()
    return json.dumps(obj)


def header_line(vocab_size: int, encoding: str = ENCODING_PROBS) -> str:
    if encoding not in ENCODINGS:
        raise InvalidInputError(f"encoding must be one of {ENCODINGS}")
    return json.dumps(
        {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "vocab_size": vocab_size,
            "encoding": encoding,
        }
    )


def write_atomic(path: str | Path, text: str) -> None:
    """Write text to ``path`` via a temp file and rename, so readers never
    observe a partial file."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_records(records: list[TokenRecord], dest: str | Path) -> None:
    """Write records (probs encoding) to ``dest``; bit-stable round trip."""
    if not records:
        raise InvalidInputError("refusing to write an empty record file")
    vocab = records[0].vocab_size
    lines = [header_line(vocab)]
    for rec in records:
        if rec.vocab_size != vocab:
            raise SchemaError(
                f"record at position {rec.position} has vocab {rec.vocab_size}, expected {vocab}"
            )
        lines.append(record_to_line(rec))
    write_atomic(dest, "\n".join(lines) + "\n")
