import json

import pytest

from tokensieve import QuadrantThresholds, full_mask, q3_topk, score_batch, softor_topk
from tokensieve.errors import DimensionError
from tokensieve.report import (
    TOKEN_COLUMNS,
    emit_report,
    render_mask,
    render_summary,
    render_token_csv,
    write_mask,
)
from tokensieve.taxonomy import attach_quadrants, quadrant_histogram

from conftest import random_records


def _scored(rng, n=8, vocab=5):
    batch = random_records(rng, n, vocab)
    metrics = score_batch(batch)
    th = QuadrantThresholds.batch_median()
    return attach_quadrants(metrics, th), quadrant_histogram(metrics, th)


class TestTokenCsv:
    def test_no_masks_means_no_strategy_columns(self, rng):
        metrics, _ = _scored(rng)
        text = render_token_csv(metrics, [])
        header = text.splitlines()[0]
        assert header == ",".join(TOKEN_COLUMNS)
        assert len(text.splitlines()) == 9

    def test_singleton_batch_row(self, rng):
        metrics, _ = _scored(rng, n=1)
        lines = render_token_csv(metrics, []).splitlines()
        assert len(lines) == 2
        fields = dict(zip(TOKEN_COLUMNS, lines[1].split(",")))
        assert float(fields["softor"]) == 0.0

    def test_mask_columns_flag_retained_rows(self, rng):
        metrics, _ = _scored(rng)
        mask = softor_topk(metrics, 0.25)
        text = render_token_csv(metrics, [mask])
        lines = text.splitlines()
        assert lines[0].endswith(",selected_softor-topk")
        flags = [int(line.split(",")[-1]) for line in lines[1:]]
        assert [i for i, f in enumerate(flags) if f == 1] == list(mask.retained)

    def test_duplicate_strategy_columns_get_suffix(self, rng):
        metrics, _ = _scored(rng)
        a = softor_topk(metrics, 0.25)
        b = softor_topk(metrics, 0.5)
        header = render_token_csv(metrics, [a, b]).splitlines()[0]
        assert header.endswith("selected_softor-topk,selected_softor-topk_2")

    def test_mask_batch_size_mismatch(self, rng):
        metrics, _ = _scored(rng, n=8)
        with pytest.raises(DimensionError):
            render_token_csv(metrics, [full_mask(9)])


class TestSummary:
    def test_fixed_key_order_and_fields(self, rng):
        metrics, hist = _scored(rng)
        mask = q3_topk(metrics, 0.5)
        obj = json.loads(render_summary(hist, [mask], teacher_entropy=(0.5, 0.1)))
        assert list(obj) == [
            "tokens",
            "quadrant_counts",
            "quadrant_fractions",
            "thresholds",
            "teacher_entropy_mean",
            "teacher_entropy_std",
            "masks",
        ]
        assert obj["tokens"] == 8
        assert obj["masks"][0]["strategy"] == "q3-topk"
        assert obj["masks"][0]["retained"] == 4
        assert abs(sum(obj["quadrant_fractions"].values()) - 1.0) <= 1e-12


class TestEmit:
    def test_writes_both_files(self, rng, tmp_path):
        metrics, hist = _scored(rng)
        paths = emit_report(metrics, hist, [], tmp_path)
        assert paths.tokens_csv.exists() and paths.summary_json.exists()
        assert paths.tokens_csv.name == "report.tokens.csv"

    def test_deterministic_bytes(self, rng, tmp_path):
        metrics, hist = _scored(rng)
        p1 = emit_report(metrics, hist, [], tmp_path / "a")
        p2 = emit_report(metrics, hist, [], tmp_path / "b")
        assert p1.tokens_csv.read_bytes() == p2.tokens_csv.read_bytes()
        assert p1.summary_json.read_bytes() == p2.summary_json.read_bytes()


class TestMaskFile:
    def test_round_trip_fields(self, rng, tmp_path):
        metrics, _ = _scored(rng)
        mask = softor_topk(metrics, 0.5)
        path = write_mask(mask, tmp_path / "mask.json")
        obj = json.loads(path.read_text())
        assert obj["strategy"] == "softor-topk"
        assert obj["retained"] == list(mask.retained)
        assert obj["total"] == mask.total
        assert obj["seed"] is None

    def test_seed_echoed(self, rng):
        from tokensieve import entropy_sample

        metrics, _ = _scored(rng)
        mask = entropy_sample(metrics, 0.5, 424242)
        assert json.loads(render_mask(mask))["seed"] == 424242
