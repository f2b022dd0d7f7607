import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image

from promptgap.answers import PromptRecord
from promptgap.dataset_io import (
    DedupResult,
    dedup,
    dedup_hashes,
    dhash,
    hamming_distance,
    hash_images,
    list_images,
    read_dataset,
    record_from_json_dict,
    record_to_json_dict,
    write_dataset,
)
from promptgap.errors import DecodeFailure, SchemaViolation


def noise_image(seed, size=(64, 64)):
    rng = np.random.default_rng(seed)
    return Image.fromarray(rng.integers(0, 256, size, dtype=np.uint8), mode="L")


def perturb(image, seed, n_pixels=3):
    """Flip a handful of pixels; the hash works on an 8x8 downscale, so a
    few pixel edits land well inside the distance threshold."""
    arr = np.asarray(image).copy()
    rng = np.random.default_rng(seed)
    for _ in range(n_pixels):
        r, c = rng.integers(0, arr.shape[0]), rng.integers(0, arr.shape[1])
        arr[r, c] = 255 - arr[r, c]
    return Image.fromarray(arr, mode="L")


class TestDhash:
    def test_uniform_image_hashes_to_zero(self):
        img = Image.new("L", (32, 32), color=128)
        assert dhash(img).bits == 0

    def test_lossless_reencode_invariant(self, tmp_path):
        img = noise_image(0)
        png1, png2 = tmp_path / "a.png", tmp_path / "b.png"
        img.save(png1, optimize=False)
        img.save(png2, optimize=True, compress_level=9)
        assert dhash(png1).bits == dhash(png2).bits

    def test_accepts_bytes(self):
        img = noise_image(1)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        assert dhash(buf.getvalue()).bits == dhash(img).bits

    def test_known_gradient(self):
        # Strictly decreasing columns: every horizontal comparison is True.
        arr = np.tile(np.arange(255, 255 - 9 * 16, -16, dtype=np.uint8), (8, 1))
        img = Image.fromarray(arr, mode="L")
        assert dhash(img).bits == (1 << 64) - 1

    def test_unrelated_noise_far_apart(self):
        # Mean distance between independent 64-bit hashes is 32.
        dists = [
            hamming_distance(dhash(noise_image(2 * i)).bits,
                             dhash(noise_image(2 * i + 1)).bits)
            for i in range(50)
        ]
        assert 28 < np.mean(dists) < 36
        assert min(dists) >= 10

    def test_undecodable_raises(self):
        with pytest.raises(DecodeFailure):
            dhash(b"not an image", image_id="junk")


class TestHamming:
    def test_examples(self):
        assert hamming_distance(0, 0) == 0
        assert hamming_distance(0b1011, 0b0010) == 2
        assert hamming_distance(0, (1 << 64) - 1) == 64

    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1),
           st.integers(0, 2**64 - 1))
    def test_metric_properties(self, a, b, c):
        assert hamming_distance(a, b) == hamming_distance(b, a)
        assert hamming_distance(a, a) == 0
        assert hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c)


class TestDedup:
    def test_identical_to_holdout_flagged(self):
        img = noise_image(3)
        result = dedup({"pool-1": img}, {"held-1": img})
        assert result.retained == []
        assert result.flagged == [("pool-1", "held-1", 0)]

    def test_near_duplicate_of_holdout_flagged(self):
        img = noise_image(4)
        result = dedup({"p": perturb(img, 0)}, {"h": img})
        assert result.retained == []
        assert result.flagged[0][:2] == ("p", "h")
        assert result.flagged[0][2] < 10

    def test_empty_holdout_keeps_distinct_pool(self):
        pool = {f"p{i}": noise_image(100 + i) for i in range(8)}
        result = dedup(pool, {})
        assert result.retained == list(pool)
        assert result.flagged == []

    def test_internal_near_dups_keep_first(self):
        base = noise_image(5)
        pool = {"first": base, "second": perturb(base, 1), "other": noise_image(6)}
        result = dedup(pool, {})
        assert result.retained == ["first", "other"]
        assert result.flagged[0][:2] == ("second", "first")

    def test_idempotent(self):
        base = noise_image(7)
        pool = {"a": base, "b": perturb(base, 2), "c": noise_image(8),
                "d": noise_image(9)}
        holdout = {"h": noise_image(8)}
        first = dedup(pool, holdout)
        survivors = {k: pool[k] for k in first.retained}
        second = dedup(survivors, holdout)
        assert second.retained == first.retained
        assert second.flagged == []

    def test_decode_failures_recorded_and_skipped(self):
        pool = {"ok": noise_image(10), "bad": b"nope"}
        result = dedup(pool, {})
        assert result.retained == ["ok"]
        assert result.decode_failures == ["bad"]

    def test_threshold_boundary_strict(self):
        # Distance exactly at the threshold is retained.
        a, b = 0, (1 << 10) - 1  # distance 10
        from promptgap.dataset_io import ImageHash
        result = dedup_hashes([ImageHash(a, "a")], [ImageHash(b, "h")], threshold=10)
        assert result.retained == ["a"]
        result = dedup_hashes([ImageHash(a, "a")], [ImageHash(b, "h")], threshold=11)
        assert result.retained == []

    def test_hash_images_order_preserved(self):
        pool = {"z": noise_image(11), "a": noise_image(12)}
        hashes, failures = hash_images(pool)
        assert [h.image_id for h in hashes] == ["z", "a"]
        assert failures == []


def sample_record():
    return PromptRecord(
        id="p1",
        text="What is shown?",
        image_refs=["img/p1.png"],
        source="seed_guided:s1",
        stage="seed_generated",
        extras={"lineage": ["s1"], "note": 7},
    )


class TestJsonl:
    def test_round_trip(self, tmp_path):
        records = [
            sample_record(),
            PromptRecord(id="p2", text="Count the bars.", stage="skill_generated",
                         skills_used=["reading stacked bars"]),
            PromptRecord(id="p3", text="Plain."),
        ]
        path = tmp_path / "data.jsonl"
        write_dataset(records, path)
        assert read_dataset(path) == records

    def test_unknown_fields_survive_round_trip(self):
        row = {"id": "x", "text": "t", "provenance": {"batch": 3}}
        record = record_from_json_dict(row)
        assert record.extras == {"provenance": {"batch": 3}}
        assert record_to_json_dict(record)["provenance"] == {"batch": 3}

    def test_missing_text_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "text": "ok"}\n{"id": "b"}\n')
        with pytest.raises(SchemaViolation) as err:
            read_dataset(path)
        assert err.value.line_number == 2
        assert "text" in str(err.value)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        path.write_text('{"id": "a", "text": "x"}\n{"id": "a", "text": "y"}\n')
        with pytest.raises(SchemaViolation) as err:
            read_dataset(path)
        assert err.value.line_number == 2

    def test_invalid_json_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"id": "a", "text": "x"}\nnot json\n')
        with pytest.raises(SchemaViolation) as err:
            read_dataset(path)
        assert err.value.line_number == 2

    def test_invalid_stage_rejected(self):
        with pytest.raises(SchemaViolation):
            record_from_json_dict({"id": "a", "text": "t", "stage": "dreamed"}, 4)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "gaps.jsonl"
        path.write_text('\n{"id": "a", "text": "x"}\n\n')
        assert len(read_dataset(path)) == 1

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_dataset(path) == []

    def test_skills_used_required_for_skill_stage(self):
        with pytest.raises(SchemaViolation):
            record_from_json_dict({"id": "a", "text": "t", "stage": "skill_generated"}, 1)


class TestListImages:
    def test_mixed_files_and_dirs(self, tmp_path):
        (tmp_path / "sub").mkdir()
        noise_image(0).save(tmp_path / "sub" / "b.png")
        noise_image(1).save(tmp_path / "sub" / "a.jpg")
        (tmp_path / "sub" / "notes.txt").write_text("skip me")
        noise_image(2).save(tmp_path / "top.png")
        found = list_images([tmp_path / "sub", tmp_path / "top.png"])
        names = [p.name for p in found.values()]
        assert names == ["a.jpg", "b.png", "top.png"]
