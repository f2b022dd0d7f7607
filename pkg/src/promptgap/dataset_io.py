"""Dataset JSONL ingestion/emission and perceptual-hash image deduplication."""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .answers import PromptRecord
from .errors import DecodeFailure, SchemaViolation

ImageSource = Union[str, Path, bytes, Image.Image]

DEDUP_THRESHOLD = 10

_KNOWN_FIELDS = ("id", "text", "image_refs", "source", "stage", "skills_used")


@dataclass
class ImageHash:
    """64-bit difference hash of decoded pixel content."""

    bits: int
    image_id: str


def dhash(image: ImageSource, image_id: str = "") -> ImageHash:
    """Difference hash: grayscale, 9x8 bilinear resize, horizontal gradient bits.

    Bit (row * 8 + col) is set iff pixel[col][row] > pixel[col + 1][row].
    Invariant to lossless re-encoding since it hashes decoded pixels.
    """
    try:
        if isinstance(image, Image.Image):
            img = image
        elif isinstance(image, bytes):
            img = Image.open(io.BytesIO(image))
        else:
            img = Image.open(image)
        gray = img.convert("L").resize((9, 8), Image.BILINEAR)
    except Exception as exc:
        raise DecodeFailure(f"{image_id or image!r}: {exc}") from exc
    pixels = np.asarray(gray, dtype=np.int16)
    bits = 0
    for row in range(8):
        for col in range(8):
            if pixels[row, col] > pixels[row, col + 1]:
                bits |= 1 << (row * 8 + col)
    return ImageHash(bits=bits, image_id=image_id)


def hamming_distance(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def _distance_matrix(pool_bits: Sequence[int], other_bits: Sequence[int]) -> np.ndarray:
    """Pairwise Hamming distances via XOR popcount over uint64 views."""
    a = np.array(pool_bits, dtype=np.uint64)
    b = np.array(other_bits, dtype=np.uint64)
    xor = np.ascontiguousarray(np.bitwise_xor(a[:, None], b[None, :]))
    as_bytes = xor.view(np.uint8).reshape(len(a), len(b), 8)
    return np.unpackbits(as_bytes, axis=2).sum(axis=2)


@dataclass
class DedupResult:
    retained: List[str]
    flagged: List[Tuple[str, str, int]]  # (pool id, matched id, distance)
    decode_failures: List[str] = field(default_factory=list)


def hash_images(images: Mapping[str, ImageSource]) -> Tuple[List[ImageHash], List[str]]:
    """Hash a mapping id -> image, skipping and recording decode failures."""
    hashes: List[ImageHash] = []
    failures: List[str] = []
    for image_id, source in images.items():
        try:
            hashes.append(dhash(source, image_id))
        except DecodeFailure:
            failures.append(image_id)
    return hashes, failures


def dedup_hashes(
    pool: Sequence[ImageHash],
    holdout: Sequence[ImageHash] = (),
    threshold: int = DEDUP_THRESHOLD,
) -> DedupResult:
    """Flag pool hashes near any holdout hash, then collapse internal near-dups.

    Internal collapse keeps the first occurrence in pool order. A pool image
    matches when the Hamming distance is strictly below ``threshold``.
    """
    flagged: List[Tuple[str, str, int]] = []
    flagged_ids: set = set()
    if holdout and pool:
        dists = _distance_matrix([h.bits for h in pool], [h.bits for h in holdout])
        for i, pool_hash in enumerate(pool):
            j = int(np.argmin(dists[i]))
            if dists[i, j] < threshold:
                flagged.append((pool_hash.image_id, holdout[j].image_id, int(dists[i, j])))
                flagged_ids.add(pool_hash.image_id)

    survivors = [h for h in pool if h.image_id not in flagged_ids]
    retained: List[ImageHash] = []
    if survivors:
        dists = _distance_matrix([h.bits for h in survivors], [h.bits for h in survivors])
        for i, h in enumerate(survivors):
            dup_of = None
            for j in range(i):
                if survivors[j].image_id in flagged_ids:
                    continue
                if dists[i, j] < threshold:
                    dup_of = survivors[j]
                    break
            if dup_of is None:
                retained.append(h)
            else:
                flagged.append((h.image_id, dup_of.image_id, int(hamming_distance(h.bits, dup_of.bits))))
                flagged_ids.add(h.image_id)
    return DedupResult(retained=[h.image_id for h in retained], flagged=flagged)


def dedup(
    pool: Mapping[str, ImageSource],
    holdout: Mapping[str, ImageSource] = {},
    threshold: int = DEDUP_THRESHOLD,
) -> DedupResult:
    """Hash both sets and run holdout-aware deduplication."""
    pool_hashes, pool_failures = hash_images(pool)
    holdout_hashes, holdout_failures = hash_images(holdout)
    result = dedup_hashes(pool_hashes, holdout_hashes, threshold)
    result.decode_failures = pool_failures + holdout_failures
    return result


def record_to_json_dict(record: PromptRecord) -> Dict[str, object]:
    row: Dict[str, object] = {
        "id": record.id,
        "text": record.text,
        "image_refs": list(record.image_refs),
        "source": record.source,
        "stage": record.stage,
    }
    if record.skills_used is not None:
        row["skills_used"] = list(record.skills_used)
    row.update(record.extras)
    return row


def record_from_json_dict(row: Dict[str, object], line_number: int = 0) -> PromptRecord:
    for required in ("id", "text"):
        if required not in row:
            raise SchemaViolation(line_number, f"missing required field {required!r}")
    if not isinstance(row["id"], str) or not row["id"]:
        raise SchemaViolation(line_number, "id must be a non-empty string")
    if not isinstance(row["text"], str) or not row["text"]:
        raise SchemaViolation(line_number, "text must be a non-empty string")
    extras = {k: v for k, v in row.items() if k not in _KNOWN_FIELDS}
    try:
        return PromptRecord(
            id=row["id"],
            text=row["text"],
            image_refs=list(row.get("image_refs", [])),
            source=str(row.get("source", "")),
            stage=str(row.get("stage", "existing")),
            skills_used=list(row["skills_used"]) if "skills_used" in row else None,
            extras=extras,
        )
    except ValueError as exc:
        raise SchemaViolation(line_number, str(exc)) from exc


def read_dataset(path) -> List[PromptRecord]:
    """Read a JSONL prompt dataset, validating schema and id uniqueness."""
    records: List[PromptRecord] = []
    seen: set = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(line_number, f"invalid JSON: {exc}") from exc
            if not isinstance(row, dict):
                raise SchemaViolation(line_number, "each line must be a JSON object")
            record = record_from_json_dict(row, line_number)
            if record.id in seen:
                raise SchemaViolation(line_number, f"duplicate id {record.id!r}")
            seen.add(record.id)
            records.append(record)
    return records


def write_dataset(records: Iterable[PromptRecord], path) -> None:
    """Write records as UTF-8 JSONL, one record per line."""
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json_dict(record), ensure_ascii=False))
            fh.write("\n")


def list_images(paths: Sequence[Union[str, Path]]) -> Dict[str, Path]:
    """Collect image files from a mix of files and directories, id = path."""
    exts = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}
    found: Dict[str, Path] = {}
    for entry in paths:
        p = Path(entry)
        if p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.suffix.lower() in exts and child.is_file():
                    found[str(child)] = child
        elif p.is_file():
            found[str(p)] = p
    return found
