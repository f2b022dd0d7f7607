"""Perceptual-hash deduplication: near-duplicates vs independent images.

Builds a pool containing exact copies, lightly perturbed copies and fresh
noise images, then shows which ones the difference hash flags against a
holdout set.

Run: python3 demos/image_dedup.py
"""

import numpy as np
from PIL import Image

from promptgap import dedup, dhash, hamming_distance


def noise_image(seed, size=(64, 64)):
    rng = np.random.default_rng(seed)
    return Image.fromarray(rng.integers(0, 256, size, dtype=np.uint8), mode="L")


def perturb(image, seed, n_pixels=3):
    arr = np.asarray(image).copy()
    rng = np.random.default_rng(seed)
    for _ in range(n_pixels):
        r, c = rng.integers(0, arr.shape[0]), rng.integers(0, arr.shape[1])
        arr[r, c] = 255 - arr[r, c]
    return Image.fromarray(arr, mode="L")


holdout = {f"holdout-{i}": noise_image(i) for i in range(5)}

pool = {
    "copy-of-0": holdout["holdout-0"],          # exact duplicate
    "tweaked-1": perturb(holdout["holdout-1"], 99),  # near duplicate
    "fresh-a": noise_image(100),
    "fresh-b": noise_image(101),
    "fresh-b-again": perturb(noise_image(101), 7),   # internal near-dup
}

print("pairwise distances to the matching holdout image:")
for pool_id, holdout_id in (("copy-of-0", "holdout-0"), ("tweaked-1", "holdout-1")):
    d = hamming_distance(dhash(pool[pool_id]).bits, dhash(holdout[holdout_id]).bits)
    print(f"  {pool_id} vs {holdout_id}: {d}")
d = hamming_distance(dhash(pool["fresh-a"]).bits, dhash(holdout["holdout-0"]).bits)
print(f"  fresh-a vs holdout-0: {d}  (independent noise sits near 32)")

result = dedup(pool, holdout, threshold=10)
print("\nretained:", result.retained)
for image, matched, distance in result.flagged:
    print(f"flagged:  {image} ~ {matched} (distance {distance})")
