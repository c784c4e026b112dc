#!/usr/bin/env python3
"""Packed binary descriptors and Hamming-space distance kernels.

Binary feature descriptors (BRIEF-256, ORB-256, BRISK-512 and friends) are
fixed-width bit vectors. hamtree stores them packed, eight bits per byte with
bit k at position k % 8 of byte k // 8, and measures similarity with the
Hamming distance: the number of differing bit positions.
"""

import numpy as np

from hamtree import (
    bit_statistics,
    hamming,
    hamming_distances,
    pack_bits,
    random_descriptors,
    unpack_bits,
)

# =============================================================================
# A descriptor can be built from an explicit bit sequence (bit 0 first). Four
# bits pack into a single byte; the standard 256-bit width packs into 32.

a = pack_bits([1, 0, 1, 1, 0, 0, 1, 0])
b = pack_bits([1, 0, 0, 1, 1, 0, 1, 0])
print(f"a = {a!r}  b = {b!r}")

# The two differ at positions 2 and 4:

assert hamming(a, b) == 2
assert hamming(a, a) == 0
assert hamming(pack_bits([0] * 4), pack_bits([1] * 4)) == 4

# Unpacking inverts packing and exposes the bits for inspection.

assert unpack_bits(a)[2] == 1 and unpack_bits(b)[2] == 0

# =============================================================================
# Random corpora: a (N, width/8) uint8 matrix, one descriptor per row. Two
# independent uniform 256-bit descriptors differ in roughly half their bits,
# which is why a tight matching threshold (tau around 25) rejects unrelated
# descriptors so reliably.

rng = np.random.default_rng(0)
corpus = random_descriptors(10_000, 256, rng)
query = random_descriptors(1, 256, rng)[0]

distances = hamming_distances(query, corpus)
print(f"distance to 10k random descriptors: mean={distances.mean():.1f} "
      f"min={distances.min()} max={distances.max()}")
assert 100 < distances.mean() < 156
assert distances.min() > 25

# =============================================================================
# Per-bit statistics drive the tree construction later on: a bit whose mean
# over a descriptor set is close to 0.5 splits that set roughly in half.

stats = bit_statistics(corpus)
means = stats.means()
print(f"bit means over the corpus: min={means.min():.3f} max={means.max():.3f}")
assert np.all(np.abs(means - 0.5) < 0.05)

# Hand-sized example: three 4-bit descriptors, counted per position.

toy = bit_statistics(
    [pack_bits(r) for r in [(1, 1, 0, 0), (0, 1, 1, 0), (0, 0, 1, 1)]],
    dim_bits=4,
)
assert toy.counts.tolist() == [1, 2, 2, 1]
assert toy.total == 3

print("descriptor basics: all assertions passed")
