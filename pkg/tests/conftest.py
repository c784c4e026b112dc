"""Shared fixture helpers for the test suite."""

from __future__ import annotations

import numpy as np

from hamtree import DescriptorEntry, pack_bits


def make_entries(matrix: np.ndarray, image_id: int = 0, start_kp: int = 0):
    """Wrap the rows of a packed (N, W) matrix as entries of one image."""
    return [
        DescriptorEntry(np.array(matrix[i], dtype=np.uint8), image_id, start_kp + i)
        for i in range(matrix.shape[0])
    ]


def entries_from_bits(rows, image_id: int = 0, start_kp: int = 0):
    """Entries from explicit bit tuples (bit 0 first), padded to whole bytes."""
    return [
        DescriptorEntry(pack_bits(row), image_id, start_kp + i)
        for i, row in enumerate(rows)
    ]
