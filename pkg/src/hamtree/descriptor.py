"""Packed binary descriptors and the bit-level kernels everything else builds on.

A descriptor is a fixed-width bit vector stored as a packed ``np.uint8`` array.
Bit ``k`` lives in byte ``k // 8`` at position ``k % 8``, least-significant bit
first, so ``int.from_bytes(desc.tobytes(), "little") >> k & 1`` reads bit ``k``.
The logical width ``dim_bits`` is a corpus-level constant; the standard widths
are 128, 256 and 512 bits. Narrower toy widths (any ``dim_bits >= 1``) are
accepted in memory for small worked examples, with unused high bits of the
final byte kept at zero; the binary file formats require a multiple of 8.

All distance kernels are numpy-vectorized. On numpy >= 2.0 the hardware
popcount (``np.bitwise_count``) is used over a uint64 view; older numpy falls
back to a per-byte lookup table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BitStatistics",
    "DescriptorEntry",
    "bit_statistics",
    "descriptor_nbytes",
    "descriptor_to_int",
    "flip_bits",
    "get_bit",
    "hamming",
    "hamming_distances",
    "pack_bits",
    "pairwise_hamming",
    "popcount",
    "random_descriptors",
    "stack_descriptors",
    "unpack_bits",
]

_HAS_BITWISE_COUNT = hasattr(np, "bitwise_count")
_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def descriptor_nbytes(dim_bits: int) -> int:
    """Number of payload bytes for a logical width of ``dim_bits``."""
    if dim_bits < 1:
        raise ValueError(f"dim_bits must be >= 1, got {dim_bits}")
    return (dim_bits + 7) // 8


def pack_bits(bits: Sequence[int] | np.ndarray) -> np.ndarray:
    """Pack a 0/1 sequence (bit 0 first) into a uint8 descriptor."""
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("bits must be a non-empty 1-d 0/1 sequence")
    return np.packbits(arr, bitorder="little")


def unpack_bits(descriptor: np.ndarray, dim_bits: int | None = None) -> np.ndarray:
    """Unpack a descriptor (or a (N, W) matrix) to 0/1 values, bit 0 first."""
    arr = np.asarray(descriptor, dtype=np.uint8)
    bits = np.unpackbits(arr, axis=-1, bitorder="little")
    if dim_bits is not None:
        bits = bits[..., :dim_bits]
    return bits


def popcount(arr: np.ndarray) -> np.ndarray:
    """Per-element popcount of a uint8 array."""
    if _HAS_BITWISE_COUNT:
        return np.bitwise_count(arr)
    return _POPCOUNT8[arr]


def _row_popcount(xored: np.ndarray) -> np.ndarray:
    """Sum of set bits along the last (byte) axis of a uint8 array."""
    w = xored.shape[-1]
    if _HAS_BITWISE_COUNT and w % 8 == 0 and xored.flags.c_contiguous:
        return np.bitwise_count(xored.view(np.uint64)).sum(axis=-1, dtype=np.int32)
    return popcount(xored).sum(axis=-1, dtype=np.int32)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Hamming distance between two packed descriptors of equal width.

    Symmetric, zero iff the descriptors are identical, and bounded by the
    logical bit width. Raises ValueError on a byte-width mismatch.
    """
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"descriptor width mismatch: {a.shape} vs {b.shape}")
    return int(_row_popcount(np.bitwise_xor(a, b)))


def hamming_distances(query: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Distances from one packed descriptor to every row of a (N, W) matrix."""
    query = np.asarray(query, dtype=np.uint8)
    refs = np.asarray(refs, dtype=np.uint8)
    if refs.ndim != 2 or refs.shape[1] != query.shape[0]:
        raise ValueError(
            f"reference matrix shape {refs.shape} incompatible with query width {query.shape}"
        )
    return _row_popcount(np.bitwise_xor(refs, query))


def pairwise_hamming(
    queries: np.ndarray, refs: np.ndarray, max_chunk_bytes: int = 1 << 26
) -> np.ndarray:
    """Full (N_q, N_r) Hamming distance matrix between two packed matrices.

    The broadcast XOR is evaluated in query blocks so the temporary stays
    under ``max_chunk_bytes``.
    """
    queries = np.ascontiguousarray(queries, dtype=np.uint8)
    refs = np.ascontiguousarray(refs, dtype=np.uint8)
    if queries.shape[1] != refs.shape[1]:
        raise ValueError(f"width mismatch: {queries.shape[1]} vs {refs.shape[1]} bytes")
    n_q, w = queries.shape
    n_r = refs.shape[0]
    out = np.empty((n_q, n_r), dtype=np.int32)
    block = max(1, int(max_chunk_bytes // max(1, n_r * w)))
    for start in range(0, n_q, block):
        stop = min(start + block, n_q)
        xored = np.bitwise_xor(queries[start:stop, None, :], refs[None, :, :])
        out[start:stop] = _row_popcount(xored)
    return out


@dataclass(eq=False, slots=True)
class DescriptorEntry:
    """A descriptor plus its provenance: which image and keypoint produced it.

    ``(image_id, keypoint_id)`` is unique within a corpus; ``keypoint_xy`` may
    be ``(0.0, 0.0)`` for synthetic data.
    """

    descriptor: np.ndarray
    image_id: int
    keypoint_id: int
    keypoint_xy: tuple[float, float] = (0.0, 0.0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DescriptorEntry):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.keypoint_id == other.keypoint_id
            and self.keypoint_xy == other.keypoint_xy
            and np.array_equal(self.descriptor, other.descriptor)
        )


def stack_descriptors(entries: Sequence[DescriptorEntry]) -> np.ndarray:
    """Stack the descriptors of a non-empty entry sequence into a (N, W) matrix."""
    if not entries:
        raise ValueError("cannot stack an empty entry sequence")
    return np.stack([e.descriptor for e in entries]).astype(np.uint8, copy=False)


@dataclass(slots=True)
class BitStatistics:
    """Per-bit population counts over a descriptor set.

    ``counts[k]`` is the number of descriptors with bit ``k`` set;
    ``total`` is the number of descriptors summed. ``0 <= counts[k] <= total``.
    """

    counts: np.ndarray
    total: int

    def means(self) -> np.ndarray:
        """Per-bit mean value, in [0, 1]."""
        return self.counts / float(self.total)


def bit_statistics(
    descriptors: Sequence[np.ndarray] | np.ndarray, dim_bits: int | None = None
) -> BitStatistics:
    """Count set bits per position over a descriptor sequence or (N, W) matrix.

    Permutation-invariant in its input. Raises ValueError on an empty input or
    a width mismatch.
    """
    if isinstance(descriptors, np.ndarray) and descriptors.ndim == 2:
        matrix = descriptors.astype(np.uint8, copy=False)
    else:
        seq = list(descriptors)
        if not seq:
            raise ValueError("bit_statistics requires at least one descriptor")
        widths = {np.asarray(d).shape for d in seq}
        if len(widths) != 1:
            raise ValueError(f"mixed descriptor widths: {sorted(widths)}")
        matrix = np.stack(seq).astype(np.uint8, copy=False)
    if matrix.shape[0] == 0:
        raise ValueError("bit_statistics requires at least one descriptor")
    if dim_bits is None:
        dim_bits = 8 * matrix.shape[1]
    bits = unpack_bits(matrix, dim_bits)
    counts = bits.sum(axis=0, dtype=np.int64)
    return BitStatistics(counts=counts, total=matrix.shape[0])


def random_descriptors(
    count: int, dim_bits: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform random packed descriptors, shape (count, nbytes).

    Unused high bits of the final byte (non-multiple-of-8 widths) are zeroed.
    """
    nbytes = descriptor_nbytes(dim_bits)
    matrix = rng.integers(0, 256, size=(count, nbytes), dtype=np.uint8)
    tail = dim_bits % 8
    if tail:
        matrix[:, -1] &= (1 << tail) - 1
    return matrix


def flip_bits(
    descriptor: np.ndarray, positions: Iterable[int]
) -> np.ndarray:
    """Copy of ``descriptor`` with the given bit positions inverted."""
    out = np.array(descriptor, dtype=np.uint8, copy=True)
    for k in positions:
        out[k >> 3] ^= np.uint8(1 << (k & 7))
    return out


def get_bit(descriptor: np.ndarray, k: int) -> int:
    """Value of bit ``k`` of a packed descriptor."""
    return (int(descriptor[k >> 3]) >> (k & 7)) & 1


def descriptor_to_int(descriptor: np.ndarray) -> int:
    """Whole descriptor as a Python int; bit ``k`` of the int is bit ``k``."""
    return int.from_bytes(np.asarray(descriptor, dtype=np.uint8).tobytes(), "little")
