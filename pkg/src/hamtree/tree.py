"""Bit-index search tree over packed binary descriptors.

Internal nodes test a single descriptor bit (value 0 descends left, 1 right);
leaves hold descriptor sets that are scanned exhaustively. Each bit index
appears at most once on any root-to-leaf path, which bounds the tree depth by
the descriptor width. The tree supports balanced offline construction,
incremental insertion with leaf splitting, and greedy nearest / range search.

Trees are single-writer / multi-reader: any number of concurrent searches may
run against an unchanging tree, while ``insert`` and ``search_and_insert``
require exclusive access. Nothing is mutated by a read.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .descriptor import (
    BitStatistics,
    DescriptorEntry,
    descriptor_nbytes,
    descriptor_to_int,
    _row_popcount,
    unpack_bits,
)

__all__ = [
    "TreeConfig",
    "InternalNode",
    "LeafNode",
    "MatchRecord",
    "SearchResult",
    "DepthStats",
    "select_split_bit",
    "HammingTree",
]


@dataclass(slots=True)
class TreeConfig:
    """Construction and matching parameters.

    tau: Hamming acceptance threshold for matches (inclusive).
    delta_max: a bit is an admissible split only if its mean over the node's
        descriptors is within delta_max of 0.5.
    n_max: maximum leaf size; a leaf exceeding it is split when possible.
    max_depth: depth bound; None means the descriptor width.
    """

    tau: int = 25
    delta_max: float = 0.1
    n_max: int = 10
    max_depth: int | None = None

    def validate(self, dim_bits: int) -> None:
        if not 0 <= self.tau <= dim_bits:
            raise ValueError(f"tau must be in [0, {dim_bits}], got {self.tau}")
        if not 0.0 <= self.delta_max <= 0.5:
            raise ValueError(f"delta_max must be in [0, 0.5], got {self.delta_max}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.max_depth is not None and not 1 <= self.max_depth <= dim_bits:
            raise ValueError(
                f"max_depth must be in [1, {dim_bits}], got {self.max_depth}"
            )

    def depth_limit(self, dim_bits: int) -> int:
        return dim_bits if self.max_depth is None else self.max_depth


class LeafNode:
    """Leaf holding descriptor entries in insertion order.

    Descriptors are mirrored into a growing packed matrix so a leaf scan is a
    single vectorized distance computation, and per-bit set counts are kept
    current so a split admissibility check costs O(dim_bits), not O(n).
    """

    __slots__ = ("entries", "_packed", "_bit_counts", "_dim_bits")

    def __init__(self, dim_bits: int, entries: Sequence[DescriptorEntry] = ()):
        self.entries: list[DescriptorEntry] = []
        self._dim_bits = dim_bits
        self._packed = np.empty((8, descriptor_nbytes(dim_bits)), dtype=np.uint8)
        self._bit_counts = np.zeros(dim_bits, dtype=np.int64)
        for entry in entries:
            self.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: DescriptorEntry) -> None:
        n = len(self.entries)
        if n == self._packed.shape[0]:
            grown = np.empty((2 * n, self._packed.shape[1]), dtype=np.uint8)
            grown[:n] = self._packed
            self._packed = grown
        self._packed[n] = entry.descriptor
        self._bit_counts += unpack_bits(entry.descriptor, self._dim_bits)
        self.entries.append(entry)

    def packed(self) -> np.ndarray:
        """View of the stored descriptors as a (len, W) matrix."""
        return self._packed[: len(self.entries)]

    def statistics(self) -> BitStatistics:
        return BitStatistics(counts=self._bit_counts.copy(), total=len(self.entries))


class InternalNode:
    """Two-way branch on one descriptor bit: 0 goes left, 1 goes right."""

    __slots__ = ("bit_index", "left", "right")

    def __init__(self, bit_index: int, left: "TreeNode", right: "TreeNode"):
        self.bit_index = bit_index
        self.left = left
        self.right = right


TreeNode = InternalNode | LeafNode


@dataclass(slots=True)
class MatchRecord:
    """One query/reference correspondence with its Hamming distance."""

    query: DescriptorEntry
    reference: DescriptorEntry
    distance: int


@dataclass(slots=True)
class SearchResult:
    """Outcome of one greedy descent plus leaf scan.

    ``best`` is the minimum-distance leaf entry if that distance is within
    tau, else None. ``leaf_scanned`` counts descriptors compared in the
    reached leaf and ``depth_traversed`` the internal nodes passed, so their
    sum is the exact work spent on the query.
    """

    best: MatchRecord | None
    leaf_scanned: int
    depth_traversed: int


@dataclass(slots=True)
class DepthStats:
    """Leaf-depth statistics, one sample per leaf."""

    mean_depth: float
    stddev_depth: float
    max_depth: int
    leaf_count: int
    leaf_size_histogram: dict[int, int] = field(default_factory=dict)


def select_split_bit(
    stats: BitStatistics, forbidden: set[int], delta_max: float
) -> int | None:
    """Pick the bit whose mean is closest to 0.5, skipping forbidden indices.

    Returns None when every candidate's |0.5 - mean| exceeds delta_max (the
    split is refused) or when no candidate remains. Ties break to the
    smallest index.
    """
    if stats.total < 1:
        raise ValueError("statistics cover no descriptors")
    deviation = np.abs(0.5 - stats.counts / float(stats.total))
    if forbidden:
        idx = [k for k in forbidden if 0 <= k < deviation.shape[0]]
        deviation[idx] = np.inf
    best = int(np.argmin(deviation))
    if not np.isfinite(deviation[best]) or deviation[best] > delta_max:
        return None
    return best


class HammingTree:
    """Search tree over a corpus of uniform-width binary descriptors.

    Parameters
    ----------
    dim_bits:
        Logical descriptor width of the corpus.
    config:
        Matching and splitting parameters (defaults mirror the standard
        256-bit setup: tau=25, delta_max=0.1, n_max=10).
    root:
        Optional pre-built node structure; mainly for deserialization and
        hand-constructed fixtures.
    """

    def __init__(
        self,
        dim_bits: int,
        config: TreeConfig | None = None,
        root: TreeNode | None = None,
    ):
        if dim_bits < 1:
            raise ValueError(f"dim_bits must be >= 1, got {dim_bits}")
        self.dim_bits = dim_bits
        self.config = config if config is not None else TreeConfig()
        self.config.validate(dim_bits)
        self.root: TreeNode = root if root is not None else LeafNode(dim_bits)
        self.count = sum(len(leaf) for leaf, _ in self._iter_leaves())

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def build_balanced(
        cls,
        entries: Sequence[DescriptorEntry],
        config: TreeConfig | None = None,
        dim_bits: int | None = None,
    ) -> "HammingTree":
        """Build a tree by recursively splitting the entry set evenly.

        At each node the bit with mean closest to 0.5 over the current subset
        (ancestor bits excluded) partitions the subset; recursion stops when
        the subset is at most n_max entries, the depth limit is reached, or no
        bit is admissible under delta_max. Runs in O(n * depth).
        """
        entries = list(entries)
        if dim_bits is None:
            if not entries:
                raise ValueError("dim_bits is required to build an empty tree")
            dim_bits = 8 * int(np.asarray(entries[0].descriptor).shape[0])
        tree = cls(dim_bits, config)
        nbytes = descriptor_nbytes(dim_bits)
        for e in entries:
            if np.asarray(e.descriptor).shape[0] != nbytes:
                raise ValueError(
                    f"descriptor of entry ({e.image_id}, {e.keypoint_id}) has "
                    f"{np.asarray(e.descriptor).shape[0]} bytes, expected {nbytes}"
                )
        if not entries:
            return tree
        bits = unpack_bits(np.stack([e.descriptor for e in entries]), dim_bits)
        order = np.arange(len(entries))
        tree.root = tree._build_recursive(entries, bits, order, 0, set())
        tree.count = len(entries)
        return tree

    def _build_recursive(
        self,
        entries: list[DescriptorEntry],
        bits: np.ndarray,
        subset: np.ndarray,
        depth: int,
        forbidden: set[int],
    ) -> TreeNode:
        cfg = self.config
        if len(subset) > cfg.n_max and depth < cfg.depth_limit(self.dim_bits):
            counts = bits[subset].sum(axis=0, dtype=np.int64)
            stats = BitStatistics(counts=counts, total=len(subset))
            bit = select_split_bit(stats, forbidden, cfg.delta_max)
            if bit is not None:
                mask = bits[subset, bit] == 1
                forbidden.add(bit)
                left = self._build_recursive(
                    entries, bits, subset[~mask], depth + 1, forbidden
                )
                right = self._build_recursive(
                    entries, bits, subset[mask], depth + 1, forbidden
                )
                forbidden.remove(bit)
                return InternalNode(bit, left, right)
        return LeafNode(self.dim_bits, [entries[i] for i in subset])

    # ------------------------------------------------------------------
    # Search
    # ------------------------------------------------------------------

    def _descend(self, descriptor: np.ndarray) -> tuple[LeafNode, int, set[int]]:
        """Greedy traversal; returns the reached leaf, depth, and path bits."""
        key = descriptor_to_int(descriptor)
        node = self.root
        depth = 0
        path_bits: set[int] = set()
        while isinstance(node, InternalNode):
            path_bits.add(node.bit_index)
            node = node.right if (key >> node.bit_index) & 1 else node.left
            depth += 1
        return node, depth, path_bits

    def _check_width(self, descriptor: np.ndarray) -> None:
        nbytes = descriptor_nbytes(self.dim_bits)
        if np.asarray(descriptor).shape[0] != nbytes:
            raise ValueError(
                f"query has {np.asarray(descriptor).shape[0]} bytes, tree "
                f"expects {nbytes}"
            )

    def search_nearest(
        self, query: DescriptorEntry, tau: int | None = None
    ) -> SearchResult:
        """Greedy descent then exhaustive scan of the reached leaf.

        A query whose descriptor is stored in the tree is always found at
        distance 0, because it retraces the exact path of its stored copy.
        Among equal minimum distances the first-inserted entry wins, matching
        the brute-force convention.
        """
        self._check_width(query.descriptor)
        if tau is None:
            tau = self.config.tau
        leaf, depth, _ = self._descend(query.descriptor)
        n = len(leaf)
        if n == 0:
            return SearchResult(best=None, leaf_scanned=0, depth_traversed=depth)
        dists = _row_popcount(np.bitwise_xor(leaf.packed(), query.descriptor))
        best_idx = int(np.argmin(dists))
        best_dist = int(dists[best_idx])
        best = None
        if best_dist <= tau:
            best = MatchRecord(
                query=query, reference=leaf.entries[best_idx], distance=best_dist
            )
        return SearchResult(best=best, leaf_scanned=n, depth_traversed=depth)

    def search_all(
        self, query: DescriptorEntry, tau: int | None = None
    ) -> list[MatchRecord]:
        """All reached-leaf entries within tau, in insertion order.

        The result is by construction a subset of what a full brute-force
        scan at the same tau would return.
        """
        self._check_width(query.descriptor)
        if tau is None:
            tau = self.config.tau
        leaf, _, _ = self._descend(query.descriptor)
        if len(leaf) == 0:
            return []
        dists = _row_popcount(np.bitwise_xor(leaf.packed(), query.descriptor))
        hits = np.nonzero(dists <= tau)[0]
        return [
            MatchRecord(query=query, reference=leaf.entries[i], distance=int(dists[i]))
            for i in hits
        ]

    # ------------------------------------------------------------------
    # Insertion
    # ------------------------------------------------------------------

    def insert(self, entry: DescriptorEntry) -> None:
        """Append ``entry`` to its greedy leaf, splitting if it grows too big.

        The leaf is converted to an internal node when its size exceeds n_max,
        an admissible split bit exists among the non-ancestor indices, and the
        depth limit has not been reached; otherwise it simply grows. No
        rebalancing is ever performed.
        """
        self._check_width(entry.descriptor)
        key = descriptor_to_int(entry.descriptor)
        parent: InternalNode | None = None
        went_right = False
        node = self.root
        depth = 0
        path_bits: set[int] = set()
        while isinstance(node, InternalNode):
            path_bits.add(node.bit_index)
            parent = node
            went_right = bool((key >> node.bit_index) & 1)
            node = node.right if went_right else node.left
            depth += 1
        node.append(entry)
        self.count += 1
        self._maybe_split(node, parent, went_right, depth, path_bits)

    def _maybe_split(
        self,
        leaf: LeafNode,
        parent: InternalNode | None,
        went_right: bool,
        depth: int,
        path_bits: set[int],
    ) -> None:
        cfg = self.config
        if len(leaf) <= cfg.n_max or depth >= cfg.depth_limit(self.dim_bits):
            return
        bit = select_split_bit(leaf.statistics(), path_bits, cfg.delta_max)
        if bit is None:
            return
        column = unpack_bits(leaf.packed(), self.dim_bits)[:, bit]
        left = LeafNode(self.dim_bits)
        right = LeafNode(self.dim_bits)
        for value, entry in zip(column, leaf.entries):
            (right if value else left).append(entry)
        node = InternalNode(bit, left, right)
        if parent is None:
            self.root = node
        elif went_right:
            parent.right = node
        else:
            parent.left = node

    def search_and_insert(
        self, entries: Sequence[DescriptorEntry], tau: int | None = None
    ) -> list[SearchResult]:
        """Match one image's descriptors, then add them to the tree.

        All searches are answered against the tree state at call entry and
        the insertions are applied afterwards, so results never match other
        descriptors of the same image. All entries must share one image_id.
        """
        entries = list(entries)
        if entries:
            image_ids = {e.image_id for e in entries}
            if len(image_ids) != 1:
                raise ValueError(
                    f"entries span several images: {sorted(image_ids)}"
                )
        results = [self.search_nearest(e, tau) for e in entries]
        for e in entries:
            self.insert(e)
        return results

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    def _iter_leaves(self) -> Iterator[tuple[LeafNode, int]]:
        stack: list[tuple[TreeNode, int]] = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            if isinstance(node, LeafNode):
                yield node, depth
            else:
                stack.append((node.right, depth + 1))
                stack.append((node.left, depth + 1))

    def depth_stats(self) -> DepthStats:
        """Mean / spread / extremes of leaf depth, one sample per leaf."""
        depths = []
        histogram: dict[int, int] = {}
        for leaf, depth in self._iter_leaves():
            depths.append(depth)
            size = len(leaf)
            histogram[size] = histogram.get(size, 0) + 1
        arr = np.asarray(depths, dtype=np.float64)
        return DepthStats(
            mean_depth=float(arr.mean()),
            stddev_depth=float(arr.std()),
            max_depth=int(arr.max()),
            leaf_count=len(depths),
            leaf_size_histogram=dict(sorted(histogram.items())),
        )

    def leaf_entries(self) -> list[DescriptorEntry]:
        """All stored entries, left-to-right, leaf order preserved."""
        out: list[DescriptorEntry] = []
        stack: list[TreeNode] = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, LeafNode):
                out.extend(node.entries)
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def structurally_equal(self, other: "HammingTree") -> bool:
        """Node-for-node equality, including entry order within leaves."""
        if self.dim_bits != other.dim_bits:
            return False
        stack = [(self.root, other.root)]
        while stack:
            a, b = stack.pop()
            if isinstance(a, LeafNode) != isinstance(b, LeafNode):
                return False
            if isinstance(a, LeafNode):
                assert isinstance(b, LeafNode)
                if len(a) != len(b) or any(
                    x != y for x, y in zip(a.entries, b.entries)
                ):
                    return False
            else:
                assert isinstance(b, InternalNode)
                if a.bit_index != b.bit_index:
                    return False
                stack.append((a.left, b.left))
                stack.append((a.right, b.right))
        return True
