"""Brute-force matching oracle and search-completeness measurement.

The brute-force matcher is the ground truth every tree search is judged
against: it scans all references and therefore always returns the true
nearest neighbor and the full set of threshold-feasible matches. The
completeness instrumentation quantifies how much of that feasible set a
greedy tree search retains, per split bit and per tree depth, and predicts
the depth decay from the single-level measurement.

Per-query work is embarrassingly parallel and everything here is
deterministic given the input corpus (and seed, for the corpus generator).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .descriptor import (
    DescriptorEntry,
    flip_bits,
    hamming_distances,
    pairwise_hamming,
    random_descriptors,
    stack_descriptors,
    unpack_bits,
)
from .tree import HammingTree, MatchRecord, TreeConfig

__all__ = [
    "BruteForceMatcher",
    "brute_force_nearest",
    "brute_force_all",
    "completeness_single",
    "CompletenessReport",
    "bitwise_completeness",
    "depth_completeness",
    "make_noisy_duplicate_corpus",
    "write_bitwise_csv",
    "write_depth_csv",
]


class BruteForceMatcher:
    """Exhaustive matcher over a fixed reference set, packed once."""

    def __init__(self, refs: Sequence[DescriptorEntry]):
        self.refs = list(refs)
        self._matrix = stack_descriptors(self.refs) if self.refs else None

    def distances(self, query_descriptor: np.ndarray) -> np.ndarray:
        """Hamming distance from the query to every reference, in order."""
        if self._matrix is None:
            return np.empty(0, dtype=np.int32)
        return hamming_distances(query_descriptor, self._matrix)

    def nearest(self, query: DescriptorEntry, tau: int) -> MatchRecord | None:
        """Global minimum-distance reference if within tau; ties go to the
        first reference in sequence order."""
        if not self.refs:
            return None
        dists = self.distances(query.descriptor)
        idx = int(np.argmin(dists))
        dist = int(dists[idx])
        if dist > tau:
            return None
        return MatchRecord(query=query, reference=self.refs[idx], distance=dist)

    def all_within(self, query: DescriptorEntry, tau: int) -> list[MatchRecord]:
        """Every reference within tau, in sequence order."""
        if not self.refs:
            return []
        dists = self.distances(query.descriptor)
        hits = np.nonzero(dists <= tau)[0]
        return [
            MatchRecord(query=query, reference=self.refs[i], distance=int(dists[i]))
            for i in hits
        ]


def brute_force_nearest(
    query: DescriptorEntry, refs: Sequence[DescriptorEntry], tau: int
) -> MatchRecord | None:
    """One-shot nearest match; see BruteForceMatcher for repeated queries."""
    return BruteForceMatcher(refs).nearest(query, tau)


def brute_force_all(
    query: DescriptorEntry, refs: Sequence[DescriptorEntry], tau: int
) -> list[MatchRecord]:
    """One-shot feasible-set scan; see BruteForceMatcher for repeated queries."""
    return BruteForceMatcher(refs).all_within(query, tau)


def completeness_single(
    tree_result: Sequence[MatchRecord], oracle_result: Sequence[MatchRecord]
) -> float:
    """Fraction of the feasible matches that the tree search returned.

    Defined as 1.0 when there are no feasible matches: a query with nothing
    to find carries no evidence of loss. Raises ValueError if the tree result
    is not a subset of the oracle result, which would mean the two sides
    disagree about the corpus.
    """
    oracle_keys = {(m.reference.image_id, m.reference.keypoint_id) for m in oracle_result}
    tree_keys = {(m.reference.image_id, m.reference.keypoint_id) for m in tree_result}
    if not tree_keys <= oracle_keys:
        raise ValueError(
            f"tree result is not a subset of the oracle result: "
            f"{sorted(tree_keys - oracle_keys)[:5]} unexpected"
        )
    if not oracle_keys:
        return 1.0
    return len(tree_keys) / len(oracle_keys)


@dataclass(slots=True)
class CompletenessReport:
    """Completeness curves for one matching threshold.

    per_bit[k] is the mean completeness of a depth-1 tree that splits on bit
    k. per_depth_measured[h] is the mean completeness of a balanced tree of
    depth h, and per_depth_predicted[h] = mean(per_bit) ** h extrapolates the
    depth decay from the single-level average.
    """

    tau: int
    per_bit: np.ndarray
    per_depth_measured: dict[int, float]
    per_depth_predicted: dict[int, float]


def _corpus_matrices(
    queries: Sequence[DescriptorEntry],
    refs: Sequence[DescriptorEntry],
    dim_bits: int | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    q = stack_descriptors(queries)
    r = stack_descriptors(refs)
    if q.shape[1] != r.shape[1]:
        raise ValueError(f"query/reference width mismatch: {q.shape[1]} vs {r.shape[1]}")
    if dim_bits is None:
        dim_bits = 8 * q.shape[1]
    return q, r, dim_bits


def _feasible_sets(
    q_matrix: np.ndarray, r_matrix: np.ndarray, taus: Sequence[int]
) -> list[dict[int, np.ndarray]]:
    """Per-query reference indices within each tau, from one distance pass."""
    tau_max = max(taus)
    sets: list[dict[int, np.ndarray]] = []
    block = max(1, int((1 << 26) // max(1, r_matrix.shape[0] * r_matrix.shape[1])))
    for start in range(0, q_matrix.shape[0], block):
        dists = pairwise_hamming(q_matrix[start : start + block], r_matrix)
        for row in dists:
            idx = np.nonzero(row <= tau_max)[0]
            d = row[idx]
            sets.append({tau: idx[d <= tau] for tau in taus})
    return sets


def _bitwise_curves(
    q_bits: np.ndarray,
    r_bits: np.ndarray,
    sets: list[dict[int, np.ndarray]],
    taus: Sequence[int],
) -> dict[int, np.ndarray]:
    n_q, dim_bits = q_bits.shape
    out: dict[int, np.ndarray] = {}
    for tau in taus:
        acc = np.zeros(dim_bits, dtype=np.float64)
        for qi in range(n_q):
            feasible = sets[qi][tau]
            if feasible.size == 0:
                acc += 1.0
            else:
                same_side = r_bits[feasible] == q_bits[qi]
                acc += same_side.mean(axis=0)
        out[tau] = acc / n_q
    return out


def bitwise_completeness(
    queries: Sequence[DescriptorEntry],
    refs: Sequence[DescriptorEntry],
    tau_list: Sequence[int],
    dim_bits: int | None = None,
) -> dict[int, np.ndarray]:
    """Mean completeness of every possible depth-1 split, per threshold.

    For each bit k, the corpus is partitioned into the two leaves of a
    single-node tree testing bit k; a query's search reaches the leaf on its
    own side, so a feasible match survives exactly when it agrees with the
    query on bit k. The returned curves are the per-query completeness values
    averaged (unweighted) over all queries, one array of length dim_bits per
    tau.
    """
    q_matrix, r_matrix, dim_bits = _corpus_matrices(queries, refs, dim_bits)
    sets = _feasible_sets(q_matrix, r_matrix, list(tau_list))
    return _bitwise_curves(
        unpack_bits(q_matrix, dim_bits), unpack_bits(r_matrix, dim_bits),
        sets, list(tau_list),
    )


def depth_completeness(
    queries: Sequence[DescriptorEntry],
    refs: Sequence[DescriptorEntry],
    tau_list: Sequence[int],
    depths: Sequence[int],
    dim_bits: int | None = None,
    delta_max: float = 0.5,
) -> list[CompletenessReport]:
    """Measured vs predicted completeness over a family of balanced trees.

    For each depth h a balanced tree is built with n_max=1 so the depth bound
    governs the structure (h=0 degenerates to a single leaf holding the whole
    corpus). Measured completeness is averaged over all queries; the
    prediction raises the mean single-level completeness to the h-th power.
    One report per threshold.
    """
    q_matrix, r_matrix, dim_bits = _corpus_matrices(queries, refs, dim_bits)
    taus = list(tau_list)
    depths = sorted(set(int(h) for h in depths))
    if depths and depths[0] < 0:
        raise ValueError(f"depths must be non-negative, got {depths[0]}")
    sets = _feasible_sets(q_matrix, r_matrix, taus)
    per_bit = _bitwise_curves(
        unpack_bits(q_matrix, dim_bits), unpack_bits(r_matrix, dim_bits), sets, taus
    )
    n_q = q_matrix.shape[0]
    tau_max = max(taus)

    measured: dict[int, dict[int, float]] = {tau: {} for tau in taus}
    for h in depths:
        if h == 0:
            config = TreeConfig(
                tau=min(tau_max, dim_bits), delta_max=delta_max,
                n_max=max(1, len(refs)),
            )
        else:
            config = TreeConfig(
                tau=min(tau_max, dim_bits), delta_max=delta_max,
                n_max=1, max_depth=h,
            )
        tree = HammingTree.build_balanced(refs, config, dim_bits)
        sums = {tau: 0.0 for tau in taus}
        for qi, query in enumerate(queries):
            found = tree.search_all(query, min(tau_max, dim_bits))
            found_dists = np.array([m.distance for m in found], dtype=np.int64)
            for tau in taus:
                feasible = sets[qi][tau]
                n_found = int((found_dists <= tau).sum())
                if n_found > feasible.size:
                    raise ValueError(
                        "tree search returned more matches than the "
                        f"brute-force feasible set at tau={tau}"
                    )
                if feasible.size == 0:
                    sums[tau] += 1.0
                else:
                    sums[tau] += n_found / feasible.size
        for tau in taus:
            measured[tau][h] = sums[tau] / n_q

    reports = []
    for tau in taus:
        mean_level = float(per_bit[tau].mean())
        predicted = {h: mean_level**h for h in depths}
        reports.append(
            CompletenessReport(
                tau=tau,
                per_bit=per_bit[tau],
                per_depth_measured=measured[tau],
                per_depth_predicted=predicted,
            )
        )
    return reports


def make_noisy_duplicate_corpus(
    num_images: int,
    descriptors_per_image: int,
    dim_bits: int,
    max_flips: int,
    seed: int = 0,
) -> tuple[list[DescriptorEntry], list[DescriptorEntry]]:
    """Planted-neighbor corpus for the completeness experiments.

    References are uniform random descriptors spread over ``num_images``
    images. Each reference gets one query: a copy with f distinct bit
    positions flipped, f drawn uniformly from [0, max_flips]. Queries carry
    image ids above the reference range. Reproducible given the seed.
    """
    if max_flips > dim_bits:
        raise ValueError(f"max_flips {max_flips} exceeds dim_bits {dim_bits}")
    rng = np.random.default_rng(seed)
    refs: list[DescriptorEntry] = []
    queries: list[DescriptorEntry] = []
    for image in range(num_images):
        matrix = random_descriptors(descriptors_per_image, dim_bits, rng)
        for kp in range(descriptors_per_image):
            refs.append(DescriptorEntry(matrix[kp], image, kp))
    flip_counts = rng.integers(0, max_flips + 1, size=len(refs))
    for i, ref in enumerate(refs):
        f = int(flip_counts[i])
        positions = rng.choice(dim_bits, size=f, replace=False) if f else ()
        queries.append(
            DescriptorEntry(
                flip_bits(ref.descriptor, positions),
                num_images + ref.image_id,
                ref.keypoint_id,
            )
        )
    return queries, refs


def write_bitwise_csv(path, per_bit_by_tau: Mapping[int, np.ndarray]) -> None:
    """Write ``bit,tau,completeness`` rows, bits outermost."""
    taus = sorted(per_bit_by_tau)
    n_bits = len(next(iter(per_bit_by_tau.values())))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bit,tau,completeness\n")
        for bit in range(n_bits):
            for tau in taus:
                fh.write(f"{bit},{tau},{per_bit_by_tau[tau][bit]:.6f}\n")


def write_depth_csv(path, reports: Sequence[CompletenessReport]) -> None:
    """Write ``depth,tau,measured,predicted`` rows, depths outermost."""
    depths = sorted({h for r in reports for h in r.per_depth_measured})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("depth,tau,measured,predicted\n")
        for h in depths:
            for report in sorted(reports, key=lambda r: r.tau):
                fh.write(
                    f"{h},{report.tau},{report.per_depth_measured[h]:.6f},"
                    f"{report.per_depth_predicted[h]:.6f}\n"
                )
