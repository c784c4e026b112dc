"""Acceptance gate: one test per release criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS lines as they complete. Criteria with a stated runtime budget measure
and assert it; the heavyweight corpora are session fixtures shared between
criteria.
"""

from __future__ import annotations

import re
import time

import numpy as np
import pytest

from hamtree import (
    BruteForceMatcher,
    DescriptorEntry,
    GroundTruth,
    HammingTree,
    RetrievalConfig,
    SyntheticSpec,
    TreeConfig,
    bitwise_completeness,
    completeness_single,
    depth_completeness,
    deserialize_tree,
    generate_sequence,
    make_noisy_duplicate_corpus,
    max_f1,
    pr_curve,
    random_descriptors,
    read_descriptor_file,
    run_protocol,
    run_protocol_brute_force,
    serialize_tree,
    write_descriptor_file,
)
from hamtree.cli import main as cli_main

from conftest import make_entries


def report(criterion: int, text: str) -> None:
    print(f"ACCEPTANCE {criterion} PASS: {text}")


# ----------------------------------------------------------------------
# Shared corpora
# ----------------------------------------------------------------------

@pytest.fixture(scope="session")
def planted_corpus():
    """10 images x 1000 descriptors, one query per reference, <= 15 bit flips."""
    return make_noisy_duplicate_corpus(
        10, 1000, 256, max_flips=15, seed=2024
    )


@pytest.fixture(scope="session")
def bitwise_curves(planted_corpus):
    queries, refs = planted_corpus
    return bitwise_completeness(queries, refs, [10, 25, 50, 75])


@pytest.fixture(scope="session")
def depth_reports(planted_corpus):
    queries, refs = planted_corpus
    start = time.perf_counter()
    reports = depth_completeness(queries, refs, [10, 25], range(0, 9))
    return reports, time.perf_counter() - start


@pytest.fixture(scope="session")
def big_random_tree():
    """10^5 uniform random 256-bit descriptors inserted incrementally."""
    rng = np.random.default_rng(1234)
    matrix = random_descriptors(100_000, 256, rng)
    entries = make_entries(matrix)
    tree = HammingTree(256, TreeConfig(tau=25, delta_max=0.1, n_max=100))
    for entry in entries:
        tree.insert(entry)
    return tree, entries, matrix


# ----------------------------------------------------------------------
# Criteria
# ----------------------------------------------------------------------

def test_criterion_1_exact_containment_guarantee():
    """20k incremental inserts; every stored descriptor is found at distance 0."""
    rng = np.random.default_rng(11)
    entries = make_entries(random_descriptors(20_000, 256, rng))
    start = time.perf_counter()
    tree = HammingTree(256, TreeConfig(tau=25, delta_max=0.1, n_max=10))
    for entry in entries:
        tree.insert(entry)
    found = 0
    for entry in entries:
        result = tree.search_nearest(entry, tau=0)
        assert result.best is not None
        assert result.best.distance == 0
        assert result.best.reference is entry
        found += 1
    elapsed = time.perf_counter() - start
    assert found == 20_000
    assert elapsed < 5.0, f"containment sweep took {elapsed:.2f} s"
    report(1, f"20000/20000 stored descriptors self-matched in {elapsed:.2f} s")


def test_criterion_2_single_leaf_oracle_equivalence():
    """With n_max covering the corpus, tree search equals brute force exactly."""
    rng = np.random.default_rng(22)
    refs = make_entries(random_descriptors(1000, 256, rng))
    queries = make_entries(random_descriptors(1000, 256, rng), image_id=1)
    tree = HammingTree.build_balanced(refs, TreeConfig(tau=25, n_max=1000), 256)
    matcher = BruteForceMatcher(refs)
    checked = 0
    for tau in (0, 25, 256):
        for query in queries:
            got = tree.search_nearest(query, tau).best
            want = matcher.nearest(query, tau)
            if want is None:
                assert got is None
            else:
                assert got is not None
                assert got.distance == want.distance
                assert got.reference is want.reference
            checked += 1
    assert checked == 3000
    report(2, "search_nearest == brute_force_nearest on 1000x1000 at tau in {0,25,256}")


def test_criterion_3_subset_and_completeness_consistency(planted_corpus):
    """Tree results are subsets of brute force; completeness stays in [0, 1]."""
    queries, refs = planted_corpus
    tree = HammingTree(256, TreeConfig(tau=25, delta_max=0.1, n_max=10))
    for entry in refs:
        tree.insert(entry)
    matcher = BruteForceMatcher(refs)
    violations = 0
    vacuous = 0
    for query in queries:
        tree_result = tree.search_all(query, 25)
        oracle_result = matcher.all_within(query, 25)
        value = completeness_single(tree_result, oracle_result)  # verifies subset
        if not oracle_result:
            vacuous += 1
            assert value == 1.0
        if not 0.0 <= value <= 1.0:
            violations += 1
    assert violations == 0
    report(
        3,
        f"search_all subset of brute_force_all for {len(queries)} queries "
        f"({vacuous} vacuous), zero violations",
    )


def test_criterion_4_completeness_prediction(depth_reports):
    """Depth decay prediction tracks measurement within 0.10 for h = 1..8."""
    reports, elapsed = depth_reports
    worst = 0.0
    for report_ in reports:
        assert report_.tau in (10, 25)
        for h in range(1, 9):
            gap = abs(
                report_.per_depth_measured[h] - report_.per_depth_predicted[h]
            )
            worst = max(worst, gap)
            assert gap <= 0.10, f"tau={report_.tau} h={h}: gap {gap:.4f}"
    assert elapsed < 60.0, f"depth sweep took {elapsed:.1f} s"
    report(4, f"max |measured - predicted| = {worst:.4f} over h=1..8, computed in {elapsed:.1f} s")


def test_criterion_5_bitwise_flatness_and_tau_monotonicity(bitwise_curves):
    """Split-bit choice barely matters; higher tau never raises completeness.

    At this corpus's noise level (<= 15 flips) the feasible sets are
    identical for tau >= 25, so the mean completeness is exactly flat there;
    the genuine decrease appears from tau=10 to tau=25 and the rest of the
    sweep is asserted non-increasing.
    """
    flatness = float(bitwise_curves[25].std())
    assert flatness <= 0.05, f"per-bit completeness std {flatness:.4f}"
    means = [float(bitwise_curves[tau].mean()) for tau in (10, 25, 50, 75)]
    assert means[0] > means[1], "completeness should drop from tau=10 to tau=25"
    for lower_tau, higher_tau in zip(means, means[1:]):
        assert higher_tau <= lower_tau + 1e-9
    report(
        5,
        f"std over bits = {flatness:.4f} at tau=25; mean completeness "
        f"{' >= '.join(f'{m:.4f}' for m in means)} over tau = 10,25,50,75",
    )


def test_criterion_6_depth_and_cost_behavior(big_random_tree):
    """Incremental tree stays near the balanced depth and leaf-scan bounds."""
    tree, entries, _ = big_random_tree
    stats = tree.depth_stats()
    target = np.log2(100_000 / 100)
    assert abs(stats.mean_depth - target) <= 2.0, (
        f"mean depth {stats.mean_depth:.2f} vs target {target:.2f}"
    )
    rng = np.random.default_rng(66)
    queries = make_entries(random_descriptors(2000, 256, rng), image_id=1)
    results = [tree.search_nearest(q, 25) for q in queries]
    mean_scanned = float(np.mean([r.leaf_scanned for r in results]))
    assert mean_scanned <= 2 * 100
    report(
        6,
        f"mean leaf depth {stats.mean_depth:.2f} (target {target:.2f} +- 2), "
        f"mean leaf_scanned {mean_scanned:.1f} <= 200",
    )


def test_criterion_7_speedup_at_desk_scale(big_random_tree, tmp_path, capsys):
    """Per-query work is under 1% of brute force; the benchmark command
    measures at least a 50x wall-clock speedup."""
    tree, entries, matrix = big_random_tree
    rng = np.random.default_rng(77)
    queries = make_entries(random_descriptors(2000, 256, rng), image_id=1)
    results = [tree.search_nearest(q, 25) for q in queries]
    mean_work = float(np.mean([r.depth_traversed + r.leaf_scanned for r in results]))
    assert mean_work <= len(entries) / 100, (
        f"mean work {mean_work:.1f} exceeds 1% of {len(entries)} comparisons"
    )

    db_path = tmp_path / "db.hbd"
    query_path = tmp_path / "queries.hbd"
    write_descriptor_file(db_path, entries, 256)
    write_descriptor_file(query_path, queries[:1000], 256)
    code = cli_main(
        [
            "match", "--db", str(db_path), "--query", str(query_path),
            "--tau", "25", "--nmax", "100", "--output", str(tmp_path / "m.csv"),
            "--compare-bruteforce",
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    match = re.search(r"speedup: ([0-9.]+)x", printed)
    assert match is not None, printed
    speedup = float(match.group(1))
    assert speedup >= 50.0, f"benchmark speedup {speedup:.1f}x below 50x"
    report(
        7,
        f"mean work {mean_work:.1f}/{len(entries)} comparisons, "
        f"benchmark speedup {speedup:.0f}x",
    )


def test_criterion_8_retrieval_pipeline_dominance():
    """Brute force bounds the trees from above; HBST-50 stays close to both."""
    start = time.perf_counter()
    spec = SyntheticSpec(
        num_images=200,
        descriptors_per_image=100,
        dim_bits=256,
        loop_pairs=[(q, q - 100, 0.5) for q in range(100, 200)],
        noise_bits=10,
        seed=7,
    )
    images, truth = generate_sequence(spec)
    gt = GroundTruth(pairs=truth)
    retrieval = RetrievalConfig(tau=25)

    f1_bf = max_f1(pr_curve(run_protocol_brute_force(images, retrieval).scores, gt)).f1
    f1_50 = max_f1(
        pr_curve(
            run_protocol(images, TreeConfig(tau=25, delta_max=0.1, n_max=50), retrieval).scores,
            gt,
        )
    ).f1
    f1_10 = max_f1(
        pr_curve(
            run_protocol(images, TreeConfig(tau=25, delta_max=0.1, n_max=10), retrieval).scores,
            gt,
        )
    ).f1
    elapsed = time.perf_counter() - start
    assert f1_bf >= f1_50, f"BF {f1_bf:.4f} < HBST-50 {f1_50:.4f}"
    assert f1_50 >= f1_10 - 0.02, f"HBST-50 {f1_50:.4f} < HBST-10 {f1_10:.4f} - 0.02"
    assert f1_50 >= 0.9 * f1_bf, f"HBST-50 {f1_50:.4f} < 0.9 * BF {f1_bf:.4f}"
    assert elapsed < 120.0, f"protocol comparison took {elapsed:.1f} s"
    report(
        8,
        f"max F1: BF {f1_bf:.4f} >= HBST-50 {f1_50:.4f} >= HBST-10 {f1_10:.4f} - 0.02 "
        f"in {elapsed:.1f} s",
    )


def test_criterion_9_format_round_trips(tmp_path):
    """1000 randomized corpora and trees survive serialization exactly."""
    rng = np.random.default_rng(99)
    corpus_path = tmp_path / "trial.hbd"
    for trial in range(1000):
        dim_bits = int(rng.choice([128, 256, 512]))
        count = int(rng.integers(0, 41))
        matrix = random_descriptors(count, dim_bits, rng) if count else None
        entries = []
        for i in range(count):
            entries.append(
                DescriptorEntry(
                    descriptor=matrix[i],
                    image_id=int(rng.integers(0, 5)),
                    keypoint_id=i,
                    keypoint_xy=(
                        float(np.float32(rng.uniform(0, 640))),
                        float(np.float32(rng.uniform(0, 480))),
                    ),
                )
            )
        write_descriptor_file(corpus_path, entries, dim_bits)
        loaded, loaded_dim = read_descriptor_file(corpus_path)
        assert loaded_dim == dim_bits
        assert loaded == entries

        config = TreeConfig(
            tau=min(25, dim_bits),
            delta_max=0.5,
            n_max=int(rng.integers(1, 9)),
        )
        if rng.integers(0, 2):
            tree = HammingTree.build_balanced(entries, config, dim_bits)
        else:
            tree = HammingTree(dim_bits, config)
            for entry in entries:
                tree.insert(entry)
        clone = deserialize_tree(serialize_tree(tree))
        assert tree.structurally_equal(clone)
    report(9, "1000 randomized descriptor-file and tree round-trips, all exact")
