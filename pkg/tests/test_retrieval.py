"""Vote accumulation and ranked image retrieval."""

from __future__ import annotations

import numpy as np
import pytest

from hamtree import (
    BruteForceMatcher,
    DescriptorEntry,
    HammingTree,
    RetrievalConfig,
    TreeConfig,
    pack_bits,
    query_image,
    random_descriptors,
    retrieve_above,
    retrieve_best,
)

from conftest import make_entries


def build_database(images: list[np.ndarray], config: TreeConfig, dim_bits: int):
    tree = HammingTree(dim_bits, config)
    for image_id, matrix in enumerate(images):
        for entry in make_entries(matrix, image_id=image_id):
            tree.insert(entry)
    return tree


def test_identical_stored_image_scores_one():
    rng = np.random.default_rng(110)
    matrix = random_descriptors(100, 256, rng)
    other = random_descriptors(100, 256, rng)
    tree = build_database([matrix, other], TreeConfig(tau=0, n_max=10), 256)
    queries = make_entries(matrix, image_id=2)
    scores = query_image(tree, queries, RetrievalConfig(tau=0))
    assert scores[0].image_id == 0
    assert scores[0].votes == 100
    assert scores[0].score == 1.0


def test_score_is_votes_over_query_count():
    # one stored image shares exactly a quarter of the query's descriptors
    rng = np.random.default_rng(111)
    stored = random_descriptors(1000, 256, rng)
    tree = build_database([stored], TreeConfig(tau=0, n_max=50), 256)
    query_matrix = np.vstack([stored[:250], random_descriptors(750, 256, rng)])
    queries = make_entries(query_matrix, image_id=1)
    scores = query_image(tree, queries, RetrievalConfig(tau=0))
    assert scores[0].votes == 250
    assert scores[0].score == pytest.approx(0.25)


def test_one_keypoint_votes_once_per_image():
    # Two stored images contribute records to the same reached leaf. The
    # query keypoint gives one vote to each image, and only the closest
    # record of each image carries the vote.
    near_a = DescriptorEntry(pack_bits([0, 0, 0, 0, 0, 0, 0, 0]), 0, 0)
    far_a = DescriptorEntry(pack_bits([0, 1, 1, 0, 0, 0, 0, 0]), 0, 1)
    near_b = DescriptorEntry(pack_bits([1, 0, 0, 0, 0, 0, 0, 0]), 1, 0)
    tree = HammingTree(8, TreeConfig(tau=8, n_max=10))
    for entry in (near_a, far_a, near_b):
        tree.insert(entry)
    query = DescriptorEntry(pack_bits([0] * 8), 2, 0)
    scores = query_image(tree, [query], RetrievalConfig(tau=8))
    by_image = {s.image_id: s for s in scores}
    assert by_image[0].votes == 1
    assert by_image[1].votes == 1
    assert by_image[0].matches[0].reference.keypoint_id == 0  # closest record won
    assert by_image[0].matches[0].distance == 0
    assert by_image[1].matches[0].distance == 1


def test_empty_query_returns_empty():
    tree = HammingTree(256, TreeConfig())
    assert query_image(tree, [], RetrievalConfig()) == []


def test_ranking_descending_with_image_id_tie_break():
    rng = np.random.default_rng(112)
    shared = random_descriptors(10, 256, rng)
    image_a = np.vstack([shared[:4], random_descriptors(6, 256, rng)])
    image_b = np.vstack([shared[:8], random_descriptors(2, 256, rng)])
    image_c = np.vstack([shared[:4], random_descriptors(6, 256, rng)])
    tree = build_database([image_a, image_b, image_c], TreeConfig(tau=0, n_max=100), 256)
    queries = make_entries(shared, image_id=3)
    scores = query_image(tree, queries, RetrievalConfig(tau=0))
    assert [s.image_id for s in scores] == [1, 0, 2]  # 0.8, then 0.4 tie by id
    assert scores[1].score == scores[2].score


def test_votes_bounded_by_query_and_stored_counts():
    rng = np.random.default_rng(113)
    images = [random_descriptors(30, 256, rng) for _ in range(3)]
    images[1][:10] = images[0][:10]
    tree = build_database(images[:2], TreeConfig(tau=25, n_max=10), 256)
    queries = make_entries(images[2], image_id=2)
    for s in query_image(tree, queries, RetrievalConfig(tau=256)):
        assert s.votes <= len(queries)
        assert s.votes <= 30  # stored count per image
        assert s.votes == len(s.matches)
        kp_ids = [m.query.keypoint_id for m in s.matches]
        assert len(kp_ids) == len(set(kp_ids))  # one vote per query keypoint


def test_unrelated_image_does_not_reduce_existing_votes():
    # On a fixed leaf structure (n_max covers everything), adding another
    # image only appends records, so earlier images keep their votes.
    rng = np.random.default_rng(114)
    image_a = random_descriptors(50, 256, rng)
    query_matrix = np.vstack([image_a[:20], random_descriptors(30, 256, rng)])
    config = TreeConfig(tau=25, n_max=10_000)
    tree = build_database([image_a], config, 256)
    queries = make_entries(query_matrix, image_id=9)
    before = {s.image_id: s.votes for s in query_image(tree, queries, RetrievalConfig())}
    for entry in make_entries(random_descriptors(50, 256, rng), image_id=1):
        tree.insert(entry)
    after = {s.image_id: s.votes for s in query_image(tree, queries, RetrievalConfig())}
    for image_id, votes in before.items():
        assert after.get(image_id, 0) >= votes


def test_single_leaf_votes_match_brute_force_per_image_counts():
    rng = np.random.default_rng(115)
    images = [random_descriptors(40, 256, rng) for _ in range(4)]
    images[2][:15] = images[0][:15]
    tree = build_database(images[:3], TreeConfig(tau=25, n_max=10_000), 256)
    queries = make_entries(
        np.vstack([images[0][:10], images[1][:5], random_descriptors(10, 256, rng)]),
        image_id=3,
    )
    tau = 25
    scores = {s.image_id: s.votes for s in query_image(tree, queries, RetrievalConfig(tau=tau))}

    refs = [e for i in range(3) for e in make_entries(images[i], image_id=i)]
    expected: dict[int, int] = {}
    for image_id in range(3):
        matcher = BruteForceMatcher([e for e in refs if e.image_id == image_id])
        count = sum(1 for q in queries if matcher.nearest(q, tau) is not None)
        if count:
            expected[image_id] = count
    assert scores == expected


def test_retrieve_best_and_above():
    assert retrieve_best([]) is None
    from hamtree import ImageScore

    scores = [
        ImageScore(image_id=0, votes=4, score=0.4),
        ImageScore(image_id=1, votes=1, score=0.1),
    ]
    best = retrieve_best(scores)
    assert best is not None and best.image_id == 0
    above = retrieve_above(scores, 0.2)
    assert [s.image_id for s in above] == [0]


def test_retrieve_best_tie_breaks_to_smaller_image_id():
    from hamtree import ImageScore

    scores = [
        ImageScore(image_id=5, votes=2, score=0.2),
        ImageScore(image_id=3, votes=2, score=0.2),
        ImageScore(image_id=8, votes=2, score=0.2),
    ]
    best = retrieve_best(scores)
    assert best is not None and best.image_id == 3


def test_query_image_rejects_mixed_image_ids():
    rng = np.random.default_rng(116)
    tree = HammingTree(256, TreeConfig())
    queries = make_entries(random_descriptors(2, 256, rng), image_id=0)
    queries += make_entries(random_descriptors(2, 256, rng), image_id=1)
    with pytest.raises(ValueError):
        query_image(tree, queries, RetrievalConfig())
