#!/usr/bin/env python3
"""Vote-based image retrieval over one shared descriptor tree.

Every stored descriptor remembers which image it came from. To retrieve, each
query descriptor searches the tree and gives at most one vote per database
image (its closest record in the reached leaf); an image's score is its vote
count normalized by the query's descriptor count. Images seen before under
similar appearance collect many votes, unrelated images collect none.
"""

import numpy as np

from hamtree import (
    DescriptorEntry,
    HammingTree,
    RetrievalConfig,
    TreeConfig,
    query_image,
    random_descriptors,
    retrieve_above,
    retrieve_best,
)

rng = np.random.default_rng(2)
N_D = 500  # descriptors per image


def noisy_copy(matrix, flips):
    out = np.array(matrix, copy=True)
    for row in range(out.shape[0]):
        for k in rng.choice(256, size=flips, replace=False):
            out[row, k >> 3] ^= np.uint8(1 << (k & 7))
    return out


# =============================================================================
# Build a database of ten "places". Place 7 is a revisit of place 2 under
# noise (half its descriptors are perturbed copies), the rest are unrelated.

places = [random_descriptors(N_D, 256, rng) for _ in range(10)]
places[7][: N_D // 2] = noisy_copy(places[2][: N_D // 2], flips=8)

tree = HammingTree(256, TreeConfig(tau=25, delta_max=0.1, n_max=10))
for image_id, matrix in enumerate(places):
    for kp, row in enumerate(matrix):
        tree.insert(DescriptorEntry(row, image_id, kp))
print(f"database: {tree.count} descriptors over {len(places)} images")

# =============================================================================
# Query with a fresh view of place 2 (every descriptor perturbed a little).
# Both place 2 itself and its revisit (place 7) should collect votes.

view = noisy_copy(places[2], flips=6)
queries = [DescriptorEntry(row, 99, kp) for kp, row in enumerate(view)]
scores = query_image(tree, queries, RetrievalConfig(tau=25))

for s in scores[:3]:
    print(f"  image {s.image_id}: votes={s.votes} score={s.score:.3f}")

best = retrieve_best(scores)
assert best is not None and best.image_id == 2
assert best.score > 0.5

by_image = {s.image_id: s.score for s in scores}
assert by_image.get(7, 0.0) > 0.2          # the revisit is found too
assert all(by_image.get(i, 0.0) < 0.05 for i in (0, 1, 3, 4, 5, 6, 8, 9))

# An acceptance threshold on the normalized score turns the ranking into a
# detection set:

accepted = retrieve_above(scores, tau_image=0.2)
assert {s.image_id for s in accepted} == {2, 7}
print(f"accepted above tau_image=0.2: {[s.image_id for s in accepted]}")

# =============================================================================
# Vote bookkeeping: one vote per query keypoint per image, and each vote is
# backed by the closest matching record of that image.

for s in scores:
    assert s.votes == len(s.matches)
    kp_ids = [m.query.keypoint_id for m in s.matches]
    assert len(kp_ids) == len(set(kp_ids))

print("image retrieval: all assertions passed")
