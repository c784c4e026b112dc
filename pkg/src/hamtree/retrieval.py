"""Vote-based image retrieval on top of the descriptor tree.

Every stored descriptor carries the id of the image it came from, so a
multi-image database is just one tree. A query image is matched descriptor
by descriptor; each query keypoint gives at most one vote per database image
(the closest record of that image in the reached leaf), and an image's score
is its vote count normalized by the number of query descriptors. More shared
appearance means more votes, so ranking is by descending score.

Queries are read-only on the tree and safe to run concurrently between
insertions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .descriptor import DescriptorEntry
from .tree import HammingTree, MatchRecord

__all__ = ["ImageScore", "RetrievalConfig", "query_image", "retrieve_best", "retrieve_above"]


@dataclass(slots=True)
class ImageScore:
    """Vote tally for one database image against one query image.

    ``score`` is votes divided by the query descriptor count, in [0, 1].
    ``matches`` holds the voting records (one per query keypoint) when the
    caller asked for them; large protocol runs skip collecting matches.
    """

    image_id: int
    votes: int
    score: float
    matches: list[MatchRecord] = field(default_factory=list)


@dataclass(slots=True)
class RetrievalConfig:
    """Descriptor-level threshold and image-level acceptance score."""

    tau: int = 25
    tau_image: float = 0.1

    def validate(self) -> None:
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if not 0.0 <= self.tau_image <= 1.0:
            raise ValueError(f"tau_image must be in [0, 1], got {self.tau_image}")


def query_image(
    tree: HammingTree,
    query_entries: Sequence[DescriptorEntry],
    config: RetrievalConfig | None = None,
    collect_matches: bool = True,
) -> list[ImageScore]:
    """Score every database image against one query image's descriptors.

    For each query entry the reached leaf is scanned for all records within
    tau; among records of the same stored image only the closest one becomes
    that image's vote from this keypoint. Results are sorted by descending
    score, ties broken by smaller image_id. The query entries must all belong
    to one image, and the tree is expected not to contain that image.
    """
    if config is None:
        config = RetrievalConfig()
    config.validate()
    query_entries = list(query_entries)
    if not query_entries:
        return []
    if len({e.image_id for e in query_entries}) != 1:
        raise ValueError("query entries span several images")
    votes: dict[int, int] = {}
    matches: dict[int, list[MatchRecord]] = {}
    for entry in query_entries:
        records = tree.search_all(entry, config.tau)
        best_per_image: dict[int, MatchRecord] = {}
        for record in records:
            image = record.reference.image_id
            current = best_per_image.get(image)
            if current is None or record.distance < current.distance:
                best_per_image[image] = record
        for image, record in best_per_image.items():
            votes[image] = votes.get(image, 0) + 1
            if collect_matches:
                matches.setdefault(image, []).append(record)
    n_query = len(query_entries)
    scores = [
        ImageScore(
            image_id=image,
            votes=count,
            score=count / n_query,
            matches=matches.get(image, []),
        )
        for image, count in votes.items()
    ]
    scores.sort(key=lambda s: (-s.score, s.image_id))
    return scores


def retrieve_best(scores: Sequence[ImageScore]) -> ImageScore | None:
    """Highest-scoring image, or None for an empty database / no votes."""
    if not scores:
        return None
    return min(scores, key=lambda s: (-s.score, s.image_id))


def retrieve_above(
    scores: Sequence[ImageScore], tau_image: float
) -> list[ImageScore]:
    """All images whose score reaches the acceptance threshold."""
    kept = [s for s in scores if s.score >= tau_image]
    kept.sort(key=lambda s: (-s.score, s.image_id))
    return kept
