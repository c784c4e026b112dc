"""hamtree: binary-descriptor matching and image retrieval in Hamming space.

The package centres on :class:`~hamtree.tree.HammingTree`, a search tree
whose internal nodes each test one descriptor bit and whose leaves are
scanned exhaustively. It supports balanced offline construction, incremental
insertion with leaf splitting, and greedy nearest / range search, all of
which run in time logarithmic in the corpus size for well-mixed descriptor
sets. On top of the tree sit a vote-based image retrieval layer, a
brute-force oracle with search-completeness instrumentation, and a
sequential evaluation protocol with precision/recall scoring.
"""

from .descriptor import (
    BitStatistics,
    DescriptorEntry,
    bit_statistics,
    hamming,
    hamming_distances,
    pack_bits,
    pairwise_hamming,
    random_descriptors,
    unpack_bits,
)
from .evaluation import (
    GroundTruth,
    GroundTruthParams,
    PoseRecord,
    PrCurve,
    PrPoint,
    ProtocolResult,
    build_ground_truth,
    max_f1,
    pr_curve,
    run_protocol,
    run_protocol_brute_force,
)
from .io import (
    FormatError,
    deserialize_tree,
    load_tree,
    read_descriptor_file,
    save_tree,
    serialize_tree,
    write_descriptor_file,
)
from .oracle import (
    BruteForceMatcher,
    CompletenessReport,
    bitwise_completeness,
    brute_force_all,
    brute_force_nearest,
    completeness_single,
    depth_completeness,
    make_noisy_duplicate_corpus,
)
from .retrieval import (
    ImageScore,
    RetrievalConfig,
    query_image,
    retrieve_above,
    retrieve_best,
)
from .synthetic import SyntheticSpec, generate_sequence
from .tree import (
    DepthStats,
    HammingTree,
    InternalNode,
    LeafNode,
    MatchRecord,
    SearchResult,
    TreeConfig,
    select_split_bit,
)

__version__ = "0.1.0"

__all__ = [
    "BitStatistics",
    "BruteForceMatcher",
    "CompletenessReport",
    "DepthStats",
    "DescriptorEntry",
    "FormatError",
    "GroundTruth",
    "GroundTruthParams",
    "HammingTree",
    "ImageScore",
    "InternalNode",
    "LeafNode",
    "MatchRecord",
    "PoseRecord",
    "PrCurve",
    "PrPoint",
    "ProtocolResult",
    "RetrievalConfig",
    "SearchResult",
    "SyntheticSpec",
    "TreeConfig",
    "bit_statistics",
    "bitwise_completeness",
    "brute_force_all",
    "brute_force_nearest",
    "build_ground_truth",
    "completeness_single",
    "depth_completeness",
    "deserialize_tree",
    "generate_sequence",
    "hamming",
    "hamming_distances",
    "load_tree",
    "make_noisy_duplicate_corpus",
    "max_f1",
    "pack_bits",
    "pairwise_hamming",
    "pr_curve",
    "query_image",
    "random_descriptors",
    "read_descriptor_file",
    "retrieve_above",
    "retrieve_best",
    "run_protocol",
    "run_protocol_brute_force",
    "save_tree",
    "select_split_bit",
    "serialize_tree",
    "unpack_bits",
    "write_descriptor_file",
]
