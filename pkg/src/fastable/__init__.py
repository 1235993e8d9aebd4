"""Sequence-based visual place recognition with an incremental window matcher."""

from .analysis import (
    ClusterParams,
    ConsistencyParams,
    RecognitionCluster,
    TruthEntry,
    auto_tune,
    cluster,
    consistency_filter,
    score_against_ground_truth,
)
from .descriptor import DESCRIPTOR_BITS, DESCRIPTOR_BYTES, Frame, GlobalDescriptor, describe, hamming, preprocess
from .matcher import (
    DistanceMatrix,
    HammingCounter,
    MatchParams,
    MatchState,
    Recognition,
    match_baseline,
    match_fast,
    stream_open,
    stream_push,
)
from .sequence_store import SequenceDatabase, TrainSegment, ingest_directory, load, save

__version__ = "0.1.0"
