"""Synthetic rendering, ORB features and cross-view template matching."""

from .handoff_match import PADDINGS, MatchFailed, MatchOutcome, MatchParams, two_stage_handoff_match
from .image import decode_pgm, encode_pgm, read_pgm, write_pgm
from .orb import Features, Keypoint, MatchPair, brief_describe, fast_detect, hamming, match_descriptors, orb, orientation
from .ransac import NoConsensus, SimilarityTransform, estimate_transform_ransac, fit_similarity_ransac
from .render import RenderParams, render_scene

__all__ = [
    "PADDINGS",
    "Features",
    "Keypoint",
    "MatchFailed",
    "MatchOutcome",
    "MatchPair",
    "MatchParams",
    "NoConsensus",
    "RenderParams",
    "SimilarityTransform",
    "brief_describe",
    "decode_pgm",
    "encode_pgm",
    "estimate_transform_ransac",
    "fast_detect",
    "fit_similarity_ransac",
    "hamming",
    "match_descriptors",
    "orb",
    "orientation",
    "read_pgm",
    "render_scene",
    "two_stage_handoff_match",
    "write_pgm",
]
