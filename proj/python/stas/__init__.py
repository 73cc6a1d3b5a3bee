from ._stas import (
    StasError,
    TokenTopology,
    apply_scaling,
    apply_stas,
    boundary_count,
    boundary_tokens,
    build_topology,
    classify,
    classify_frame_pair,
    dg_combine,
    first_frame_tokens,
    pairwise_similarity,
    read_trace_file,
    run_cli,
    target_set,
    write_trace_file,
)

__all__ = [
    "StasError",
    "TokenTopology",
    "apply_scaling",
    "apply_stas",
    "boundary_count",
    "boundary_tokens",
    "build_topology",
    "classify",
    "classify_frame_pair",
    "dg_combine",
    "first_frame_tokens",
    "pairwise_similarity",
    "read_trace_file",
    "run_cli",
    "target_set",
    "write_trace_file",
]
