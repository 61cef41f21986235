"""Feature matching with top-k window attention.

Thin Python surface over the C++ core: synthetic pair generation, the full
matching pipeline, window partition utilities, the attention primitive, and
homography fitting. All values cross the boundary as plain nested lists, so
the package has no third-party runtime dependencies.
"""

from ._core import (
    estimate_homography,
    gen_pair,
    interaction_schedule,
    match_pair,
    mutual_nn,
    patch_confidence,
    top_k_window_attention,
    window_partition,
    window_reverse,
)

__all__ = [
    "estimate_homography",
    "gen_pair",
    "interaction_schedule",
    "match_pair",
    "mutual_nn",
    "patch_confidence",
    "top_k_window_attention",
    "window_partition",
    "window_reverse",
]

__version__ = "0.1.0"
