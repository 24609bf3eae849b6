"""vidcorr: windowed token correspondence across video feature volumes.

The package traces, for every token of an N x H x W x d feature volume, its
top-K most similar tokens in every other frame — chaining matches frame by
frame inside a sliding spatial window — and uses those correspondences to run
merge-reduced scaled dot-product attention over latent volumes. Includes
binary file formats for volumes and maps, an operation-counting benchmark,
a trajectory visualizer, and a CLI (``vidcorr``) tying them together.
"""

from .attention import (
    MergedTokenSet,
    apply_frame_attention,
    corr_guided_attention,
    gather_corr,
    merge_tokens,
)
from .bench import (
    OpCountReport,
    analytic_all_pairs_ops,
    analytic_ops,
    complexity_table,
    measured_ops,
    synthesize_volume,
    traced_ops,
)
from .correspondence import (
    CorrespondenceMap,
    SimilarityBlock,
    TraceStats,
    similarity_adjacent,
    similarity_full,
    top_k_argmax,
    trace_trajectories,
    window_crop,
)
from .errors import DataError, InternalCheckError, ParameterError, VidcorrError
from .fixtures import MotionFixture, synthesize_moving_patch
from .volume import (
    FeatureVolume,
    LatentVolume,
    TokenCoord,
    feature_volume_bytes,
    load_feature_volume,
    load_latent_volume,
    normalize,
    save_feature_volume,
)

__version__ = "0.1.0"

_LAZY = ("full_reference_trajectories", "windowed_reference_trajectories")


def __getattr__(name: str):
    # The scalar-loop reference tracer pulls in numba; defer that import so
    # plain library and CLI use stays fast.
    if name in _LAZY:
        from . import reference

        return getattr(reference, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = [
    "CorrespondenceMap",
    "DataError",
    "FeatureVolume",
    "InternalCheckError",
    "LatentVolume",
    "MergedTokenSet",
    "MotionFixture",
    "OpCountReport",
    "ParameterError",
    "SimilarityBlock",
    "TokenCoord",
    "TraceStats",
    "VidcorrError",
    "__version__",
    "analytic_all_pairs_ops",
    "analytic_ops",
    "apply_frame_attention",
    "complexity_table",
    "corr_guided_attention",
    "feature_volume_bytes",
    "full_reference_trajectories",
    "gather_corr",
    "load_feature_volume",
    "load_latent_volume",
    "measured_ops",
    "merge_tokens",
    "normalize",
    "save_feature_volume",
    "similarity_adjacent",
    "similarity_full",
    "synthesize_moving_patch",
    "synthesize_volume",
    "top_k_argmax",
    "trace_trajectories",
    "traced_ops",
    "window_crop",
    "windowed_reference_trajectories",
]
