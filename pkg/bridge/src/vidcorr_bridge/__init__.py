"""In-process bindings exposing the vidcorr engine on caller-owned f32 buffers."""

from vidcorr import __version__

from .binding import (
    ArrayView,
    BridgeBoundaryError,
    ContiguityWarning,
    as_array_view,
    bridge_attend,
    bridge_trace,
)

__all__ = [
    "ArrayView",
    "BridgeBoundaryError",
    "ContiguityWarning",
    "__version__",
    "as_array_view",
    "bridge_attend",
    "bridge_trace",
]
