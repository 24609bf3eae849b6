"""Analytic and instrumented operation counts for the tracer.

Counts follow one convention throughout: scoring one candidate against one
query costs 2·d operations (a multiply and an add per channel), and top-K
selection is free. ``analytic_ops`` evaluates the closed-form cost of a
configuration; ``measured_ops`` runs the real tracer with its instrumentation
hooked up and reports both numbers side by side.

The closed forms:

    windowed, forward pass only     2 · d · (N-1) · H · W · l²
    windowed, forward + backward    twice the above (what the tracer does)
    full adjacent-frame search      2 · d · (N-1) · (H·W)²
    full all-pairs (every frame
    against every frame)            2 · d · (N·H·W)²
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .correspondence import TraceStats, trace_trajectories
from .errors import ParameterError
from .volume import FeatureVolume, normalize

REFERENCE_DIM = 320  # default channel count for the headline configurations


def _check_dims(n: int, h: int, w: int, d: int) -> None:
    if min(n, h, w, d) < 1:
        raise ParameterError(f"dimensions must be >= 1, got N={n} H={h} W={w} d={d}")


def analytic_ops(
    n: int, h: int, w: int, d: int, window: int | None, both_directions: bool = False
) -> int:
    """Closed-form multiply-add count for one tracer configuration.

    ``window=None`` gives the full adjacent-frame search cost, where a single
    similarity block per frame pair serves both chaining directions (the flag
    is ignored). A finite window must satisfy 1 <= window <= min(H, W); the
    default is the forward-pass cost, doubled when ``both_directions`` is set
    to match what the tracer actually computes.
    """
    _check_dims(n, h, w, d)
    if n < 2:
        raise ParameterError(f"need at least 2 frames, got {n}")
    if window is None:
        return 2 * d * (n - 1) * (h * w) ** 2
    if not 1 <= window <= min(h, w):
        raise ParameterError(
            f"window must lie in 1..min(H, W) = {min(h, w)} or be None for full, got {window}"
        )
    forward = 2 * d * (n - 1) * h * w * window * window
    return 2 * forward if both_directions else forward


def analytic_all_pairs_ops(n: int, h: int, w: int, d: int) -> int:
    """Multiply-add count of scoring every token against every token."""
    _check_dims(n, h, w, d)
    return 2 * d * (n * h * w) ** 2


def traced_ops(n: int, h: int, w: int, d: int, window: int | None) -> int:
    """The count the tracer itself performs for a configuration.

    Unlike :func:`analytic_ops` this accepts any window length and mirrors
    the engine's behavior: windows covering the whole frame collapse to the
    shared full-search block (so the count drops to the full formula), partly
    clamped windows shrink per axis, and finite windows pay for both chain
    directions.
    """
    _check_dims(n, h, w, d)
    if n < 2:
        raise ParameterError(f"need at least 2 frames, got {n}")
    if window is not None and window < 1:
        raise ParameterError(f"window must be >= 1 or None for full, got {window}")
    if window is None or (window >= h and window >= w):
        return 2 * d * (n - 1) * (h * w) ** 2
    return 2 * (2 * d * (n - 1) * h * w * min(window, h) * min(window, w))


@dataclass(frozen=True)
class OpCountReport:
    """Analytic vs instrumented counts for one tracer run."""

    frames: int
    height: int
    width: int
    dim: int
    window: int | None  # None = full search
    analytic_count: int
    measured_count: int | None = None
    peak_candidates: int | None = None

    @property
    def exact(self) -> bool:
        return self.measured_count == self.analytic_count

    def row(self) -> str:
        l_txt = "full" if self.window is None else str(self.window)
        meas = "-" if self.measured_count is None else str(self.measured_count)
        peak = "-" if self.peak_candidates is None else str(self.peak_candidates)
        return (
            f"N={self.frames} H={self.height} W={self.width} d={self.dim} l={l_txt}  "
            f"analytic={self.analytic_count} measured={meas} peak={peak}"
        )

    def to_json(self) -> str:
        payload = {
            "frames": self.frames,
            "height": self.height,
            "width": self.width,
            "dim": self.dim,
            "window": self.window,
            "analytic_count": self.analytic_count,
            "measured_count": self.measured_count,
            "peak_candidates": self.peak_candidates,
        }
        return json.dumps(payload, sort_keys=True)


def synthesize_volume(n: int, h: int, w: int, d: int, seed: int) -> FeatureVolume:
    """A normalized volume of seeded Gaussian tokens, for measurement runs."""
    _check_dims(n, h, w, d)
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n, h, w, d)).astype(np.float32)
    return normalize(FeatureVolume(data))


def measured_ops(
    n: int,
    h: int,
    w: int,
    d: int,
    window: int | None,
    k: int = 1,
    seed: int = 0,
    threads: int | None = None,
) -> OpCountReport:
    """Run the tracer on a synthesized volume and report measured vs analytic."""
    volume = synthesize_volume(n, h, w, d, seed)
    stats = TraceStats()
    trace_trajectories(volume, k, window=window, threads=threads, stats=stats)
    return OpCountReport(
        frames=n,
        height=h,
        width=w,
        dim=d,
        window=window,
        analytic_count=traced_ops(n, h, w, d, window),
        measured_count=stats.mul_add_count,
        peak_candidates=stats.peak_candidates,
    )


def complexity_table(
    n: int = 20,
    h: int = 64,
    w: int = 64,
    d: int = REFERENCE_DIM,
    windows: tuple[int | None, ...] = (3, 9, 15, None),
) -> list[OpCountReport]:
    """Analytic counts for a sweep of window lengths over one configuration."""
    return [
        OpCountReport(
            frames=n,
            height=h,
            width=w,
            dim=d,
            window=l,
            analytic_count=analytic_ops(n, h, w, d, l),
        )
        for l in windows
    ]
