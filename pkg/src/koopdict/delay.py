"""Time-delay embedding of scalar series into fixed-width lag vectors.

Each output row is a verbatim window of the source series; windows that
would run off either end are dropped rather than padded, so a series of
length T yields exactly T - (window - 1) * lag rows.  Multi-channel data
is handled by embedding each channel separately and concatenating the
windows row-wise with :func:`stack_channels`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DelayConfig",
    "DelayVectorSeries",
    "delay_embed",
    "stack_channels",
    "check_takens_bound",
]


@dataclass(frozen=True)
class DelayConfig:
    """Window of ``window`` samples taken ``lag`` steps apart.

    ``centering`` fixes which source sample a row is anchored to: "causal"
    anchors at the window start, "centered" at its middle sample (and so
    needs an odd window).  The window contents are identical either way.
    """

    window: int = 5
    lag: int = 1
    centering: str = "centered"

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.lag < 1:
            raise ValueError(f"lag must be >= 1, got {self.lag}")
        if self.centering not in ("causal", "centered"):
            raise ValueError(f"centering must be 'causal' or 'centered', got {self.centering!r}")
        if self.centering == "centered" and self.window % 2 == 0:
            raise ValueError("centered windows need an odd window size")

    @property
    def span(self) -> int:
        """Number of source samples a window reaches past its first one."""
        return (self.window - 1) * self.lag

    @property
    def anchor_offset(self) -> int:
        """Index of the anchor sample relative to the window start."""
        if self.centering == "centered":
            return (self.window // 2) * self.lag
        return 0


@dataclass(frozen=True)
class DelayVectorSeries:
    """Rows of lagged windows: shape (T - span, window * channels)."""

    vectors: np.ndarray
    source_length: int
    config: DelayConfig
    channels: int = 1

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        expected_rows = self.source_length - self.config.span
        expected_width = self.config.window * self.channels
        if vectors.shape != (expected_rows, expected_width):
            raise ValueError(
                f"vectors shape {vectors.shape} does not match "
                f"({expected_rows}, {expected_width}) from source length "
                f"{self.source_length} and config {self.config}"
            )
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def n_rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def anchor_indices(self) -> np.ndarray:
        """Source index each row is anchored to."""
        return np.arange(self.n_rows) + self.config.anchor_offset


def delay_embed(series: np.ndarray, config: DelayConfig) -> DelayVectorSeries:
    """Embed a scalar series: row t is (y_t, y_{t+lag}, ..., y_{t+span})."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ValueError(f"expected a 1-D series, got shape {series.shape}")
    t_len = series.shape[0]
    n_rows = t_len - config.span
    if n_rows < 1:
        raise ValueError(
            f"series of length {t_len} is too short for window {config.window} "
            f"with lag {config.lag} (needs at least {config.span + 1} samples)"
        )
    idx = np.arange(n_rows)[:, None] + config.lag * np.arange(config.window)[None, :]
    return DelayVectorSeries(series[idx], t_len, config)


def stack_channels(series_list: Sequence[DelayVectorSeries]) -> DelayVectorSeries:
    """Concatenate several embeddings row-wise, first argument leftmost."""
    if not series_list:
        raise ValueError("need at least one series to stack")
    first = series_list[0]
    for s in series_list[1:]:
        if s.config != first.config:
            raise ValueError(f"mismatched delay configs: {s.config} vs {first.config}")
        if s.n_rows != first.n_rows:
            raise ValueError(f"mismatched row counts: {s.n_rows} vs {first.n_rows}")
    if len(series_list) == 1:
        return first
    vectors = np.hstack([s.vectors for s in series_list])
    channels = sum(s.channels for s in series_list)
    return DelayVectorSeries(vectors, first.source_length, first.config, channels)


def check_takens_bound(attractor_dim: float, window: int) -> bool:
    """Whether the window size clears the embedding-sufficiency bound
    window > 2 * attractor_dim.  Advisory only: a False result warns that
    the embedding may fail to be one-to-one, it never blocks a run."""
    if attractor_dim < 0:
        raise ValueError(f"attractor dimension must be >= 0, got {attractor_dim}")
    return window > 2.0 * attractor_dim
