"""Shot splitting by colour-histogram cuts and the frame-discard heuristics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .imgcore import color_histogram
from .motionseg import chi2_distance


@dataclass(frozen=True)
class Shot:
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError("shot start after end")

    def __len__(self):
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class PruneParams:
    max_fg_fraction: float = 0.80
    min_fg_fraction: float = 0.10
    border_band_fraction: float = 0.05
    max_border_fg_fraction: float = 0.10
    binarize_threshold: float = 0.5

    def __post_init__(self):
        for name in ("max_fg_fraction", "min_fg_fraction", "border_band_fraction",
                     "max_border_fg_fraction", "binarize_threshold"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1)")
        if not self.min_fg_fraction < self.max_fg_fraction:
            raise ValueError("min_fg_fraction must be < max_fg_fraction")


def histogram_distance(a: np.ndarray, b: np.ndarray, bins: int = 16) -> float:
    """Chi-squared distance of per-channel histograms, averaged over channels, in [0, 1]."""
    everything = np.ones(a.shape[:2], bool)
    ha = color_histogram(a, everything, bins)
    hb = color_histogram(b, everything, bins)
    channels = ha.size // bins
    return float(chi2_distance(ha, hb)) / channels


def detect_shots(frames: Sequence[np.ndarray], hist_bins: int = 16,
                 cut_threshold: float = 0.3) -> list[Shot]:
    n = len(frames)
    if n == 0:
        raise ValueError("need at least one frame")
    cuts = [t + 1 for t in range(n - 1)
            if histogram_distance(frames[t], frames[t + 1], hist_bins) > cut_threshold]
    starts = [0] + cuts
    ends = [c - 1 for c in cuts] + [n - 1]
    return [Shot(s, e) for s, e in zip(starts, ends)]


def border_band(shape: tuple[int, int], band_fraction: float) -> np.ndarray:
    """Pixels within ``band_fraction * min(H, W)`` (at least one pixel) of any edge."""
    H, W = shape
    width = max(1, int(round(band_fraction * min(H, W))))
    band = np.zeros(shape, bool)
    band[:width] = band[-width:] = True
    band[:, :width] = band[:, -width:] = True
    return band


def prune_frame(prob: np.ndarray, params: PruneParams = PruneParams()) -> tuple[bool, str]:
    """Return ``(keep, reason)``; reason is the first failing rule or ``"ok"``."""
    fg = prob > params.binarize_threshold
    frac = fg.mean()
    if frac > params.max_fg_fraction:
        return False, "too_much_fg"
    if frac < params.min_fg_fraction:
        return False, "too_little_fg"
    band = border_band(fg.shape, params.border_band_fraction)
    if fg[band].mean() > params.max_border_fg_fraction:
        return False, "border_fg"
    return True, "ok"


def sample_stride(n: int) -> int:
    """Stride giving 5-10 frames from a run of ``n`` (fewer only when n < 5)."""
    if n <= 0:
        return 1
    stride = math.ceil(n / 10)
    return max(1, min(stride, n // 5)) if n >= 5 else 1


def sample_frames(indices: Sequence[int]) -> list[int]:
    return list(indices)[::sample_stride(len(indices))]


def format_prune_report(rows: Iterable[tuple[str, bool, str]]) -> str:
    return "".join(f"{fid} {'keep' if keep else 'discard'} {reason}\n" for fid, keep, reason in rows)


def parse_prune_report(text: str) -> list[tuple[str, bool, str]]:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        fid, decision, reason = line.split()
        rows.append((fid, decision == "keep", reason))
    return rows
