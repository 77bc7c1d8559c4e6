"""Dense optical flow: coarse-to-fine Lucas-Kanade with iterative warping."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imgcore import DimensionError, read_pnm, write_pnm


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    iterations_per_level: int = 5
    window_radius: int = 2

    def __post_init__(self):
        for name in ("pyramid_levels", "iterations_per_level", "window_radius"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape


# smallest eigenvalue of the windowed structure tensor below which a pixel
# keeps the estimate propagated from the coarser level
_MIN_EIG = 1e-2

_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _pyr_down(img: np.ndarray) -> np.ndarray:
    blurred = ndimage.correlate1d(img, _BINOMIAL, axis=0, mode="nearest")
    blurred = ndimage.correlate1d(blurred, _BINOMIAL, axis=1, mode="nearest")
    return blurred[::2, ::2]


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        if min(pyr[-1].shape) < 32:
            break
        pyr.append(_pyr_down(pyr[-1]))
    return pyr


def _upsample_flow(f: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    zoom = (shape[0] / f.shape[0], shape[1] / f.shape[1])
    out = ndimage.zoom(f, zoom, order=1, mode="nearest", grid_mode=True)
    return out[:shape[0], :shape[1]]


def _lk_level(a: np.ndarray, b: np.ndarray, u: np.ndarray, v: np.ndarray,
              iterations: int, radius: int) -> tuple[np.ndarray, np.ndarray]:
    H, W = a.shape
    size = 2 * radius + 1
    ix = ndimage.correlate1d(a, [-0.5, 0.0, 0.5], axis=1, mode="nearest")
    iy = ndimage.correlate1d(a, [-0.5, 0.0, 0.5], axis=0, mode="nearest")
    sxx = ndimage.uniform_filter(ix * ix, size, mode="nearest")
    syy = ndimage.uniform_filter(iy * iy, size, mode="nearest")
    sxy = ndimage.uniform_filter(ix * iy, size, mode="nearest")
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    min_eig = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
    solvable = min_eig > _MIN_EIG
    safe_det = np.where(solvable, det, 1.0)

    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    for _ in range(iterations):
        warped = ndimage.map_coordinates(b, [yy + v, xx + u], order=1, mode="nearest")
        it = warped - a
        bx = ndimage.uniform_filter(ix * it, size, mode="nearest")
        by = ndimage.uniform_filter(iy * it, size, mode="nearest")
        du = -(syy * bx - sxy * by) / safe_det
        dv = -(sxx * by - sxy * bx) / safe_det
        # one linearized step cannot resolve more than the window extent
        step = np.hypot(du, dv)
        shrink = np.minimum(1.0, radius / np.maximum(step, 1e-12))
        du, dv = du * shrink, dv * shrink
        u = u + np.where(solvable, du, 0.0)
        v = v + np.where(solvable, dv, 0.0)
        # per-pixel windows are warped with their neighbours' flow; a small
        # median keeps that coupling from amplifying outliers
        u = ndimage.median_filter(u, size=3, mode="nearest")
        v = ndimage.median_filter(v, size=3, mode="nearest")
    return u, v


def dense_flow(frame_a: np.ndarray, frame_b: np.ndarray,
               params: FlowParams = FlowParams()) -> FlowField:
    """Per-pixel displacement taking ``frame_a`` onto ``frame_b``.

    ``frame_a[y, x]`` is matched with ``frame_b[y + v, x + u]``. Inputs are
    grayscale; convert RGB with :func:`moveseg.imgcore.to_gray` first.
    """
    if frame_a.shape != frame_b.shape:
        raise DimensionError(f"frame sizes differ: {frame_a.shape} vs {frame_b.shape}")
    if frame_a.ndim != 2:
        raise DimensionError("dense_flow expects grayscale frames")
    pa = _pyramid(frame_a.astype(np.float64), params.pyramid_levels)
    pb = _pyramid(frame_b.astype(np.float64), params.pyramid_levels)

    u = np.zeros(pa[-1].shape)
    v = np.zeros(pa[-1].shape)
    for level in range(len(pa) - 1, -1, -1):
        if u.shape != pa[level].shape:
            u = 2.0 * _upsample_flow(u, pa[level].shape)
            v = 2.0 * _upsample_flow(v, pa[level].shape)
        u, v = _lk_level(pa[level], pb[level], u, v,
                         params.iterations_per_level, params.window_radius)
    u = np.nan_to_num(u, nan=0.0, posinf=0.0, neginf=0.0)
    v = np.nan_to_num(v, nan=0.0, posinf=0.0, neginf=0.0)
    return FlowField(u, v)


def flow_magnitude(flow: FlowField) -> np.ndarray:
    return np.hypot(flow.u, flow.v)


def angle_bin(angles: np.ndarray, angle_bins: int) -> np.ndarray:
    """Index of the bin (width 2*pi/angle_bins, bin 0 centred on angle 0)."""
    width = 2.0 * np.pi / angle_bins
    return np.floor(np.mod(angles + width / 2, 2.0 * np.pi) / width).astype(int) % angle_bins


def dominant_direction(flow: FlowField, magnitude_floor: float = 0.5,
                       angle_bins: int = 8) -> tuple[float, float]:
    """Centre angle of the most populated direction bin and its share of moving pixels.

    Ties go to the lowest bin index. Returns ``(0.0, 0.0)`` when nothing moves.
    """
    if angle_bins < 4:
        raise ValueError("angle_bins must be >= 4")
    moving = flow_magnitude(flow) >= magnitude_floor
    n = int(moving.sum())
    if n == 0:
        return 0.0, 0.0
    angles = np.arctan2(flow.v[moving], flow.u[moving])
    counts = np.bincount(angle_bin(angles, angle_bins), minlength=angle_bins)
    best = int(np.argmax(counts))
    angle = best * 2.0 * np.pi / angle_bins
    if angle > np.pi:
        angle -= 2.0 * np.pi
    return float(angle), counts[best] / n


# ---- dump format: <stem>_u.pgm, <stem>_v.pgm, <stem>.flow
# value = q * scale + offset for q in 0..255

def _quantize(x: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(x.min()), float(x.max())
    scale = (hi - lo) / 255.0 if hi > lo else 1.0
    q = np.clip(np.floor((x - lo) / scale + 0.5), 0, 255).astype(np.uint8)
    return q, scale, lo


def save_flow(stem: str | os.PathLike, flow: FlowField) -> None:
    stem = Path(stem)
    H, W = flow.shape
    lines = [f"flow {W} {H}"]
    for name, comp in (("u", flow.u), ("v", flow.v)):
        q, scale, offset = _quantize(comp)
        write_pnm(stem.with_name(f"{stem.name}_{name}.pgm"), q)
        lines.append(f"{name} {scale!r} {offset!r}")
    stem.with_name(stem.name + ".flow").write_text("\n".join(lines) + "\n")


def load_flow(stem: str | os.PathLike) -> FlowField:
    stem = Path(stem)
    header = stem.with_name(stem.name + ".flow").read_text().split("\n")
    comps = {}
    for line in header[1:3]:
        name, scale, offset = line.split()
        q = read_pnm(stem.with_name(f"{stem.name}_{name}.pgm")).astype(np.float64)
        comps[name] = q * float(scale) + float(offset)
    return FlowField(comps["u"], comps["v"])
