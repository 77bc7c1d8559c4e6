"""uNLC: motion saliency propagated over a pooled superpixel nearest-neighbour graph.

Per frame, flow-based saliency is averaged over SLIC superpixels. All
superpixels of a shot are then linked to their nearest neighbours in a joint
location / colour-histogram / HOG space, and saliency is smoothed over that
graph so evidence from frames where the object moves reaches frames where it
does not.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import imgcore
from .imgcore import BBox, DimensionError
from .optflow import FlowField, dominant_direction, flow_magnitude
from .superpixel import SuperpixelLabeling, paint, region_means, slic


@dataclass(frozen=True)
class SaliencyParams:
    static_motion_threshold: float = 1.0
    static_frame_fraction: float = 0.25
    angle_bins: int = 8

    def __post_init__(self):
        if not self.static_motion_threshold > 0:
            raise ValueError("static_motion_threshold must be > 0")
        if not 0 < self.static_frame_fraction < 1:
            raise ValueError("static_frame_fraction must be in (0, 1)")
        if self.angle_bins < 4:
            raise ValueError("angle_bins must be >= 4")


@dataclass(frozen=True)
class UNLCConfig:
    saliency: SaliencyParams = field(default_factory=SaliencyParams)
    slic_regions: int = 300
    slic_compactness: float = 10.0
    slic_iterations: int = 10
    hist_bins: int = 16
    hog_cells: int = 4
    hog_bins: int = 9
    k: int = 8
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    prop_iterations: int = 10
    damping: float = 0.5


@dataclass
class SuperpixelFeature:
    centroid: np.ndarray     # (x, y) in the unit square
    color_hist: np.ndarray
    hog: np.ndarray
    frame_index: int


@dataclass
class NNGraph:
    neighbors: np.ndarray    # (n, k) int, sorted by distance
    distances: np.ndarray    # (n, k)

    @property
    def node_count(self) -> int:
        return self.neighbors.shape[0]


@dataclass
class ShotSegmentation:
    probs: list[np.ndarray]
    labelings: list[SuperpixelLabeling] | None = None


# ---------------------------------------------------------------- saliency

def motion_saliency(flow: FlowField, params: SaliencyParams = SaliencyParams()) -> np.ndarray:
    """Per-pixel saliency in [0, 1] from one flow field.

    Mostly-static frames score magnitude against the 99th-percentile
    magnitude (floored at the motion threshold so sensor noise cannot be
    stretched to 1). Frames with widespread motion score each moving pixel by
    its angular deviation from the dominant direction, divided by pi.
    """
    mag = flow_magnitude(flow)
    moving = mag >= params.static_motion_threshold
    if moving.mean() < params.static_frame_fraction:
        scale = max(float(np.percentile(mag, 99)), params.static_motion_threshold)
        return np.clip(mag / scale, 0.0, 1.0)
    dom, _ = dominant_direction(flow, params.static_motion_threshold, params.angle_bins)
    ang = np.arctan2(flow.v, flow.u)
    dev = np.abs(np.angle(np.exp(1j * (ang - dom))))
    return np.where(moving, np.clip(dev / np.pi, 0.0, 1.0), 0.0)


def forward_warp(values: np.ndarray, flow: FlowField) -> np.ndarray:
    """Splat ``values`` along ``flow`` (nearest pixel, max on collisions)."""
    H, W = values.shape
    ys, xs = np.indices((H, W))
    ty = np.clip(np.rint(ys + flow.v).astype(int), 0, H - 1)
    tx = np.clip(np.rint(xs + flow.u).astype(int), 0, W - 1)
    out = np.zeros_like(values, dtype=np.float64)
    np.maximum.at(out, (ty.ravel(), tx.ravel()), values.ravel())
    return out


# ---------------------------------------------------------------- features

def _region_box(sl: tuple[slice, slice], min_side: int, H: int, W: int) -> BBox:
    y0, y1, x0, x1 = sl[0].start, sl[0].stop, sl[1].start, sl[1].stop

    def grow(lo, hi, limit):
        short = min_side - (hi - lo)
        if short > 0:
            lo -= short // 2
            hi += short - short // 2
            shift = max(0, -lo) - max(0, hi - limit)
            lo, hi = lo + shift, hi + shift
        return max(lo, 0), min(hi, limit)

    y0, y1 = grow(y0, y1, H)
    x0, x1 = grow(x0, x1, W)
    return BBox(x0, y0, x1 - x0, y1 - y0)


def superpixel_features(image: np.ndarray, labeling: SuperpixelLabeling, frame_index: int,
                        hist_bins: int = 16, hog_cells: int = 4,
                        hog_bins: int = 9) -> list[SuperpixelFeature]:
    """One feature per region: normalized centroid, colour histogram, HOG of its bounding box.

    Boxes narrower than the HOG cell grid are widened around their centre.
    """
    if image.shape[:2] != labeling.shape:
        raise DimensionError(f"image {image.shape[:2]} does not match labeling {labeling.shape}")
    H, W = labeling.shape
    if min(H, W) < hog_cells:
        raise DimensionError(f"frame smaller than the {hog_cells}x{hog_cells} HOG grid")
    gray = imgcore.to_gray(image)
    flat = labeling.labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(labeling.region_count + 1))
    boxes = ndimage.find_objects(labeling.labels + 1)
    feats = []
    for r in range(labeling.region_count):
        pix = order[bounds[r]:bounds[r + 1]]
        cx, cy = labeling.centroids[r]
        feats.append(SuperpixelFeature(
            centroid=np.array([(cx + 0.5) / W, (cy + 0.5) / H]),
            color_hist=imgcore.color_histogram(image, pix, hist_bins),
            hog=imgcore.hog_descriptor(gray, _region_box(boxes[r], hog_cells, H, W),
                                       hog_cells, hog_bins),
            frame_index=frame_index,
        ))
    return feats


# ---------------------------------------------------------------- graph

def chi2_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """0.5 * sum (a-b)^2 / (a+b) over the last axis, with 0/0 taken as 0."""
    num = (a - b) ** 2
    den = a + b
    return 0.5 * np.sum(np.divide(num, den, out=np.zeros(np.broadcast_shapes(num.shape, den.shape)),
                                  where=den > 0), axis=-1)


def _component_blocks(loc, col, hog, rows):
    d_loc = np.sqrt(np.sum((loc[rows, None, :] - loc[None, :, :]) ** 2, axis=-1))
    d_col = chi2_distance(col[rows, None, :], col[None, :, :])
    d_hog = np.sqrt(np.sum((hog[rows, None, :] - hog[None, :, :]) ** 2, axis=-1))
    return d_loc, d_col, d_hog


def build_nn_graph(features: Sequence[SuperpixelFeature], k: int = 8,
                   weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
                   normalize: bool = True, chunk: int = 128) -> NNGraph:
    """Exact k nearest neighbours under a weighted sum of three feature distances.

    With ``normalize`` each distance component is divided by its standard
    deviation over all ordered pairs of distinct nodes (components with zero
    spread are left as is), which puts location, colour and HOG on a common
    scale. Ties go to the lower node index.
    """
    n = len(features)
    if n < 2:
        raise ValueError(f"need at least 2 nodes for a neighbour graph, got {n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, n - 1)
    loc = np.stack([f.centroid for f in features]).astype(np.float64)
    col = np.stack([f.color_hist for f in features]).astype(np.float64)
    hog = np.stack([f.hog for f in features]).astype(np.float64)
    blocks = [np.arange(s, min(s + chunk, n)) for s in range(0, n, chunk)]

    scale = np.ones(3)
    if normalize:
        s1, s2 = np.zeros(3), np.zeros(3)
        for rows in blocks:
            for c, d in enumerate(_component_blocks(loc, col, hog, rows)):
                d[np.arange(rows.size), rows] = 0.0
                s1[c] += d.sum()
                s2[c] += (d ** 2).sum()
        m = n * (n - 1)
        var = np.maximum(s2 / m - (s1 / m) ** 2, 0.0)
        std = np.sqrt(var)
        scale = np.where(std > 1e-12, 1.0 / np.where(std > 1e-12, std, 1.0), 1.0)

    w = np.asarray(weights, dtype=np.float64) * scale
    nbrs = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    for rows in blocks:
        d_loc, d_col, d_hog = _component_blocks(loc, col, hog, rows)
        d = w[0] * d_loc + w[1] * d_col + w[2] * d_hog
        d[np.arange(rows.size), rows] = np.inf
        idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        nbrs[rows] = idx
        dists[rows] = np.take_along_axis(d, idx, axis=1)
    return NNGraph(nbrs, dists)


def propagate_saliency(graph: NNGraph, initial: np.ndarray, iterations: int = 10,
                       damping: float = 0.5) -> np.ndarray:
    """Neighbour voting: x <- (1 - damping) * x0 + damping * mean(x over neighbours)."""
    x0 = np.asarray(initial, dtype=np.float64)
    if x0.shape != (graph.node_count,):
        raise ValueError(f"initial has shape {x0.shape}, graph has {graph.node_count} nodes")
    if not 0.0 <= damping <= 1.0:
        raise ValueError("damping must be in [0, 1]")
    x = x0.copy()
    for _ in range(iterations):
        x = (1.0 - damping) * x0 + damping * x[graph.neighbors].mean(axis=1)
    return np.clip(x, 0.0, 1.0)


# ---------------------------------------------------------------- composition

def frame_saliencies(flows: Sequence[FlowField], n_frames: int,
                     params: SaliencyParams) -> list[np.ndarray]:
    """Saliency for each frame; the last frame reuses the final flow, splatted forward."""
    sal = [motion_saliency(f, params) for f in flows]
    sal.append(forward_warp(sal[-1], flows[-1]))
    return sal[:n_frames]


def unlc_segment(frames: Sequence[np.ndarray], flows: Sequence[FlowField],
                 config: UNLCConfig = UNLCConfig()) -> ShotSegmentation:
    if len(frames) < 2:
        raise ValueError("uNLC needs at least 2 frames")
    if len(flows) != len(frames) - 1:
        raise ValueError(f"expected {len(frames) - 1} flows for {len(frames)} frames, got {len(flows)}")
    for f, fl in zip(frames, flows):
        if f.shape[:2] != fl.shape:
            raise DimensionError("flow and frame sizes differ")

    saliency = frame_saliencies(flows, len(frames), config.saliency)
    labelings, feats, init = [], [], []
    for t, frame in enumerate(frames):
        lab = slic(frame, min(config.slic_regions, frame.shape[0] * frame.shape[1]),
                   config.slic_compactness, config.slic_iterations)
        labelings.append(lab)
        init.append(region_means(lab, saliency[t]))
        feats.extend(superpixel_features(frame, lab, t, config.hist_bins,
                                         config.hog_cells, config.hog_bins))

    graph = build_nn_graph(feats, config.k, config.weights)
    x = propagate_saliency(graph, np.concatenate(init), config.prop_iterations, config.damping)
    probs, start = [], 0
    for lab in labelings:
        probs.append(paint(lab, x[start:start + lab.region_count]))
        start += lab.region_count
    return ShotSegmentation(probs, labelings)


def save_segmentation(out_dir: str | os.PathLike, seg: ShotSegmentation, video: str,
                      frame_indices: Sequence[int]) -> Path:
    """Write ``<video>_<frame>.pgm`` per frame plus ``manifest.txt``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for prob, idx in zip(seg.probs, frame_indices):
        name = f"{video}_{idx:05d}.pgm"
        imgcore.write_prob(out_dir / name, prob)
        lines.append(f"{name}\t{video}\t{idx}")
    manifest = out_dir / "manifest.txt"
    manifest.write_text("".join(line + "\n" for line in lines))
    return manifest


def load_segmentation(manifest: str | os.PathLike) -> list[tuple[str, int, np.ndarray]]:
    manifest = Path(manifest)
    out = []
    for line in manifest.read_text().splitlines():
        name, video, idx = line.split("\t")
        out.append((video, int(idx), imgcore.read_prob(manifest.parent / name)))
    return out
