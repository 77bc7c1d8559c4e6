"""SLIC superpixels with a connectivity-enforcing post-pass."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import DimensionError


@dataclass
class SuperpixelLabeling:
    labels: np.ndarray       # (H, W) int64, ids 0..region_count-1
    region_count: int
    centroids: np.ndarray    # (R, 2) as (x, y)
    sizes: np.ndarray        # (R,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "SuperpixelLabeling":
        labels = np.asarray(labels, dtype=np.int64)
        count = int(labels.max()) + 1
        sizes = np.bincount(labels.ravel(), minlength=count)
        if np.any(sizes == 0):
            raise ValueError("region ids must be contiguous from 0")
        ys, xs = np.indices(labels.shape)
        cx = np.bincount(labels.ravel(), weights=xs.ravel(), minlength=count) / sizes
        cy = np.bincount(labels.ravel(), weights=ys.ravel(), minlength=count) / sizes
        return cls(labels, count, np.stack([cx, cy], axis=1), sizes)


# ---- colour conversion

_SRGB_TO_XYZ = np.array([[0.4124564, 0.3575761, 0.1804375],
                         [0.2126729, 0.7151522, 0.0721750],
                         [0.0193339, 0.1191920, 0.9503041]])
_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """8-bit sRGB to CIELAB (D65), float64 (H, W, 3)."""
    c = image.astype(np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / _D65
    eps = (6 / 29) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6 / 29) ** 2) + 4 / 29)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


# ---- SLIC

def _grid_shape(H: int, W: int, target: int) -> tuple[int, int]:
    step = np.sqrt(H * W / target)
    ny = max(1, int(round(H / step)))
    nx = max(1, int(round(W / step)))
    return ny, nx


def slic(image: np.ndarray, target_regions: int = 300, compactness: float = 10.0,
         iterations: int = 10, color_space: str = "lab") -> SuperpixelLabeling:
    """Cluster pixels in (colour, position) space from a regular grid of seeds.

    Distance to a centre is ``d_color + compactness / S * d_xy`` with grid
    interval ``S = sqrt(pixels / target_regions)``; each centre only competes
    for pixels within ``2S`` of it. ``color_space="rgb"`` uses raw channel
    values, which keeps the distance symmetric under channel permutation.
    """
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    H, W = image.shape[:2]
    if not 1 <= target_regions <= H * W:
        raise ValueError(f"target_regions must be in [1, {H * W}], got {target_regions}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if color_space == "lab":
        feat = rgb_to_lab(image)
    elif color_space == "rgb":
        feat = image.astype(np.float64)
    else:
        raise ValueError(f"unknown color_space {color_space!r}")

    step = np.sqrt(H * W / target_regions)
    ny, nx = _grid_shape(H, W, target_regions)
    gy = (np.arange(ny) + 0.5) * H / ny
    gx = (np.arange(nx) + 0.5) * W / nx
    cy, cx = (a.ravel() for a in np.meshgrid(gy, gx, indexing="ij"))
    ccol = feat[np.minimum(cy.astype(int), H - 1), np.minimum(cx.astype(int), W - 1)]
    k = cy.size

    # start from the grid cells so pixels outside every search window stay labelled
    labels = (np.minimum((np.arange(H) * ny) // H, ny - 1)[:, None] * nx
              + np.minimum((np.arange(W) * nx) // W, nx - 1)[None, :])
    spatial_w = compactness / step
    reach = int(np.ceil(2 * step))
    ys_all, xs_all = np.indices((H, W))

    for _ in range(iterations):
        best = np.full((H, W), np.inf)
        for i in range(k):
            y0, y1 = max(int(cy[i]) - reach, 0), min(int(cy[i]) + reach + 1, H)
            x0, x1 = max(int(cx[i]) - reach, 0), min(int(cx[i]) + reach + 1, W)
            dc = np.sqrt(np.sum((feat[y0:y1, x0:x1] - ccol[i]) ** 2, axis=-1))
            ds = np.hypot(ys_all[y0:y1, x0:x1] - cy[i], xs_all[y0:y1, x0:x1] - cx[i])
            d = dc + spatial_w * ds
            win = best[y0:y1, x0:x1]
            closer = d < win
            win[closer] = d[closer]
            labels[y0:y1, x0:x1][closer] = i
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k)
        alive = counts > 0
        cy = np.where(alive, np.bincount(flat, ys_all.ravel(), k) / np.maximum(counts, 1), cy)
        cx = np.where(alive, np.bincount(flat, xs_all.ravel(), k) / np.maximum(counts, 1), cx)
        for c in range(3):
            mean = np.bincount(flat, feat[..., c].ravel(), k) / np.maximum(counts, 1)
            ccol[:, c] = np.where(alive, mean, ccol[:, c])

    min_size = max(1, int((H * W / target_regions) / 4))
    return SuperpixelLabeling.from_labels(enforce_connectivity(labels, min_size))


def _components(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Split every label into its 4-connected pieces; returns (component map, count)."""
    comp = np.zeros(labels.shape, dtype=np.int64)
    n = 0
    four = ndimage.generate_binary_structure(2, 1)
    for lab, sl in enumerate(ndimage.find_objects(labels + 1)):
        if sl is None:
            continue
        pieces, m = ndimage.label(labels[sl] == lab, structure=four)
        inside = pieces > 0
        comp[sl][inside] = pieces[inside] + n
        n += m
    return comp - 1, n


def enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Relabel so every region is 4-connected.

    Pieces smaller than ``min_size`` are merged, smallest first, into the
    neighbouring region sharing the longest boundary; other detached pieces
    become regions of their own. Ids are renumbered in raster order.
    """
    comp, n = _components(labels)
    sizes = np.bincount(comp.ravel(), minlength=n).astype(np.int64)

    # boundary lengths between adjacent components
    a = np.concatenate([comp[:, :-1].ravel(), comp[:-1, :].ravel()])
    b = np.concatenate([comp[:, 1:].ravel(), comp[1:, :].ravel()])
    diff = a != b
    pairs = np.stack([np.minimum(a[diff], b[diff]), np.maximum(a[diff], b[diff])], axis=1)
    adj: list[dict[int, int]] = [dict() for _ in range(n)]
    if pairs.size:
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        for (p, q), c in zip(uniq.tolist(), counts.tolist()):
            adj[p][q] = c
            adj[q][p] = c

    parent = np.arange(n)
    for c in sorted(range(n), key=lambda i: (sizes[i], i)):
        if parent[c] != c or sizes[c] >= min_size or not adj[c]:
            continue
        target = max(adj[c].items(), key=lambda kv: (kv[1], -kv[0]))[0]
        parent[c] = target
        sizes[target] += sizes[c]
        for other, length in adj[c].items():
            if other == target:
                continue
            adj[other].pop(c, None)
            adj[other][target] = adj[other].get(target, 0) + length
            adj[target][other] = adj[target].get(other, 0) + length
        adj[target].pop(c, None)
        adj[c] = {}

    root = parent.copy()
    while True:
        nxt = parent[root]
        if np.array_equal(nxt, root):
            break
        root = nxt
    merged = root[comp]
    _, first = np.unique(merged.ravel(), return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(n, dtype=np.int64)
    remap[np.unique(merged.ravel())[order]] = np.arange(order.size)
    return remap[merged]


def region_means(labeling: SuperpixelLabeling, values: np.ndarray) -> np.ndarray:
    if values.shape[:2] != labeling.shape:
        raise DimensionError(f"values {values.shape[:2]} do not match labeling {labeling.shape}")
    sums = np.bincount(labeling.labels.ravel(), weights=values.astype(np.float64).ravel(),
                       minlength=labeling.region_count)
    return sums / labeling.sizes


def paint(labeling: SuperpixelLabeling, per_region: np.ndarray) -> np.ndarray:
    """Broadcast one value per region back onto the pixel grid."""
    return np.asarray(per_region)[labeling.labels]


# ---- serialization: "W H R\n" then uint16 big-endian labels, row-major

def save_labeling(path: str | os.PathLike, labeling: SuperpixelLabeling) -> None:
    if labeling.region_count > 65536:
        raise ValueError("too many regions for a 16-bit grid")
    H, W = labeling.shape
    with open(path, "wb") as f:
        f.write(f"{W} {H} {labeling.region_count}\n".encode())
        f.write(labeling.labels.astype(">u2").tobytes())


def load_labeling(path: str | os.PathLike) -> SuperpixelLabeling:
    with open(path, "rb") as f:
        W, H, R = (int(t) for t in f.readline().split())
        labels = np.frombuffer(f.read(), dtype=">u2", count=W * H).reshape(H, W)
    out = SuperpixelLabeling.from_labels(labels.astype(np.int64))
    if out.region_count != R:
        raise ValueError(f"{path}: header says {R} regions, grid has {out.region_count}")
    return out
