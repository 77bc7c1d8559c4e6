"""Raster primitives shared by every stage of the pipeline.

Rasters are plain numpy arrays:

* 8-bit images are ``uint8`` arrays of shape ``(H, W)`` or ``(H, W, 3)``,
* probability maps are ``float64`` arrays of shape ``(H, W)`` with values in [0, 1],
* binary masks are ``bool`` arrays of shape ``(H, W)``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class EmptyMaskError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"bbox must be at least 1x1, got {self.w}x{self.h}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "rasters") -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionError(f"{what} differ in size: {a.shape[:2]} vs {b.shape[:2]}")


def to_gray(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance as uint8; grayscale input passes through."""
    if image.ndim == 2:
        return image
    rgb = image.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def tight_bbox(mask: np.ndarray) -> BBox:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixel")
    return BBox(int(cols[0]), int(rows[0]),
                int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


# ---------------------------------------------------------------- descriptors

def color_histogram(image: np.ndarray, region, bins_per_channel: int = 16) -> np.ndarray:
    """Per-channel histograms over ``region``, each block L1-normalized, concatenated.

    ``region`` is anything that indexes the flattened pixel grid: a boolean
    mask of shape (H, W) or an array of flat pixel indices.
    """
    if bins_per_channel < 1:
        raise ValueError("bins_per_channel must be >= 1")
    pixels = image.reshape(image.shape[0] * image.shape[1], -1)
    region = np.asarray(region)
    if region.dtype == bool:
        region = np.flatnonzero(region.ravel())
    if region.size == 0:
        raise EmptyMaskError("empty region")
    values = pixels[region].astype(np.int64)
    bins = values * bins_per_channel // 256
    out = np.empty((values.shape[1], bins_per_channel))
    for c in range(values.shape[1]):
        out[c] = np.bincount(bins[:, c], minlength=bins_per_channel)
    out /= values.shape[0]
    return out.ravel()


def _cell_edges(length: int, cells: int) -> np.ndarray:
    return np.linspace(0, length, cells + 1).round().astype(int)


def hog_descriptor(gray: np.ndarray, bbox: BBox, cell_grid: int = 4,
                   orientation_bins: int = 9, eps: float = 1e-6) -> np.ndarray:
    """Unsigned-orientation HOG over ``bbox`` with 2x2-cell L2-normalized blocks.

    Gradients are central differences over the full image (one-sided at the
    image border), so a region's descriptor follows the image under translation.
    Output length is ``(cell_grid - 1)**2 * 4 * orientation_bins`` (or
    ``orientation_bins`` when ``cell_grid == 1``).
    """
    if gray.ndim != 2:
        raise DimensionError("hog_descriptor expects a grayscale raster")
    H, W = gray.shape
    if (bbox.w < cell_grid or bbox.h < cell_grid or bbox.x < 0 or bbox.y < 0
            or bbox.x + bbox.w > W or bbox.y + bbox.h > H):
        raise ValueError(f"degenerate HOG region {bbox} for {cell_grid}x{cell_grid} cells in {W}x{H}")

    # one pixel of context on each side so interior gradients see real neighbours
    y0, y1 = max(bbox.y - 1, 0), min(bbox.y + bbox.h + 1, H)
    x0, x1 = max(bbox.x - 1, 0), min(bbox.x + bbox.w + 1, W)
    patch = gray[y0:y1, x0:x1].astype(np.float64)
    gy = np.gradient(patch, axis=0) if patch.shape[0] > 1 else np.zeros_like(patch)
    gx = np.gradient(patch, axis=1) if patch.shape[1] > 1 else np.zeros_like(patch)
    sl = (slice(bbox.y - y0, bbox.y - y0 + bbox.h), slice(bbox.x - x0, bbox.x - x0 + bbox.w))
    gx, gy = gx[sl], gy[sl]

    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    idx = np.minimum((ang / (np.pi / orientation_bins)).astype(int), orientation_bins - 1)

    ye, xe = _cell_edges(bbox.h, cell_grid), _cell_edges(bbox.w, cell_grid)
    cells = np.zeros((cell_grid, cell_grid, orientation_bins))
    for i in range(cell_grid):
        for j in range(cell_grid):
            m = mag[ye[i]:ye[i + 1], xe[j]:xe[j + 1]].ravel()
            b = idx[ye[i]:ye[i + 1], xe[j]:xe[j + 1]].ravel()
            cells[i, j] = np.bincount(b, weights=m, minlength=orientation_bins)

    if cell_grid == 1:
        blocks = [cells[0, 0]]
    else:
        blocks = [cells[i:i + 2, j:j + 2].ravel()
                  for i in range(cell_grid - 1) for j in range(cell_grid - 1)]
    out = []
    for block in blocks:
        norm = np.sqrt(np.sum(block ** 2) + eps ** 2)
        # zero-gradient blocks stay exactly zero
        out.append(block / norm if norm > eps else np.zeros_like(block))
    return np.concatenate(out)


# ---------------------------------------------------------------- morphology

def _check_kernel(kernel_size: int) -> None:
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")


def erode(mask: np.ndarray, kernel_size: int) -> np.ndarray:
    _check_kernel(kernel_size)
    if kernel_size == 1:
        return mask.astype(bool)
    se = np.ones((kernel_size, kernel_size), dtype=bool)
    return ndimage.binary_erosion(mask, structure=se, border_value=0)


def dilate(mask: np.ndarray, kernel_size: int) -> np.ndarray:
    _check_kernel(kernel_size)
    if kernel_size == 1:
        return mask.astype(bool)
    se = np.ones((kernel_size, kernel_size), dtype=bool)
    return ndimage.binary_dilation(mask, structure=se, border_value=0)


# ---------------------------------------------------------------- resampling

def area_weights(src_len: int, start: float, length: float, out_len: int) -> np.ndarray:
    """(out_len, src_len) matrix averaging the source interval [start, start+length).

    Row i holds the fractional overlap of source pixel j with output cell i,
    divided by the cell length, so every row sums to 1 when the interval lies
    inside the source.
    """
    edges = start + length * np.arange(out_len + 1) / out_len
    lo = np.maximum(edges[:-1, None], np.arange(src_len)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(1, src_len + 1)[None, :])
    return np.clip(hi - lo, 0.0, None) / (length / out_len)


def area_resample(values: np.ndarray, box: tuple[float, float, float, float],
                  out_h: int, out_w: int) -> np.ndarray:
    """Area-average resample of a real (H, W) raster restricted to ``box = (x, y, w, h)``."""
    x, y, w, h = box
    ay = area_weights(values.shape[0], y, h, out_h)
    ax = area_weights(values.shape[1], x, w, out_w)
    # drop accumulated rounding so exact averages (0.25, 1.0, ...) come out exact
    return np.round(ay @ values.astype(np.float64) @ ax.T, 12)


def bilinear_resample(image: np.ndarray, box: tuple[float, float, float, float],
                      out_h: int, out_w: int) -> np.ndarray:
    """Sample ``image`` bilinearly at the pixel centres of an (out_h, out_w) grid over ``box``.

    Returns float64; sample positions outside the image clamp to the edge.
    """
    x, y, w, h = box
    H, W = image.shape[:2]
    ys = np.clip(y + (np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, H - 1)
    xs = np.clip(x + (np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, W - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    img = image.astype(np.float64)
    if img.ndim == 3:
        fy, fx = fy[..., None], fx[..., None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_u8(image: np.ndarray, box, out_h: int, out_w: int) -> np.ndarray:
    out = bilinear_resample(image, box, out_h, out_w)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def downsample_mask(mask: np.ndarray, s: int) -> np.ndarray:
    """Area-average a mask (or probability map) onto an s x s grid."""
    if s < 1:
        raise ValueError("s must be >= 1")
    H, W = mask.shape
    return np.clip(area_resample(mask.astype(np.float64), (0, 0, W, H), s, s), 0.0, 1.0)


# ---------------------------------------------------------------- PNM I/O

def _read_header(buf: bytes, ntokens: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < ntokens:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte after maxval


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    (magic, w, h, maxval), offset = _read_header(buf, 4)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM type {magic!r}")
    if int(maxval) != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    w, h = int(w), int(h)
    channels = 3 if magic == b"P6" else 1
    n = w * h * channels
    data = np.frombuffer(buf, dtype=np.uint8, count=n, offset=offset)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape).copy()


def write_pnm(path: str | os.PathLike, image: np.ndarray) -> None:
    if image.dtype != np.uint8:
        raise TypeError("write_pnm expects uint8 data")
    if image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    elif image.ndim == 2:
        magic = b"P5"
    else:
        raise DimensionError(f"cannot write raster of shape {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(np.ascontiguousarray(image).tobytes())


def mask_to_u8(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 255, 0).astype(np.uint8)


def prob_to_u8(prob: np.ndarray) -> np.ndarray:
    return np.floor(255.0 * np.clip(prob, 0.0, 1.0) + 0.5).astype(np.uint8)


def write_mask(path, mask: np.ndarray) -> None:
    write_pnm(path, mask_to_u8(mask))


def read_mask(path) -> np.ndarray:
    return read_pnm(path) >= 128


def write_prob(path, prob: np.ndarray) -> None:
    write_pnm(path, prob_to_u8(prob))


def read_prob(path) -> np.ndarray:
    return read_pnm(path).astype(np.float64) / 255.0
