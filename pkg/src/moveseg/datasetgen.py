"""Training crops, trimap targets, mask degradations and the on-disk dataset layout.

Layout of a dataset directory::

    images/<id>.ppm     w x w RGB crop
    targets/<id>.pgm    s x s trimap: 0 negative, 128 don't care, 255 positive
    gt/<id>.pgm         optional s x s clean mask (0/255), when ground truth is known
    manifest.tsv        id, video, frame, shot, seed (tab separated, sorted)
"""
from __future__ import annotations

import os
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import imgcore
from .imgcore import EmptyMaskError, dilate, erode, tight_bbox
from .shotprune import sample_frames

NEGATIVE, POSITIVE, DONT_CARE = 0, 1, 2
_TRIMAP_TO_U8 = np.array([0, 255, 128], np.uint8)


@dataclass(frozen=True)
class JitterParams:
    scale_range: tuple[float, float] = (0.8, 1.25)
    translate_range: float = 0.15
    context_pad: float = 0.25
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < min <= max")
        if self.translate_range < 0:
            raise ValueError("translate_range must be >= 0")
        if self.context_pad < 0:
            raise ValueError("context_pad must be >= 0")


@dataclass(frozen=True)
class TrimapParams:
    neg_threshold: float = 0.4
    pos_threshold: float = 0.7

    def __post_init__(self):
        if not 0 < self.neg_threshold < self.pos_threshold < 1:
            raise ValueError("need 0 < neg_threshold < pos_threshold < 1")


@dataclass
class Sample:
    image: np.ndarray        # (w, w, 3) uint8
    target: np.ndarray       # (s, s) trimap codes
    video: str
    frame: int
    shot: int = 0


# ---------------------------------------------------------------- crops

def crop_box(mask: np.ndarray, jitter: JitterParams) -> tuple[float, float, float, float]:
    """Square, jittered, context-padded box around ``mask``, clamped to the frame.

    Returns ``(x, y, w, h)`` in continuous pixel coordinates.
    """
    H, W = mask.shape
    box = tight_bbox(mask)
    cx, cy = box.x + box.w / 2, box.y + box.h / 2
    side = max(box.w, box.h) * (1 + 2 * jitter.context_pad)
    rng = np.random.default_rng(jitter.rng_seed)
    lo, hi = jitter.scale_range
    scale = np.exp(rng.uniform(np.log(lo), np.log(hi))) if hi > lo else lo
    side *= scale
    t = jitter.translate_range
    dx, dy = rng.uniform(-t, t, 2) * side if t > 0 else (0.0, 0.0)
    cx, cy = cx + dx, cy + dy

    def clamp(center, length, limit):
        if length >= limit:
            return 0.0, float(limit)
        start = min(max(center - length / 2, 0.0), limit - length)
        return start, length

    x0, bw = clamp(cx, side, W)
    y0, bh = clamp(cy, side, H)
    return x0, y0, bw, bh


def sample_crop(image: np.ndarray, prob: np.ndarray, jitter: JitterParams, w: int,
                fg_threshold: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """Crop ``image`` and ``prob`` around the object and resample both to w x w.

    The object is ``prob > fg_threshold``. The image is resampled bilinearly,
    the probability map by area averaging.
    """
    imgcore.check_same_shape(image, prob, "image and probability map")
    obj = prob > fg_threshold
    if not obj.any():
        raise EmptyMaskError("no pixel above the foreground threshold")
    box = crop_box(obj, jitter)
    crop_img = imgcore.resize_u8(image, box, w, w)
    crop_prob = np.clip(imgcore.area_resample(prob, box, w, w), 0.0, 1.0)
    return crop_img, crop_prob


def to_trimap(prob: np.ndarray, params: TrimapParams = TrimapParams()) -> np.ndarray:
    out = np.full(prob.shape, DONT_CARE, np.uint8)
    out[prob < params.neg_threshold] = NEGATIVE
    out[prob > params.pos_threshold] = POSITIVE
    return out


# ---------------------------------------------------------------- degradations

def degrade_boundary(mask: np.ndarray, kernel_size: int, rng_seed: int) -> np.ndarray:
    """Erode or dilate (fair seeded coin) with a square kernel."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    if np.random.default_rng(rng_seed).random() < 0.5:
        return erode(mask, kernel_size)
    return dilate(mask, kernel_size)


SIDES = ("left", "right", "top", "bottom")


def degrade_truncate(mask: np.ndarray, area_fraction: float, side: str | None = None,
                     rng_seed: int = 0) -> np.ndarray:
    """Zero a strip covering ``area_fraction`` of the bounding box from one side.

    The strip spans the full box height (left/right) or width (top/bottom);
    its thickness is the fraction of the perpendicular box extent, rounded.
    ``side=None`` draws the side from ``rng_seed``.
    """
    if not 0 <= area_fraction < 1:
        raise ValueError("area_fraction must be in [0, 1)")
    box = tight_bbox(mask)
    if side is None:
        side = SIDES[np.random.default_rng(rng_seed).integers(4)]
    out = mask.copy()
    if side in ("left", "right"):
        t = int(np.floor(area_fraction * box.w + 0.5))
        x0 = box.x if side == "left" else box.x + box.w - t
        out[box.y:box.y + box.h, x0:x0 + t] = False
    elif side in ("top", "bottom"):
        t = int(np.floor(area_fraction * box.h + 0.5))
        y0 = box.y if side == "top" else box.y + box.h - t
        out[y0:y0 + t, box.x:box.x + box.w] = False
    else:
        raise ValueError(f"unknown side {side!r}")
    return out


@dataclass(frozen=True)
class DegradeParams:
    mode: str = "none"           # none | boundary | truncate
    kernel_size: int = 5
    truncate_fraction: float = 0.25

    def __post_init__(self):
        if self.mode not in ("none", "boundary", "truncate"):
            raise ValueError(f"unknown degrade mode {self.mode!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and >= 1")
        if not 0 <= self.truncate_fraction < 1:
            raise ValueError("truncate_fraction must be in [0, 1)")


def degrade(mask: np.ndarray, params: DegradeParams, rng_seed: int) -> np.ndarray:
    if params.mode == "boundary":
        return degrade_boundary(mask, params.kernel_size, rng_seed)
    if params.mode == "truncate" and mask.any():
        return degrade_truncate(mask, params.truncate_fraction, None, rng_seed)
    return mask


# ---------------------------------------------------------------- dataset build

@dataclass(frozen=True)
class DatasetParams:
    w: int = 64
    s: int = 16
    seed: int = 0
    jitter: JitterParams = field(default_factory=JitterParams)
    trimap: TrimapParams = field(default_factory=TrimapParams)
    degrade: DegradeParams = field(default_factory=DegradeParams)
    sample_per_shot: bool = True


@dataclass
class FrameRecord:
    video: str
    frame: int
    shot: int
    image: np.ndarray
    prob: np.ndarray
    gt: np.ndarray | None = None


@dataclass(frozen=True, order=True)
class ManifestRow:
    video: str
    shot: int
    frame: int
    id: str
    seed: int


def sample_id(video: str, shot: int, frame: int) -> str:
    return f"{video}_{shot:03d}_{frame:05d}"


def sample_seed(seed: int, video: str, frame: int) -> int:
    entropy = [seed & 0xFFFFFFFF, zlib.crc32(video.encode()), frame]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def substream(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def make_sample(record: FrameRecord, params: DatasetParams, seed: int):
    """Crop, degrade and trimap one frame; returns (image, trimap, clean gt or None)."""
    img, label, gt = crop_and_label(record, params, seed)
    return img, to_trimap(label, params.trimap), gt


def crop_and_label(record: FrameRecord, params: DatasetParams, seed: int):
    """(w x w image, s x s label probability, s x s clean gt or None).

    Degradation acts on the full-frame label before cropping, so the crop box
    follows the degraded label just as it would follow a noisy pseudo label.
    """
    jitter = JitterParams(params.jitter.scale_range, params.jitter.translate_range,
                          params.jitter.context_pad, seed)
    fg = params.trimap.pos_threshold
    prob = record.prob
    if params.degrade.mode != "none":
        # independent stream: sharing the jitter seed would tie the coin to the crop scale
        prob = degrade(prob > 0.5, params.degrade, substream(seed, 1)).astype(np.float64)
    crop_img, crop_prob = sample_crop(record.image, prob, jitter, params.w, fg)
    label = imgcore.downsample_mask(crop_prob, params.s)
    gt = None
    if record.gt is not None:
        box = crop_box(prob > fg, jitter)
        gt_crop = imgcore.area_resample(record.gt.astype(np.float64), box, params.w, params.w)
        gt = imgcore.downsample_mask(gt_crop, params.s) > 0.5
    return crop_img, label, gt


def write_manifest(path: str | os.PathLike, rows: Iterable[ManifestRow]) -> None:
    lines = [f"{r.id}\t{r.video}\t{r.frame}\t{r.shot}\t{r.seed}\n" for r in sorted(rows)]
    Path(path).write_text("".join(lines))


def read_manifest(path: str | os.PathLike) -> list[ManifestRow]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line:
            continue
        sid, video, frame, shot, seed = line.split("\t")
        rows.append(ManifestRow(video, int(shot), int(frame), sid, int(seed)))
    return rows


def build_dataset(records: Sequence[FrameRecord], keep: dict[tuple[str, int], bool] | None,
                  out_dir: str | os.PathLike, params: DatasetParams = DatasetParams()
                  ) -> list[ManifestRow]:
    """Write one sample per kept (and per-shot sampled) frame; returns the manifest rows.

    ``keep`` maps ``(video, frame)`` to the prune decision; missing entries and
    ``keep=None`` count as kept.
    """
    out = Path(out_dir)
    for sub in ("images", "targets"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    keep = keep or {}
    kept = [r for r in records if keep.get((r.video, r.frame), True)]
    kept.sort(key=lambda r: (r.video, r.shot, r.frame))

    chosen: list[FrameRecord] = []
    if params.sample_per_shot:
        groups: dict[tuple[str, int], list[FrameRecord]] = {}
        for r in kept:
            groups.setdefault((r.video, r.shot), []).append(r)
        for key in sorted(groups):
            chosen.extend(sample_frames(groups[key]))
    else:
        chosen = kept

    rows = []
    for r in chosen:
        seed = sample_seed(params.seed, r.video, r.frame)
        try:
            img, target, gt = make_sample(r, params, seed)
        except EmptyMaskError:
            warnings.warn(f"{r.video} frame {r.frame}: no foreground to crop, skipped")
            continue
        sid = sample_id(r.video, r.shot, r.frame)
        imgcore.write_pnm(out / "images" / f"{sid}.ppm", img)
        imgcore.write_pnm(out / "targets" / f"{sid}.pgm", _TRIMAP_TO_U8[target])
        if gt is not None:
            (out / "gt").mkdir(exist_ok=True)
            imgcore.write_mask(out / "gt" / f"{sid}.pgm", gt)
        rows.append(ManifestRow(r.video, r.shot, r.frame, sid, seed))
    if not rows:
        warnings.warn("dataset is empty: every frame was pruned or had no foreground")
    write_manifest(out / "manifest.tsv", rows)
    return sorted(rows)


def subsample_dataset(rows: Sequence[ManifestRow], fraction: float, rng_seed: int
                      ) -> list[ManifestRow]:
    """Seeded uniform subset of ``round(fraction * n)`` rows, original order kept."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = len(rows)
    m = int(np.floor(fraction * n + 0.5))
    idx = np.sort(np.random.default_rng(rng_seed).choice(n, size=m, replace=False))
    return [rows[i] for i in idx]


def read_target(path: str | os.PathLike) -> np.ndarray:
    raw = imgcore.read_pnm(path)
    out = np.full(raw.shape, DONT_CARE, np.uint8)
    out[raw == 0] = NEGATIVE
    out[raw == 255] = POSITIVE
    return out


def load_dataset(out_dir: str | os.PathLike, rows: Sequence[ManifestRow] | None = None):
    """Load ``(images, targets, gts, rows)``; ``gts`` is None when no gt/ directory exists."""
    out = Path(out_dir)
    rows = read_manifest(out / "manifest.tsv") if rows is None else list(rows)
    images = np.stack([imgcore.read_pnm(out / "images" / f"{r.id}.ppm") for r in rows]) if rows else None
    targets = np.stack([read_target(out / "targets" / f"{r.id}.pgm") for r in rows]) if rows else None
    gts = None
    if rows and (out / "gt").is_dir():
        gts = np.stack([imgcore.read_mask(out / "gt" / f"{r.id}.pgm") for r in rows])
    return images, targets, gts, rows
