"""``moveseg <command> --config <path> [--in DIR] [--out DIR] [--seed N]``

Videos are frame directories: ``<root>/<video>/frames/00000.ppm ...`` with
optional ground truth in ``<root>/<video>/gt/00000.pgm``. Exit status is 0 on
success, 1 on a validation error and 2 on an I/O error.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from functools import partial
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import imgcore, synth
from .config import DEFAULTS, ConfigError, PipelineConfig, format_config, load_config
from .datasetgen import (FrameRecord, build_dataset, degrade, load_dataset, sample_seed,
                         substream)
from .evalmetrics import score, write_score_report
from .learner import forward, init_net, load_checkpoint, save_checkpoint, train
from .motionseg import ShotSegmentation, load_segmentation, save_segmentation, unlc_segment
from .optflow import dense_flow, save_flow
from .shotprune import detect_shots, format_prune_report, parse_prune_report, prune_frame
from .superpixel import save_labeling, slic


class InputError(OSError):
    pass


# ---------------------------------------------------------------- frame directories

def find_videos(root: Path) -> list[Path]:
    """Video directories under ``root`` (or ``root`` itself if it holds frames/)."""
    if not root.is_dir():
        raise InputError(f"input directory not found: {root}")
    if (root / "frames").is_dir():
        return [root]
    videos = sorted(p for p in root.iterdir() if (p / "frames").is_dir())
    if not videos:
        raise InputError(f"no <video>/frames directories under {root}")
    return videos


def frame_files(video: Path) -> list[tuple[int, Path]]:
    files = sorted((video / "frames").glob("*.ppm"))
    if not files:
        raise InputError(f"no .ppm frames in {video / 'frames'}")
    return [(int(f.stem), f) for f in files]


def read_frames(video: Path):
    indexed = frame_files(video)
    return [i for i, _ in indexed], [imgcore.read_pnm(f) for _, f in indexed]


def read_gt(video: Path, indices) -> list | None:
    gt_dir = video / "gt"
    if not gt_dir.is_dir():
        return None
    return [imgcore.read_mask(gt_dir / f"{i:05d}.pgm") for i in indices]


def pmap(fn, items, workers: int):
    """Ordered map, optionally over a process pool; the order never depends on timing."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with Pool(min(workers, len(items))) as pool:
        return pool.map(fn, items)


def to_gray_frames(frames):
    return [imgcore.to_gray(f) if f.ndim == 3 else f for f in frames]


# ---------------------------------------------------------------- commands

def _flow_video(video: Path, out: Path, cfg: PipelineConfig):
    indices, frames = read_frames(video)
    grays = to_gray_frames(frames)
    dest = out / video.name
    dest.mkdir(parents=True, exist_ok=True)
    for t in range(len(frames) - 1):
        save_flow(dest / f"flow_{indices[t]:05d}", dense_flow(grays[t], grays[t + 1], cfg.flow))
    return len(frames) - 1


def cmd_flow(cfg, src, out):
    n = pmap(partial(_flow_video, out=out, cfg=cfg), find_videos(src), cfg["workers"])
    print(f"wrote {sum(n)} flow fields")


def _superpixel_video(video: Path, out: Path, cfg: PipelineConfig):
    indices, frames = read_frames(video)
    dest = out / video.name
    dest.mkdir(parents=True, exist_ok=True)
    u = cfg.unlc
    for i, f in zip(indices, frames):
        save_labeling(dest / f"{i:05d}.lbl", slic(f, u.slic_regions, u.slic_compactness, u.slic_iterations))
    return len(frames)


def cmd_superpixel(cfg, src, out):
    n = pmap(partial(_superpixel_video, out=out, cfg=cfg), find_videos(src), cfg["workers"])
    print(f"wrote {sum(n)} labelings")


def _video_shots(frames, cfg):
    return detect_shots(frames, cfg["shots.hist_bins"], cfg["shots.cut_threshold"])


def _shots_video(video: Path, cfg: PipelineConfig):
    indices, frames = read_frames(video)
    return [(video.name, k, indices[s.start_frame], indices[s.end_frame])
            for k, s in enumerate(_video_shots(frames, cfg))]


def write_shots(path: Path, rows):
    path.write_text("".join(f"{v}\t{k}\t{a}\t{b}\n" for v, k, a, b in rows))


def read_shots(path: Path) -> dict[tuple[str, int], int]:
    """(video, frame) -> shot id."""
    out = {}
    for line in path.read_text().splitlines():
        if line:
            video, shot, start, end = line.split("\t")
            for i in range(int(start), int(end) + 1):
                out[video, i] = int(shot)
    return out


def cmd_shots(cfg, src, out):
    rows = [r for rs in pmap(partial(_shots_video, cfg=cfg), find_videos(src), cfg["workers"])
            for r in rs]
    out.mkdir(parents=True, exist_ok=True)
    write_shots(out / "shots.tsv", rows)
    print(f"{len(rows)} shots")


def _segment_video(video: Path, out: Path, cfg: PipelineConfig):
    indices, frames = read_frames(video)
    grays = to_gray_frames(frames)
    shots = _video_shots(frames, cfg)
    probs, kept_indices = [], []
    for s in shots:
        if len(s) < 2:
            warnings.warn(f"{video.name}: single-frame shot at frame {indices[s.start_frame]} skipped")
            continue
        span = range(s.start_frame, s.end_frame + 1)
        flows = [dense_flow(grays[t], grays[t + 1], cfg.flow) for t in span[:-1]]
        seg = unlc_segment([frames[t] for t in span], flows, cfg.unlc)
        probs += seg.probs
        kept_indices += [indices[t] for t in span]
    save_segmentation(out / video.name, ShotSegmentation(probs), video.name, kept_indices)
    return [(video.name, k, indices[s.start_frame], indices[s.end_frame]) for k, s in enumerate(shots)]


def cmd_segment(cfg, src, out):
    rows = [r for rs in pmap(partial(_segment_video, out=out, cfg=cfg), find_videos(src),
                             cfg["workers"]) for r in rs]
    write_shots(out / "shots.tsv", rows)
    print(f"segmented {len(rows)} shots")


def segment_manifests(seg_root: Path) -> list[Path]:
    if not seg_root.is_dir():
        raise InputError(f"segmentation directory not found: {seg_root}")
    manifests = sorted(seg_root.glob("*/manifest.txt"))
    if not manifests:
        raise InputError(f"no <video>/manifest.txt under {seg_root}")
    return manifests


def cmd_prune(cfg, src, out):
    params = cfg.prune
    if src.is_file() or (src.is_dir() and not list(src.glob("*/manifest.txt"))):
        # loose probability maps: one report line per file, id = file stem
        files = [src] if src.is_file() else sorted(src.glob("*.pgm"))
        if not files:
            raise InputError(f"no manifests or .pgm probability maps under {src}")
        items = [(f.stem, imgcore.read_prob(f)) for f in files]
    else:
        items = [(f"{video}_{idx:05d}", prob) for manifest in segment_manifests(src)
                 for video, idx, prob in load_segmentation(manifest)]
    rows = [(fid, *prune_frame(prob, params)) for fid, prob in items]
    out.mkdir(parents=True, exist_ok=True)
    (out / "prune.txt").write_text(format_prune_report(rows))
    print(f"{sum(k for _, k, _ in rows)} of {len(rows)} frames kept")


def _records_from_segments(cfg, frames_root: Path, seg_root: Path):
    shots_file = seg_root / "shots.tsv"
    shot_of = read_shots(shots_file) if shots_file.exists() else {}
    videos = {v.name: v for v in find_videos(frames_root)}
    records = []
    for manifest in segment_manifests(seg_root):
        for video, idx, prob in load_segmentation(manifest):
            if video not in videos:
                raise InputError(f"frames for video {video!r} not found under {frames_root}")
            vdir = videos[video]
            image = imgcore.read_pnm(vdir / "frames" / f"{idx:05d}.ppm")
            gt_path = vdir / "gt" / f"{idx:05d}.pgm"
            gt = imgcore.read_mask(gt_path) if gt_path.exists() else None
            records.append(FrameRecord(video, idx, shot_of.get((video, idx), 0), image, prob, gt))
    return records


def _records_from_gt(frames_root: Path):
    records = []
    for video in find_videos(frames_root):
        indices, frames = read_frames(video)
        gts = read_gt(video, indices)
        if gts is None:
            raise InputError(f"{video}: dataset.source = gt but no gt/ directory")
        for i, f, g in zip(indices, frames, gts):
            records.append(FrameRecord(video.name, i, 0, f, g.astype(np.float64), g))
    return records


def cmd_dataset(cfg, src, out):
    params = cfg.dataset
    if cfg["dataset.source"] == "gt":
        records = _records_from_gt(src)
        seg_root = None
    else:
        if not cfg["io.segments"]:
            raise ConfigError("io.segments (or --segments) is required when dataset.source = segments")
        seg_root = Path(cfg["io.segments"])
        records = _records_from_segments(cfg, src, seg_root)
    report = Path(cfg["io.prune_report"]) if cfg["io.prune_report"] else (
        seg_root / "prune.txt" if seg_root is not None else None)
    keep = None
    if report is not None and report.exists():
        decisions = {fid: k for fid, k, _ in parse_prune_report(report.read_text())}
        keep = {(r.video, r.frame): decisions.get(f"{r.video}_{r.frame:05d}", True) for r in records}
    elif cfg["io.prune_report"]:
        raise InputError(f"prune report not found: {report}")
    rows = build_dataset(records, keep, out, params)
    print(f"wrote {len(rows)} samples")


def cmd_degrade(cfg, src, out):
    params = cfg.degrade
    if not src.is_dir():
        raise InputError(f"mask directory not found: {src}")
    files = sorted(src.glob("*.pgm"))
    if not files:
        raise InputError(f"no .pgm masks in {src}")
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        mask = imgcore.read_mask(f)
        seed = substream(sample_seed(cfg["seed"], f.stem, 0), 1)
        imgcore.write_mask(out / f.name, degrade(mask, params, seed))
    print(f"degraded {len(files)} masks ({params.mode})")


def _load_dataset_or_fail(src: Path):
    if not (src / "manifest.tsv").exists():
        raise InputError(f"no manifest.tsv in {src}")
    images, targets, gts, rows = load_dataset(src)
    if not rows:
        raise ConfigError(f"dataset {src} is empty")
    return images, targets, gts, rows


def cmd_train(cfg, src, out):
    images, targets, _, _ = _load_dataset_or_fail(src)
    w, s = images.shape[1], targets.shape[1]
    net = init_net(cfg.layers, w, s, seed=cfg["seed"])
    net, report = train(net, images, targets, cfg.train)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", net)
    lines = ["epoch\tloss\tpositives\tnegatives"]
    lines += [f"{e + 1}\t{l:.6f}\t{p}\t{n}" for e, (l, p, n) in
              enumerate(zip(report.epoch_loss, report.positives, report.negatives))]
    (out / "loss.tsv").write_text("\n".join(lines) + "\n")
    print(f"trained {len(report.epoch_loss)} epochs, final loss {report.epoch_loss[-1]:.4f}"
          if report.epoch_loss else "trained 0 epochs")


def _checkpoint(cfg, out: Path) -> Path:
    path = Path(cfg["io.checkpoint"]) if cfg["io.checkpoint"] else out / "model.ckpt"
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    return path


def cmd_eval(cfg, src, out):
    images, targets, gts, rows = _load_dataset_or_fail(src)
    net = load_checkpoint(_checkpoint(cfg, out))
    pred = list(forward(net, images) > cfg["infer.threshold"])
    labels = list(targets == 1)
    reference = list(gts) if gts is not None else labels
    scores = {"net": score(pred, reference)}
    if gts is not None:
        scores["labels"] = score(labels, reference)
    out.mkdir(parents=True, exist_ok=True)
    write_score_report(out / "scores.tsv", [r.id for r in rows], scores)
    print("  ".join(f"{k}: iou {v.mean_iou:.4f}" for k, v in scores.items()))


def cmd_infer(cfg, src, out):
    ckpt = Path(cfg["io.checkpoint"]) if cfg["io.checkpoint"] else None
    if ckpt is None or not ckpt.exists():
        raise InputError(f"checkpoint not found: {ckpt or '(set io.checkpoint or --checkpoint)'}")
    net = load_checkpoint(ckpt)
    files = sorted(src.glob("*.ppm")) if src.is_dir() else [src]
    if not files or not files[0].exists():
        raise InputError(f"no .ppm images at {src}")
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        img = imgcore.read_pnm(f)
        if img.shape[:2] != (net.w, net.w):
            img = imgcore.resize_u8(img, (0, 0, img.shape[1], img.shape[0]), net.w, net.w)
        prob = forward(net, img)
        imgcore.write_prob(out / f"{f.stem}_prob.pgm", prob)
        imgcore.write_mask(out / f"{f.stem}_mask.pgm", prob > cfg["infer.threshold"])
    print(f"inferred {len(files)} masks")


def cmd_synth(cfg, src, out):
    out.mkdir(parents=True, exist_ok=True)
    n = cfg["synth.count"]
    for k in range(n):
        seed = cfg["seed"] * 100003 + k
        if cfg["synth.kind"] == "squares":
            frames, masks = synth.moving_square_video(seed, cfg["synth.size"], cfg["synth.frames"],
                                                      cfg["synth.speed"], cfg["synth.fg_fraction"],
                                                      static=cfg["synth.static"])
            name = f"square{k:03d}"
        else:
            rng = np.random.default_rng([cfg["seed"], k])
            frames, masks = [], []
            for _ in range(cfg["synth.frames"]):
                img, m = synth.shape_scene(rng, cfg["synth.size"])
                frames.append(img)
                masks.append(m)
            name = f"shapes{k:03d}"
        for sub in ("frames", "gt"):
            (out / name / sub).mkdir(parents=True, exist_ok=True)
        for t, (f, m) in enumerate(zip(frames, masks)):
            imgcore.write_pnm(out / name / "frames" / f"{t:05d}.ppm", f)
            imgcore.write_mask(out / name / "gt" / f"{t:05d}.pgm", m)
    print(f"wrote {n} synthetic videos")


def overlay(image: np.ndarray, mask: np.ndarray, color=(255, 0, 0), alpha: float = 0.5) -> np.ndarray:
    """Blend ``color`` into ``image`` over ``mask`` (bool, or probability > 0.5)."""
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    imgcore.check_same_shape(image[..., 0], mask, "image and mask")
    fg = mask if mask.dtype == bool else mask > 0.5
    out = image.astype(np.float64)
    out[fg] = (1 - alpha) * out[fg] + alpha * np.asarray(color, np.float64)
    return np.floor(out + 0.5).astype(np.uint8)


def cmd_overlay(cfg, src, out):
    if not cfg["io.mask"]:
        raise ConfigError("io.mask (or --mask) is required for overlay")
    for p in (src, Path(cfg["io.mask"])):
        if not p.is_file():
            raise InputError(f"file not found: {p}")
    image = imgcore.read_pnm(src)
    raw = imgcore.read_pnm(cfg["io.mask"])
    mask = raw >= 128 if raw.ndim == 2 else raw[..., 0] >= 128
    result = overlay(image, mask, cfg.overlay_color)
    target = out if out.suffix == ".ppm" else out / f"{src.stem}_overlay.ppm"
    target.parent.mkdir(parents=True, exist_ok=True)
    imgcore.write_pnm(target, result)
    print(f"wrote {target}")


COMMANDS = {
    "flow": cmd_flow, "superpixel": cmd_superpixel, "segment": cmd_segment, "shots": cmd_shots,
    "prune": cmd_prune, "dataset": cmd_dataset, "degrade": cmd_degrade, "train": cmd_train,
    "eval": cmd_eval, "infer": cmd_infer, "synth": cmd_synth, "overlay": cmd_overlay,
}
FLAG_KEYS = {"segments": "io.segments", "prune": "io.prune_report", "checkpoint": "io.checkpoint",
             "mask": "io.mask", "workers": "workers"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moveseg", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS) + ["defaults"])
    ap.add_argument("--config", help="flat key = value config file (defaults if omitted)")
    ap.add_argument("--in", dest="src", help="primary input directory or file")
    ap.add_argument("--out", help="output directory (or file for overlay)")
    ap.add_argument("--seed", type=int, help="global seed (overrides the config)")
    ap.add_argument("--segments", help="segmentation directory for dataset (io.segments)")
    ap.add_argument("--prune", help="prune report for dataset (io.prune_report)")
    ap.add_argument("--checkpoint", help="model checkpoint for eval/infer (io.checkpoint)")
    ap.add_argument("--mask", help="mask or probability map for overlay (io.mask)")
    ap.add_argument("--workers", type=int, help="worker processes (workers)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()
                     if getattr(args, flag) is not None}
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = load_config(args.config, overrides)
        if args.command == "defaults":
            sys.stdout.write(format_config(DEFAULTS))
            return 0
        needs_in = args.command != "synth"
        if needs_in and not args.src:
            raise ConfigError(f"{args.command} needs --in")
        if not args.out:
            raise ConfigError(f"{args.command} needs --out")
        COMMANDS[args.command](cfg, Path(args.src) if args.src else None, Path(args.out))
        return 0
    except OSError as e:
        print(f"moveseg: I/O error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"moveseg: validation error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
