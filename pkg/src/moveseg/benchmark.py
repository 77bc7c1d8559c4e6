"""Synthetic shapes benchmark: noisy-label training runs scored against clean ground truth.

Each scene is a random ellipse or rectangle on texture. A scene is cropped
exactly like a dataset frame; its training label may be degraded, while the
clean mask is kept for scoring.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datasetgen import DatasetParams, DegradeParams, FrameRecord, crop_and_label, sample_seed, to_trimap
from .evalmetrics import score
from .learner import DESK_LAYERS, TrainConfig, infer_mask, init_net, train
from .synth import shape_scene


@dataclass
class ShapesData:
    images: np.ndarray      # (n, w, w, 3) uint8
    targets: np.ndarray     # (n, s, s) trimap codes
    gt: np.ndarray          # (n, s, s) clean masks
    labels: np.ndarray      # (n, s, s) binarized training labels (possibly degraded)


def shapes_data(n: int, seed: int, params: DatasetParams = DatasetParams(),
                scene_size: int = 96) -> ShapesData:
    video = f"shapes{seed}"
    imgs, tgts, gts, labels = [], [], [], []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        image, mask = shape_scene(rng, scene_size)
        rec = FrameRecord(video, i, 0, image, mask.astype(np.float64), mask)
        img, label, gt = crop_and_label(rec, params, sample_seed(params.seed, video, i))
        imgs.append(img)
        tgts.append(to_trimap(label, params.trimap))
        gts.append(gt)
        labels.append(label > 0.5)
    return ShapesData(np.stack(imgs), np.stack(tgts), np.stack(gts), np.stack(labels))


@dataclass
class BenchmarkConfig:
    n_train: int = 1000
    n_test: int = 200
    w: int = 64
    s: int = 16
    seed: int = 0
    degrade: DegradeParams = field(default_factory=DegradeParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold: float = 0.5


@dataclass
class BenchmarkResult:
    net_iou: float
    label_iou: float
    clean_label_iou: float
    loss: list[float]
    seconds: float


def run_benchmark(cfg: BenchmarkConfig, train_data: ShapesData | None = None,
                  test_data: ShapesData | None = None) -> BenchmarkResult:
    """Train on (optionally degraded) labels, score the net on held-out clean masks.

    ``label_iou`` is the IoU of the binarized training labels against their own
    clean ground truth.
    """
    t0 = time.time()
    params = DatasetParams(w=cfg.w, s=cfg.s, seed=cfg.seed, degrade=cfg.degrade)
    if train_data is None:
        train_data = shapes_data(cfg.n_train, 2 * cfg.seed, params)
    if test_data is None:
        test_data = shapes_data(cfg.n_test, 2 * cfg.seed + 1,
                                DatasetParams(w=cfg.w, s=cfg.s, seed=cfg.seed))
    net = init_net(DESK_LAYERS, cfg.w, cfg.s, seed=cfg.seed)
    tc = cfg.train
    net, report = train(net, train_data.images, train_data.targets,
                        TrainConfig(tc.learning_rate, tc.momentum, tc.batch_size, tc.epochs, cfg.seed))
    pred = infer_mask(net, test_data.images, cfg.threshold)
    return BenchmarkResult(
        net_iou=score(list(pred), list(test_data.gt)).mean_iou,
        label_iou=score(list(train_data.labels), list(train_data.gt)).mean_iou,
        clean_label_iou=score(list(test_data.labels), list(test_data.gt)).mean_iou,
        loss=report.epoch_loss,
        seconds=time.time() - t0,
    )
