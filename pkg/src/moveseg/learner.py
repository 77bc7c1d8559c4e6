"""Small convolutional mask predictor trained with the masked (trimap) logistic loss.

Pure numpy, float64 throughout. The network maps a w x w RGB crop to an
s x s probability map: conv/relu stack, optional average pooling, one fully
connected layer with s*s outputs and an elementwise sigmoid.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .datasetgen import DONT_CARE, NEGATIVE, POSITIVE

EPS = 1e-7
MAGIC = "moveseg-segnet 1"


# ---------------------------------------------------------------- architecture

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int = 3
    stride: int = 2

    def spec(self):
        return f"conv:{self.out_channels}:{self.kernel}:{self.stride}"


@dataclass(frozen=True)
class ReLU:
    def spec(self):
        return "relu"


@dataclass(frozen=True)
class AvgPool:
    size: int = 2

    def spec(self):
        return f"avgpool:{self.size}"


def parse_layers(text: str) -> tuple:
    layers = []
    for tok in text.split():
        name, *args = tok.split(":")
        if name == "conv":
            layers.append(Conv(*map(int, args)))
        elif name == "relu":
            layers.append(ReLU())
        elif name == "avgpool":
            layers.append(AvgPool(*map(int, args)))
        else:
            raise ValueError(f"unknown layer spec {tok!r}")
    return tuple(layers)


DESK_LAYERS = (Conv(8), ReLU(), Conv(16), ReLU(), Conv(32), ReLU())


@dataclass
class SegNet:
    layers: tuple
    w: int
    s: int
    params: list[np.ndarray]
    seed: int = 0

    @property
    def param_names(self) -> list[str]:
        names = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                names += [f"conv{i}.weight", f"conv{i}.bias"]
        return names + ["fc.weight", "fc.bias"]

    def copy(self) -> "SegNet":
        return SegNet(self.layers, self.w, self.s, [p.copy() for p in self.params], self.seed)


def _out_size(n: int, k: int, stride: int) -> int:
    return (n + 2 * (k // 2) - k) // stride + 1


def feature_shape(layers, w: int) -> tuple[int, int, int]:
    c, h = 3, w
    for layer in layers:
        if isinstance(layer, Conv):
            c, h = layer.out_channels, _out_size(h, layer.kernel, layer.stride)
        elif isinstance(layer, AvgPool):
            if h % layer.size:
                raise ValueError(f"pooling {layer.size} does not divide feature side {h}")
            h //= layer.size
        if h < 1:
            raise ValueError("network reduces the input below one pixel")
    return c, h, h


def init_net(layers=DESK_LAYERS, w: int = 64, s: int = 16, seed: int = 0,
             zero_final: bool = False) -> SegNet:
    """Seeded uniform fan-in initialization (He-uniform for convs, variance 1/fan_in for fc)."""
    rng = np.random.default_rng(seed)
    params = []
    c = 3
    for layer in layers:
        if isinstance(layer, Conv):
            fan_in = c * layer.kernel ** 2
            lim = np.sqrt(6.0 / fan_in)
            params.append(rng.uniform(-lim, lim, (layer.out_channels, c, layer.kernel, layer.kernel)))
            params.append(np.zeros(layer.out_channels))
            c = layer.out_channels
    fan_in = int(np.prod(feature_shape(layers, w)))
    if zero_final:
        params.append(np.zeros((fan_in, s * s)))
    else:
        lim = np.sqrt(3.0 / fan_in)
        params.append(rng.uniform(-lim, lim, (fan_in, s * s)))
    params.append(np.zeros(s * s))
    return SegNet(tuple(layers), w, s, params, seed)


# ---------------------------------------------------------------- forward / backward

def _pad(x, p):
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x


def _im2col(x, k, stride):
    """(N, C, H, W) -> (N*Ho*Wo, C*k*k) with 'same'-style zero padding."""
    xp = _pad(x, k // 2)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k), ho, wo


def _col2im(dcol, shape, k, stride, ho, wo):
    n, c, h, w = shape
    p = k // 2
    d = dcol.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += d[:, :, i, j]
    return dxp[:, :, p:p + h, p:p + w]


def preprocess(images: np.ndarray) -> np.ndarray:
    """uint8 (N, w, w, 3) -> float64 (N, 3, w, w), per-image channel means removed.

    Removing the image's own colour cast leaves contrast, which is what
    separates an object from its surroundings.
    """
    x = images.astype(np.float64).transpose(0, 3, 1, 2) / 255.0
    return x - x.mean(axis=(2, 3), keepdims=True)


def _check_images(net: SegNet, images: np.ndarray) -> np.ndarray:
    if images.ndim == 3:
        images = images[None]
    if images.shape[1:] != (net.w, net.w, 3):
        raise ValueError(f"expected images of shape ({net.w}, {net.w}, 3), got {images.shape[1:]}")
    return images


def _forward(net: SegNet, x: np.ndarray):
    cache = []
    pi = 0
    for layer in net.layers:
        if isinstance(layer, Conv):
            W, b = net.params[pi], net.params[pi + 1]
            col, ho, wo = _im2col(x, layer.kernel, layer.stride)
            out = col @ W.reshape(W.shape[0], -1).T + b
            cache.append((x.shape, col, ho, wo))
            x = out.reshape(x.shape[0], ho, wo, -1).transpose(0, 3, 1, 2)
            pi += 2
        elif isinstance(layer, ReLU):
            cache.append(x > 0)
            x = np.maximum(x, 0.0)
        else:
            n, c, h, w = x.shape
            k = layer.size
            cache.append(None)
            x = x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))
    feats = x.reshape(x.shape[0], -1)
    z = feats @ net.params[-2] + net.params[-1]
    return z, feats, cache


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(net: SegNet, images: np.ndarray) -> np.ndarray:
    """Probability maps, shape (s, s) for one image or (N, s, s) for a batch."""
    single = images.ndim == 3
    x = preprocess(_check_images(net, images))
    z, _, _ = _forward(net, x)
    p = _sigmoid(z).reshape(-1, net.s, net.s)
    return p[0] if single else p


def masked_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, dict[str, int]]:
    """Summed cross-entropy over positive and negative pixels; dont_care is ignored."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    p = np.clip(pred, EPS, 1 - EPS)
    pos = target == POSITIVE
    neg = target == NEGATIVE
    loss = -np.log(p[pos]).sum() - np.log1p(-p[neg]).sum()
    counts = {"positive": int(pos.sum()), "negative": int(neg.sum()),
              "dont_care": int((target == DONT_CARE).sum())}
    return float(loss), counts


def _loss_and_grads(net: SegNet, images: np.ndarray, targets: np.ndarray):
    """Summed loss over the batch and gradients of that sum."""
    x = preprocess(images)
    z, feats, cache = _forward(net, x)
    p = _sigmoid(z)
    t = targets.reshape(len(targets), -1)
    pos, neg = t == POSITIVE, t == NEGATIVE
    pc = np.clip(p, EPS, 1 - EPS)
    loss = float(-np.log(pc[pos]).sum() - np.log1p(-pc[neg]).sum())
    active = (p > EPS) & (p < 1 - EPS)       # clamped pixels carry no gradient
    dz = np.where(pos, p - 1.0, 0.0) + np.where(neg, p, 0.0)
    dz *= active

    grads = [None] * len(net.params)
    grads[-2] = feats.T @ dz
    grads[-1] = dz.sum(axis=0)
    dx = (dz @ net.params[-2].T).reshape((x.shape[0],) + feature_shape(net.layers, net.w))
    pi = len(net.params) - 2
    for layer, c in zip(reversed(net.layers), reversed(cache)):
        if isinstance(layer, Conv):
            pi -= 2
            W = net.params[pi]
            shape, col, ho, wo = c
            dout = dx.transpose(0, 2, 3, 1).reshape(-1, W.shape[0])
            grads[pi] = (dout.T @ col).reshape(W.shape)
            grads[pi + 1] = dout.sum(axis=0)
            if pi > 0:
                dx = _col2im(dout @ W.reshape(W.shape[0], -1), shape, layer.kernel,
                             layer.stride, ho, wo)
        elif isinstance(layer, ReLU):
            dx = dx * c
        else:
            k = layer.size
            dx = np.repeat(np.repeat(dx, k, axis=2), k, axis=3) / (k * k)
    return loss, grads


def backward(net: SegNet, image: np.ndarray, target: np.ndarray) -> list[np.ndarray]:
    """Exact gradients of ``masked_loss(forward(net, image), target)`` per parameter."""
    images = _check_images(net, image)
    targets = target[None] if target.ndim == 2 else target
    if targets.shape[1:] != (net.s, net.s) or len(targets) != len(images):
        raise ValueError(f"target shape {target.shape} does not match the network output")
    return _loss_and_grads(net, images, targets)[1]


def infer_mask(net: SegNet, images: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return forward(net, images) > threshold


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 30
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class LossReport:
    epoch_loss: list[float] = field(default_factory=list)
    positives: list[int] = field(default_factory=list)
    negatives: list[int] = field(default_factory=list)


def train(net: SegNet, images: np.ndarray, targets: np.ndarray, config: TrainConfig = TrainConfig(),
          on_epoch=None) -> tuple[SegNet, LossReport]:
    """Minibatch SGD with momentum on the mean per-sample masked loss.

    The reported epoch loss is the mean per-sample loss seen during the epoch.
    ``on_epoch(epoch, net)`` is called after every epoch if given.
    The input net is not modified.
    """
    if images is None or len(images) == 0:
        raise ValueError("cannot train on an empty dataset")
    images = _check_images(net, images)
    if targets.shape != (len(images), net.s, net.s):
        raise ValueError(f"targets must have shape ({len(images)}, {net.s}, {net.s})")
    net = net.copy()
    velocity = [np.zeros_like(p) for p in net.params]
    rng = np.random.default_rng(config.rng_seed)
    report = LossReport()
    n = len(images)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = _loss_and_grads(net, images[idx], targets[idx])
            total += loss
            scale = config.learning_rate / len(idx)
            for p, v, g in zip(net.params, velocity, grads):
                v *= config.momentum
                v -= scale * g
                p += v
        report.epoch_loss.append(total / n)
        report.positives.append(int((targets == POSITIVE).sum()))
        report.negatives.append(int((targets == NEGATIVE).sum()))
        if on_epoch is not None:
            on_epoch(len(report.epoch_loss), net)
    return net, report


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path: str | os.PathLike, net: SegNet) -> None:
    arch = " ".join(layer.spec() for layer in net.layers)
    header = (f"{MAGIC}\narch {arch}\nw {net.w}\ns {net.s}\nseed {net.seed}\n"
              f"params {len(net.params)}\nend\n")
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params)
    Path(path).write_bytes(header.encode("ascii") + blob)


def load_checkpoint(path: str | os.PathLike) -> SegNet:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise ValueError(f"{path}: not a segnet checkpoint")
    fields = dict(line.split(" ", 1) for line in raw[:cut].decode("ascii").splitlines()[1:])
    layers = parse_layers(fields["arch"])
    w, s, seed = int(fields["w"]), int(fields["s"]), int(fields["seed"])
    shapes = [p.shape for p in init_net(layers, w, s, 0, zero_final=True).params]
    if int(fields["params"]) != len(shapes):
        raise ValueError(f"{path}: parameter count does not match the architecture")
    data = np.frombuffer(raw, dtype="<f8", offset=cut + len(marker))
    if data.size != sum(int(np.prod(sh)) for sh in shapes):
        raise ValueError(f"{path}: truncated or oversized parameter block")
    params, off = [], 0
    for sh in shapes:
        size = int(np.prod(sh))
        params.append(data[off:off + size].reshape(sh).astype(np.float64))
        off += size
    return SegNet(layers, w, s, params, seed)
