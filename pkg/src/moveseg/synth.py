"""Synthetic fixtures with known ground truth: moving-square videos and shape scenes."""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def texture(rng: np.random.Generator, shape: tuple[int, int], base_rgb, amplitude: float = 60.0,
            sigma: float = 1.0) -> np.ndarray:
    """Smoothed-noise texture around ``base_rgb``, uint8 (H, W, 3)."""
    noise = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    noise /= noise.std() + 1e-12
    img = np.asarray(base_rgb, dtype=np.float64)[None, None, :] + amplitude * 0.5 * noise[..., None]
    # a little independent chroma noise so colour histograms are not degenerate
    img += rng.normal(0.0, amplitude * 0.1, shape + (3,))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


_DIRECTIONS = [(1, 0), (-1, 0), (0, 1), (0, -1)]


def moving_square_video(seed: int, size: int = 64, n_frames: int = 8, speed: int = 4,
                        fg_fraction: float = 0.10, static: bool = False):
    """Textured square sliding over a static textured background.

    Returns ``(frames, masks)``: lists of uint8 (size, size, 3) frames and bool
    ground-truth masks. With ``static`` the square never moves.
    """
    rng = np.random.default_rng(seed)
    side = int(round(np.sqrt(fg_fraction * size * size)))
    bg_rgb = rng.uniform(60, 190, 3)
    fg_rgb = np.clip(255 - bg_rgb + rng.uniform(-30, 30, 3), 20, 235)
    background = texture(rng, (size, size), bg_rgb)
    patch = texture(rng, (side, side), fg_rgb)
    dx, dy = (0, 0) if static else _DIRECTIONS[rng.integers(len(_DIRECTIONS))]
    travel = speed * (n_frames - 1)
    lo_x = travel if dx < 0 else 0
    hi_x = size - side - (travel if dx > 0 else 0)
    lo_y = travel if dy < 0 else 0
    hi_y = size - side - (travel if dy > 0 else 0)
    x0 = int(rng.integers(lo_x, hi_x + 1))
    y0 = int(rng.integers(lo_y, hi_y + 1))
    frames, masks = [], []
    for t in range(n_frames):
        x, y = x0 + dx * speed * t, y0 + dy * speed * t
        f = background.copy()
        f[y:y + side, x:x + side] = patch
        m = np.zeros((size, size), bool)
        m[y:y + side, x:x + side] = True
        frames.append(f)
        masks.append(m)
    return frames, masks


def color_jitter(frames, seed: int, gain: float = 0.08, offset: float = 8.0):
    """Independent per-frame, per-channel affine colour perturbation."""
    rng = np.random.default_rng(seed)
    out = []
    for f in frames:
        g = 1.0 + rng.uniform(-gain, gain, 3)
        o = rng.uniform(-offset, offset, 3)
        out.append(np.clip(np.rint(f * g + o), 0, 255).astype(np.uint8))
    return out


def shape_scene(rng: np.random.Generator, size: int = 96):
    """One random ellipse or rectangle on a textured background.

    Object and background get unrelated random base colours; the object covers
    roughly 5-25% of the frame.
    """
    bg_rgb = rng.uniform(30, 225, 3)
    fg_rgb = rng.uniform(30, 225, 3)
    while np.linalg.norm(fg_rgb - bg_rgb) < 90:
        fg_rgb = rng.uniform(30, 225, 3)
    image = texture(rng, (size, size), bg_rgb, amplitude=50.0, sigma=1.5)
    obj = texture(rng, (size, size), fg_rgb, amplitude=50.0, sigma=1.0)

    area = rng.uniform(0.05, 0.25) * size * size
    aspect = np.exp(rng.uniform(-0.6, 0.6))
    ys, xs = np.indices((size, size)) + 0.5
    if rng.random() < 0.5:
        a = np.sqrt(area * aspect / np.pi)
        b = np.sqrt(area / aspect / np.pi)
        cx = rng.uniform(a + 2, size - a - 2)
        cy = rng.uniform(b + 2, size - b - 2)
        theta = rng.uniform(0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = (xs - cx) * c + (ys - cy) * s
        v = -(xs - cx) * s + (ys - cy) * c
        mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    else:
        w = np.sqrt(area * aspect)
        h = np.sqrt(area / aspect)
        cx = rng.uniform(w / 2 + 2, size - w / 2 - 2)
        cy = rng.uniform(h / 2 + 2, size - h / 2 - 2)
        mask = (np.abs(xs - cx) <= w / 2) & (np.abs(ys - cy) <= h / 2)
    if not mask.any():
        mask[int(cy), int(cx)] = True
    image[mask] = obj[mask]
    return image, mask
