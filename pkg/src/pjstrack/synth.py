"""Synthetic test sequences with exact ground truth.

All scenarios share one layout: a 160 x 120 frame with a smooth background
and a 40 x 40 target textured with random 5 px blocks.

* ``static``    - the target never moves.
* ``translate`` - the target moves right by ``speed`` px per frame.
* ``occlude``   - as ``translate``, and on frames 10, 11, 12 (0-based) the
  lower half of the target box is covered by a uniform block.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

KINDS = ("static", "translate", "occlude")

FRAME_SIZE = (120, 160)  # rows, cols
TARGET_SIDE = 40
START = (30, 40)  # x, y of the target's top-left corner
BLOCK = 5
OCCLUDED_FRAMES = (10, 11, 12)
OCCLUDER_VALUE = 0.3  # close to the background level, so the occluder is not a high-energy outlier


def target_texture(seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = TARGET_SIDE // BLOCK
    blocks = rng.uniform(0.1, 0.9, size=(g, g))
    return np.kron(blocks, np.ones((BLOCK, BLOCK)))


def background() -> np.ndarray:
    rows, cols = FRAME_SIZE
    yy, xx = np.mgrid[0:rows, 0:cols]
    return 0.35 + 0.15 * np.sin(xx / 17.0) * np.cos(yy / 23.0)


def ground_truth(kind: str, n_frames: int, speed: float) -> np.ndarray:
    """``(n_frames, 4)`` boxes ``(x, y, w, h)``."""
    if kind not in KINDS:
        raise ValueError(f"unknown scenario {kind!r}; expected one of {KINDS}")
    step = 0.0 if kind == "static" else float(speed)
    x0, y0 = START
    t = np.arange(n_frames)
    return np.column_stack(
        [x0 + step * t, np.full(n_frames, y0), np.full(n_frames, TARGET_SIDE), np.full(n_frames, TARGET_SIDE)]
    ).astype(float)


def render(kind: str, n_frames: int = 20, speed: float = 2.0, texture_seed: int = 7):
    """Frames as float arrays in [0, 1] plus the ground-truth boxes."""
    gt = ground_truth(kind, n_frames, speed)
    tex = target_texture(texture_seed)
    bg = background()
    frames = []
    for t, (x, y, w, h) in enumerate(gt):
        img = bg.copy()
        xi, yi = int(round(x)), int(round(y))
        img[yi : yi + TARGET_SIDE, xi : xi + TARGET_SIDE] = tex
        if kind == "occlude" and t in OCCLUDED_FRAMES:
            half = TARGET_SIDE // 2
            img[yi + half : yi + TARGET_SIDE, xi : xi + TARGET_SIDE] = OCCLUDER_VALUE
        frames.append(img)
    return frames, gt


def write_sequence(out, kind: str, n_frames: int = 20, speed: float = 2.0) -> Path:
    """Write ``out/img/0001.png ...`` and ``out/groundtruth_rect.txt``."""
    out = Path(out)
    (out / "img").mkdir(parents=True, exist_ok=True)
    frames, gt = render(kind, n_frames, speed)
    for t, img in enumerate(frames, start=1):
        data = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
        Image.fromarray(data, mode="L").save(out / "img" / f"{t:04d}.png")
    with open(out / "groundtruth_rect.txt", "w") as fh:
        for box in gt:
            fh.write(",".join(f"{v:g}" for v in box) + "\n")
    return out
