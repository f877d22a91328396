"""Sequence loading and tracking accuracy metrics.

Boxes are ``(x, y, w, h)`` in whatever pixel convention the ground truth
uses; tracker output is produced in the same convention, so no shift is
applied anywhere.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import SequenceLoadError
from .motion import to_gray

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")
GT_NAME = "groundtruth_rect.txt"


@dataclass
class Sequence:
    name: str
    frames: list[Path]
    ground_truth: np.ndarray  # (T, 4)

    def __len__(self) -> int:
        return len(self.frames)

    def iter_frames(self):
        for path in self.frames:
            yield load_frame(path)


def load_frame(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return to_gray(np.asarray(img))


def parse_ground_truth(path) -> np.ndarray:
    boxes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p for p in re.split(r"[,\s]+", line) if p]
            try:
                box = [float(p) for p in parts]
            except ValueError:
                raise SequenceLoadError(f"{path}:{lineno}: unparsable box {line!r}") from None
            if len(box) != 4:
                raise SequenceLoadError(f"{path}:{lineno}: expected 4 values, got {len(box)}")
            if box[2] <= 0 or box[3] <= 0:
                raise SequenceLoadError(f"{path}:{lineno}: box has non-positive size")
            boxes.append(box)
    return np.array(boxes, dtype=float).reshape(-1, 4)


def load_sequence(path) -> Sequence:
    """Load ``<path>/img/####.(jpg|png)`` frames and ``<path>/groundtruth_rect.txt``."""
    root = Path(path)
    img_dir = root / "img"
    gt_path = root / GT_NAME
    if not img_dir.is_dir():
        raise SequenceLoadError(f"missing image folder {img_dir}")
    if not gt_path.is_file():
        raise SequenceLoadError(f"missing ground truth {gt_path}")
    frames = []
    for p in img_dir.iterdir():
        if p.suffix.lower() in IMAGE_SUFFIXES:
            if not p.stem.isdigit():
                raise SequenceLoadError(f"frame name is not numbered: {p.name}")
            frames.append(p)
    frames.sort(key=lambda p: int(p.stem))
    if not frames:
        raise SequenceLoadError(f"no frames in {img_dir}")
    gt = parse_ground_truth(gt_path)
    if len(gt) != len(frames):
        raise SequenceLoadError(
            f"{root.name}: {len(frames)} frames but {len(gt)} ground-truth boxes in {gt_path}"
        )
    return Sequence(root.name, frames, gt)


def centers(boxes) -> np.ndarray:
    b = np.asarray(boxes, dtype=float)
    return b[..., :2] + b[..., 2:] / 2


def cle(box_a, box_b) -> float:
    """Center location error."""
    d = centers(box_a) - centers(box_b)
    return float(np.hypot(d[0], d[1]))


def voc_overlap(box_a, box_b) -> float:
    """Intersection over union of two boxes."""
    ax, ay, aw, ah = (float(v) for v in box_a)
    bx, by, bw, bh = (float(v) for v in box_b)
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def success_rate(overlaps, threshold: float) -> float:
    """Fraction of frames whose overlap is strictly above ``threshold``."""
    ov = np.asarray(overlaps, dtype=float)
    if ov.size == 0:
        raise ValueError("success rate of an empty overlap list")
    return float(np.mean(ov > threshold))


def success_plot(overlaps, resolution: int = 101) -> np.ndarray:
    """``(resolution, 2)`` array of ``(threshold, success rate)`` over [0, 1]."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    ov = np.asarray(overlaps, dtype=float)
    if ov.size == 0:
        raise ValueError("success plot of an empty overlap list")
    thresholds = np.linspace(0.0, 1.0, resolution)
    rates = (ov[None, :] > thresholds[:, None]).mean(axis=1)
    return np.column_stack([thresholds, rates])


@dataclass
class RunReport:
    cle: np.ndarray
    overlap: np.ndarray
    threshold: float = 0.6
    curve: np.ndarray = field(default=None)
    mean_cle: float = field(default=None)
    mean_overlap: float = field(default=None)
    success: float = field(default=None)

    def __post_init__(self):
        self.cle = np.asarray(self.cle, dtype=float)
        self.overlap = np.asarray(self.overlap, dtype=float)
        if self.curve is None:
            self.curve = success_plot(self.overlap)
        if self.mean_cle is None:
            self.mean_cle = float(self.cle.mean())
        if self.mean_overlap is None:
            self.mean_overlap = float(self.overlap.mean())
        if self.success is None:
            self.success = success_rate(self.overlap, self.threshold)

    def __len__(self) -> int:
        return len(self.cle)


def evaluate_run(pred_boxes, gt_boxes, threshold: float = 0.6, resolution: int = 101) -> RunReport:
    pred = np.asarray(pred_boxes, dtype=float)
    gt = np.asarray(gt_boxes, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"{len(pred)} predicted boxes for {len(gt)} ground-truth boxes")
    errs = np.array([cle(a, b) for a, b in zip(pred, gt)])
    ovs = np.array([voc_overlap(a, b) for a, b in zip(pred, gt)])
    return RunReport(errs, ovs, threshold, success_plot(ovs, resolution))


def aggregate_runs(reports: list[RunReport]) -> RunReport:
    """Arithmetic mean of per-frame values, aggregates and success curves."""
    if not reports:
        raise ValueError("no reports to aggregate")
    lengths = {len(r) for r in reports}
    if len(lengths) != 1:
        raise ValueError(f"reports cover different sequence lengths: {sorted(lengths)}")
    if len({r.curve.shape for r in reports}) != 1:
        raise ValueError("reports use different success-curve resolutions")
    return RunReport(
        cle=np.mean([r.cle for r in reports], axis=0),
        overlap=np.mean([r.overlap for r in reports], axis=0),
        threshold=reports[0].threshold,
        curve=np.mean([r.curve for r in reports], axis=0),
        mean_cle=float(np.mean([r.mean_cle for r in reports])),
        mean_overlap=float(np.mean([r.mean_overlap for r in reports])),
        success=float(np.mean([r.success for r in reports])),
    )


def read_run_boxes(path) -> np.ndarray:
    """Boxes from a tracker result CSV, one row per frame."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    return np.array([[float(r[k]) for k in ("x", "y", "w", "h")] for r in rows])


def sr_label(threshold: float) -> str:
    return f"sr@{threshold:.2f}"


def write_report_csv(path, report: RunReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "cle", "overlap"])
        for i, (e, o) in enumerate(zip(report.cle, report.overlap)):
            w.writerow([i, f"{e:.6f}", f"{o:.6f}"])
        w.writerow([])
        w.writerow(["mean_cle", "mean_overlap", sr_label(report.threshold)])
        w.writerow([f"{report.mean_cle:.6f}", f"{report.mean_overlap:.6f}", f"{report.success:.6f}"])


def write_curve_csv(path, report: RunReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "success_rate"])
        for t, r in report.curve:
            w.writerow([f"{t:.4f}", f"{r:.6f}"])


def write_plots(out_dir, report: RunReport, title: str = "") -> list[Path]:
    """SVG line plots of CLE and overlap per frame and of the success curve."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    frames = np.arange(len(report))
    specs = [
        ("cle.svg", frames, report.cle, "frame", "center location error (px)"),
        ("overlap.svg", frames, report.overlap, "frame", "overlap"),
        ("success.svg", report.curve[:, 0], report.curve[:, 1], "overlap threshold", "success rate"),
    ]
    written = []
    for name, x, y, xlabel, ylabel in specs:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(x, y)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
