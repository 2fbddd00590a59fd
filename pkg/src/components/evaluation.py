"""
Tracking and counting evaluation: CLEAR-MOT accuracy against ground-truth tracks,
and counting accuracy over repeated trials.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import motmetrics as mm
import numpy as np

from src.components.detect import DETECTION_HEADER, Detection, read_detection_rows
from src.components.track import TRACK_HEADER, TrackRow, read_tracks
from src.exception import EmptyGroundTruth, InvariantViolation, NonPositiveTruth, ParseError
from src.logger import logging

DEFAULT_IOU_THRESHOLD = 0.5

# frame -> [(id, (x, y, w, h))], center-based boxes
FrameBoxes = Dict[int, List[Tuple[int, Tuple[float, float, float, float]]]]


@dataclass
class EvaluationConfig:
    """
    Attributes:
        iou_threshold (float): Smallest IoU a GT/hypothesis pair may have. Default 0.5.
        include_coasting (bool): Score coasting track rows as hypotheses. Default False.
    """
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    include_coasting: bool = False

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise InvariantViolation(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")


@dataclass(frozen=True)
class MotaReport:
    frames: int
    fp: int
    fn: int
    ids: int
    gt: int

    @classmethod
    def from_components(cls, fp: int, fn: int, ids: int, gt: int, frames: int = 0) -> "MotaReport":
        if gt <= 0:
            raise EmptyGroundTruth("MOTA needs at least one ground-truth box")
        return cls(frames, fp, fn, ids, gt)

    @property
    def mota(self) -> float:
        return 1.0 - (self.fp + self.fn + self.ids) / self.gt

    @property
    def mota_percent(self) -> float:
        return 100.0 * self.mota

    def lines(self, prefix: str = "") -> List[str]:
        return [
            f"{prefix}frames: {self.frames}",
            f"{prefix}fp: {self.fp}",
            f"{prefix}fn: {self.fn}",
            f"{prefix}ids: {self.ids}",
            f"{prefix}gt: {self.gt}",
            f"{prefix}mota: {self.mota_percent:.1f}%",
        ]


def read_track_file(source: Union[str, os.PathLike], include_coasting: bool = False) -> FrameBoxes:
    """
    Read boxes per frame from either the detection CSV shape (ground truth, id >= 0)
    or the track CSV shape (hypotheses). Coasting rows are skipped unless asked for.
    """
    inline = isinstance(source, str) and "\n" in source
    name = "<text>" if inline else os.fspath(source)
    if inline:
        first = source.split("\n", 1)[0]
    else:
        with open(source, "r", newline="") as f:
            first = f.readline()
    first = first.strip()
    if first == TRACK_HEADER:
        return boxes_from_rows(read_tracks(source), include_coasting)
    if first == DETECTION_HEADER:
        rows = read_detection_rows(source)
        for d in rows:
            if d.id < 0:
                raise ParseError(f"frame {d.frame}: track files need ids >= 0, got {d.id}", name)
        return boxes_from_detections(rows)
    raise ParseError(f"expected header {TRACK_HEADER!r} or {DETECTION_HEADER!r}, got {first!r}", name, 1)


def boxes_from_rows(rows: Iterable[TrackRow], include_coasting: bool = False) -> FrameBoxes:
    boxes: FrameBoxes = {}
    for r in rows:
        if r.coasting and not include_coasting:
            continue
        boxes.setdefault(r.frame, []).append((r.id, (r.x, r.y, r.w, r.h)))
    return boxes


def boxes_from_detections(detections: Iterable[Detection]) -> FrameBoxes:
    """Ground-truth boxes from detection-shaped rows, the id being the object id."""
    boxes: FrameBoxes = {}
    for d in detections:
        boxes.setdefault(d.frame, []).append((d.id, (d.x, d.y, d.w, d.h)))
    return boxes


def iou_matrix(gt: Sequence[Tuple[float, float, float, float]],
               hyp: Sequence[Tuple[float, float, float, float]]) -> np.ndarray:
    """Pairwise IoU of center-based boxes, rows are ground truth."""
    a = np.asarray(gt, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(hyp, dtype=np.float64).reshape(-1, 4)
    a_lo, a_hi = a[:, None, :2] - a[:, None, 2:] / 2, a[:, None, :2] + a[:, None, 2:] / 2
    b_lo, b_hi = b[None, :, :2] - b[None, :, 2:] / 2, b[None, :, :2] + b[None, :, 2:] / 2
    overlap = np.clip(np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo), 0.0, None)
    inter = overlap[..., 0] * overlap[..., 1]
    union = (a[:, None, 2] * a[:, None, 3]) + (b[None, :, 2] * b[None, :, 3]) - inter
    return inter / union


def iou_distance(gt, hyp, iou_threshold: float) -> np.ndarray:
    """1 - IoU, with NaN where the pair may not match."""
    dist = 1.0 - iou_matrix(gt, hyp)
    dist[dist > 1.0 - iou_threshold] = np.nan
    return dist


def evaluate_boxes(gt: FrameBoxes, hyp: FrameBoxes, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> MotaReport:
    """
    CLEAR-MOT over per-frame boxes.

    Frame by frame, GT/hypothesis pairs matched in an earlier frame are kept while they
    still overlap, the rest are matched by minimum-cost assignment on 1 - IoU, and a GT
    object matched to a different hypothesis than its last one counts as a switch.

    Raises:
        EmptyGroundTruth: No ground-truth boxes at all.
    """
    total_gt = sum(len(v) for v in gt.values())
    if total_gt == 0:
        raise EmptyGroundTruth("ground truth holds no boxes")
    acc = mm.MOTAccumulator(auto_id=False)
    frames = sorted(set(gt) | set(hyp))
    for frame in frames:
        g = gt.get(frame, [])
        h = hyp.get(frame, [])
        dists = iou_distance([b for _, b in g], [b for _, b in h], iou_threshold)
        acc.update([i for i, _ in g], [i for i, _ in h], dists, frameid=frame)
    counts = acc.mot_events["Type"].value_counts()
    report = MotaReport.from_components(
        fp=int(counts.get("FP", 0)),
        fn=int(counts.get("MISS", 0)),
        ids=int(counts.get("SWITCH", 0)),
        gt=total_gt,
        frames=len(frames),
    )
    logging.info(f"MOTA {report.mota_percent:.1f}% over {report.frames} frames "
                 f"(FP {report.fp}, FN {report.fn}, IDS {report.ids}, GT {report.gt})")
    return report


def evaluate_mota(gt: Union[str, os.PathLike], hyp: Union[str, os.PathLike],
                  iou_threshold: float = DEFAULT_IOU_THRESHOLD, include_coasting: bool = False) -> MotaReport:
    """Evaluate a hypothesis track file against a ground-truth track file."""
    if not 0.0 < iou_threshold < 1.0:
        raise InvariantViolation(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    return evaluate_boxes(read_track_file(gt), read_track_file(hyp, include_coasting), iou_threshold)


def aggregate_mota(reports: Iterable[MotaReport]) -> MotaReport:
    """MOTA of the summed components, as if the sequences were concatenated."""
    reports = list(reports)
    return MotaReport.from_components(
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        ids=sum(r.ids for r in reports),
        gt=sum(r.gt for r in reports),
        frames=sum(r.frames for r in reports),
    )


def mean_mota(reports: Iterable[MotaReport]) -> float:
    """Mean of the per-sequence MOTA percentages."""
    values = [r.mota_percent for r in reports]
    if not values:
        raise EmptyGroundTruth("no sequences to average")
    return sum(values) / len(values)


def evaluate_sequences(pairs: Sequence[Tuple[str, str]], iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                       include_coasting: bool = False, max_workers: int = 4) -> List[MotaReport]:
    """Evaluate several (gt, hyp) file pairs; sequences are independent and run in parallel."""
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(evaluate_mota, gt, hyp, iou_threshold, include_coasting) for gt, hyp in pairs]
        return [f.result() for f in futures]


def format_sequence_table(reports: Sequence[MotaReport]) -> str:
    """Per-sequence rows followed by both averages, labelled apart."""
    lines = ["sequence,frames,fp,fn,ids,gt,mota"]
    for i, r in enumerate(reports, start=1):
        lines.append(f"{i},{r.frames},{r.fp},{r.fn},{r.ids},{r.gt},{r.mota_percent:.1f}")
    lines.append(f"mean_of_rows_mota: {mean_mota(reports):.1f}%")
    lines.append(f"aggregate_mota: {aggregate_mota(reports).mota_percent:.1f}%")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CountAccuracyReport:
    trials: Tuple[Tuple[int, int], ...]
    per_trial_accuracy: Tuple[Fraction, ...]
    average: Fraction

    def lines(self) -> List[str]:
        return [
            f"trials: {len(self.trials)}",
            f"exact_trials: {sum(1 for f, t in self.trials if f == t)}",
            f"average_accuracy: {float(self.average):.2f}%",
        ]


def counting_accuracy(trials: Iterable[Tuple[int, int]]) -> CountAccuracyReport:
    """
    Per-trial accuracy (1 - |final - true| / true) * 100 and its mean, both exact.

    Raises:
        NonPositiveTruth: A trial whose true count is not positive.
        InvariantViolation: No trials.
    """
    trials = tuple((int(f), int(t)) for f, t in trials)
    if not trials:
        raise InvariantViolation("counting accuracy needs at least one trial")
    for final, true in trials:
        if true <= 0:
            raise NonPositiveTruth(f"true count must be > 0, got {true}")
    per_trial = tuple((1 - Fraction(abs(final - true), true)) * 100 for final, true in trials)
    return CountAccuracyReport(trials, per_trial, sum(per_trial, Fraction(0)) / len(per_trial))
