"""
Statistical counting: per-frame fish counts over a window of mixed-mode frames,
averaged and rounded up to the final count.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Union

from src.components.track import TrackRow, TrackSnapshot
from src.exception import InsufficientFrames, InvariantViolation
from src.logger import logging

DEFAULT_WINDOW_S = 3.0
# keeps 3 s x 30 fps at 90 frames despite binary floating point
FRAME_EPSILON = 1e-9


@dataclass
class CountConfig:
    """
    Attributes:
        window_s (float): Counting window in seconds. Default 3.
        true_count (int | None): Known number of fish, enables the accuracy report.
    """
    window_s: float = DEFAULT_WINDOW_S
    true_count: Optional[int] = None

    def __post_init__(self):
        if not self.window_s > 0:
            raise InvariantViolation(f"window_s must be > 0, got {self.window_s}")


@dataclass(frozen=True)
class CountReport:
    """
    Attributes:
        window (tuple): (start frame, end frame), end exclusive.
        per_frame_counts (tuple): Counts the mean is taken over.
        mean (Fraction): Exact arithmetic mean.
        final (int): Ceiling of the mean.
    """
    window: tuple
    per_frame_counts: tuple
    mean: Fraction
    final: int

    def line(self) -> str:
        """The report line "window_start,window_end,mean,final"."""
        return f"{self.window[0]},{self.window[1]},{float(self.mean):.4f},{self.final}"


def per_frame_count(snapshot: TrackSnapshot) -> int:
    """Confirmed tracks that matched a detection this frame; coasting tracks do not count."""
    return sum(1 for e in snapshot.entries if e.counted)


def per_frame_counts_from_rows(rows: Iterable[TrackRow], first_frame: Optional[int] = None,
                               last_frame: Optional[int] = None) -> List[int]:
    """
    Per-frame counts from track CSV rows over [first_frame, last_frame]; the bounds
    default to the first and last row's frame. Frames with no confirmed row count 0
    and rows outside the bounds are ignored.
    """
    counts = {}
    for r in rows:
        counts.setdefault(r.frame, 0)
        if not r.coasting:
            counts[r.frame] += 1
    if not counts and (first_frame is None or last_frame is None):
        return []
    first = min(counts) if first_frame is None else first_frame
    last = max(counts) if last_frame is None else last_frame
    return [counts.get(f, 0) for f in range(first, last + 1)]


def window_frames(fps: float, window: float) -> int:
    n = math.floor(window * fps + FRAME_EPSILON)
    if n < 1:
        raise InvariantViolation(f"window of {window} s at {fps} fps holds no frame")
    return n


def _report(counts: Sequence[int], start: int) -> CountReport:
    if any(c < 0 for c in counts):
        raise InvariantViolation("per-frame counts must be non-negative")
    mean = Fraction(sum(counts), len(counts))
    return CountReport((start, start + len(counts)), tuple(int(c) for c in counts), mean, math.ceil(mean))


def windowed_count(per_frame: Sequence[int], fps: float, window: float = DEFAULT_WINDOW_S,
                   start: int = 0) -> CountReport:
    """
    Mean of the first floor(window * fps) counts, rounded up.

    Args:
        per_frame (Sequence[int]): Per-frame counts in frame order.
        fps (float): Frames per second.
        window (float): Window length in seconds.
        start (int): Frame index of per_frame[0], recorded in the report window.

    Raises:
        InsufficientFrames: Fewer counts than the window needs.
    """
    n = window_frames(fps, window)
    if len(per_frame) < n:
        raise InsufficientFrames(f"window needs {n} frames, got {len(per_frame)}")
    return _report(list(per_frame[:n]), start)


def count_windows(per_frame: Sequence[int], fps: float, window: float = DEFAULT_WINDOW_S,
                  start: int = 0) -> List[CountReport]:
    """One CountReport per complete, non-overlapping window; a trailing partial window is dropped."""
    n = window_frames(fps, window)
    reports = [_report(list(per_frame[i:i + n]), start + i) for i in range(0, len(per_frame) - n + 1, n)]
    logging.info(f"Counted {len(reports)} windows of {n} frames from {len(per_frame)} frames")
    return reports


def format_count_report(reports: Union[CountReport, Sequence[CountReport]]) -> str:
    if isinstance(reports, CountReport):
        reports = [reports]
    lines = ["window_start,window_end,mean,final"]
    lines.extend(r.line() for r in reports)
    return "\n".join(lines) + "\n"
