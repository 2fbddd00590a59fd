"""
Per-frame detections: an 8-connected blob baseline over binary frames, and the CSV
boundary through which an external (trained) detector's boxes enter the pipeline.
"""
import csv
import io
import os
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Union

import numpy as np
from scipy import ndimage

from src.components.event_io import StreamHeader
from src.components.framing import MixedFrame, ModeFrame
from src.exception import CoordOutOfRange, InvariantViolation, NegativeExtent, ParseError
from src.logger import logging

DEFAULT_MIN_AREA = 30
DEFAULT_MAX_AREA = 5000

DETECTION_HEADER = "frame,id,x,y,w,h,conf,class"
DETECTION_FIELDS = DETECTION_HEADER.split(",")

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class DetectionClass(str, Enum):
    TARGET = "target"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class Detection:
    """
    One box, center-based as [x, y, w, h].

    Attributes:
        frame (int): Window index.
        x, y (float): Box center in pixels.
        w, h (float): Box extent in pixels, > 0.
        confidence (float): 0..1.
        cls (DetectionClass): target or negative (mirror reflection).
        id (int): -1 for detections, >= 0 when the row is a ground-truth track.
    """
    frame: int
    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0
    cls: DetectionClass = DetectionClass.TARGET
    id: int = -1

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise NegativeExtent(f"box extent must be positive, got w={self.w}, h={self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvariantViolation(f"confidence must be in [0, 1], got {self.confidence}")

    def intersects(self, header: StreamHeader) -> bool:
        return (self.x + self.w / 2 > 0 and self.x - self.w / 2 < header.width
                and self.y + self.h / 2 > 0 and self.y - self.h / 2 < header.height)


@dataclass
class DetectionConfig:
    """
    Attributes:
        detector (str): "blob" for the connected-components baseline, "file" to read boxes.
        min_area (int): Smallest accepted component, pixels. Default 30.
        max_area (int): Largest accepted component, pixels. Default 5000.
        detections_path (str | None): Detection CSV when detector is "file".
    """
    detector: str = "blob"
    min_area: int = DEFAULT_MIN_AREA
    max_area: int = DEFAULT_MAX_AREA
    detections_path: Optional[str] = None

    def __post_init__(self):
        if self.detector not in ("blob", "file"):
            raise InvariantViolation(f"detector must be 'blob' or 'file', got {self.detector!r}")
        _check_areas(self.min_area, self.max_area)


def _check_areas(min_area: int, max_area: int) -> None:
    if min_area < 1 or max_area < min_area:
        raise InvariantViolation(f"need 1 <= min_area <= max_area, got {min_area}, {max_area}")


def detect_blobs(frame: Union[ModeFrame, MixedFrame, np.ndarray], min_area: int = DEFAULT_MIN_AREA,
                 max_area: int = DEFAULT_MAX_AREA, frame_index: int = 0) -> List[Detection]:
    """
    Turn 8-connected components of nonzero pixels into boxes.

    Args:
        frame: Binary mode frame (any nonzero pixel counts); a mixed frame counts a pixel
            when any channel is nonzero.
        min_area, max_area (int): Accepted component pixel counts, inclusive.
        frame_index (int): Recorded on every Detection.

    Returns:
        List[Detection]: Sorted by (y, x) of the box center.
    """
    _check_areas(min_area, max_area)
    pixels = frame.pixels if isinstance(frame, (ModeFrame, MixedFrame)) else np.asarray(frame)
    mask = pixels.any(axis=2) if pixels.ndim == 3 else pixels != 0
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    detections = []
    for label, box in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[label])
        if box is None or not min_area <= area <= max_area:
            continue
        rows, cols = box
        y0, y1 = rows.start, rows.stop - 1
        x0, x1 = cols.start, cols.stop - 1
        detections.append(Detection(
            frame=frame_index,
            x=(x0 + x1) / 2.0,
            y=(y0 + y1) / 2.0,
            w=float(x1 - x0 + 1),
            h=float(y1 - y0 + 1),
        ))
    detections.sort(key=lambda d: (d.y, d.x))
    return detections


def filter_targets(detections: Iterable[Detection]) -> List[Detection]:
    """Drop negative-class boxes (mirror reflections) before tracking."""
    return [d for d in detections if d.cls == DetectionClass.TARGET]


def detections_by_frame(detections: Iterable[Detection]) -> "OrderedDict[int, List[Detection]]":
    grouped: "OrderedDict[int, List[Detection]]" = OrderedDict()
    for d in sorted(detections, key=lambda d: d.frame):
        grouped.setdefault(d.frame, []).append(d)
    return grouped


def _parse_detection_row(row: List[str], name: str, line: int, header: Optional[StreamHeader] = None) -> Detection:
    if len(row) != len(DETECTION_FIELDS):
        raise ParseError(f"expected {len(DETECTION_FIELDS)} fields, got {len(row)}", name, line)
    parsed = []
    for col, (field_name, text) in enumerate(zip(DETECTION_FIELDS, row), start=1):
        text = text.strip()
        try:
            if field_name in ("frame", "id"):
                parsed.append(int(text))
            elif field_name == "class":
                parsed.append(DetectionClass(text))
            else:
                parsed.append(float(text))
        except ValueError:
            raise ParseError(f"bad {field_name} value {text!r}", name, line, col)
    frame, track_id, x, y, w, h, conf, cls = parsed
    if frame < 0:
        raise ParseError(f"frame must be >= 0, got {frame}", name, line, 1)
    if w <= 0 or h <= 0:
        raise NegativeExtent(f"{name}:{line}: box extent must be positive, got w={w}, h={h}")
    try:
        detection = Detection(frame, x, y, w, h, conf, cls, track_id)
    except InvariantViolation as e:
        raise ParseError(str(e), name, line, 7)
    if header is not None and not detection.intersects(header):
        raise CoordOutOfRange(f"{name}:{line}: box at ({x}, {y}) size {w}x{h} lies outside the "
                              f"{header.width}x{header.height} sensor")
    return detection


def read_detection_rows(source: Union[str, os.PathLike], header: Optional[StreamHeader] = None) -> List[Detection]:
    """All rows of a detection CSV in file order; with a header, every box must overlap the sensor."""
    if isinstance(source, str) and ("\n" in source or source.startswith(DETECTION_HEADER)):
        handle, name = io.StringIO(source), "<text>"
    else:
        handle, name = open(source, "r", newline=""), os.fspath(source)
    rows = []
    with handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != DETECTION_FIELDS:
            raise ParseError(f"expected header {DETECTION_HEADER!r}", name, 1)
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            rows.append(_parse_detection_row(row, name, reader.line_num, header))
    return rows


def read_detections(source: Union[str, os.PathLike],
                    header: Optional[StreamHeader] = None) -> "OrderedDict[int, List[Detection]]":
    """
    Read a detection CSV ("frame,id,x,y,w,h,conf,class") grouped by frame, keeping file
    order within each frame.

    Raises:
        ParseError: Malformed line, with line and column.
        NegativeExtent: w or h <= 0.
        CoordOutOfRange: With a header, a box that does not overlap the sensor.
    """
    grouped = detections_by_frame(read_detection_rows(source, header))
    logging.info(f"Read detections for {len(grouped)} frames")
    return grouped


def format_detections(detections: Iterable[Detection]) -> str:
    lines = [DETECTION_HEADER]
    for d in detections:
        lines.append(",".join([str(int(d.frame)), str(int(d.id))]
                              + [repr(float(v)) for v in (d.x, d.y, d.w, d.h, d.confidence)]
                              + [d.cls.value]))
    return "\n".join(lines) + "\n"


def write_detections(path: Union[str, os.PathLike], detections: Iterable[Detection]) -> None:
    """Write detections (or ground-truth rows) in frame order."""
    ordered = [d for frame in detections_by_frame(detections).values() for d in frame]
    with open(path, "w", newline="") as f:
        f.write(format_detections(ordered))
    logging.info(f"Wrote {len(ordered)} detections to {path}")

