import numpy as np
import pytest

from src.components.detect import (
    DETECTION_HEADER,
    Detection,
    DetectionClass,
    DetectionConfig,
    detect_blobs,
    detections_by_frame,
    filter_targets,
    format_detections,
    read_detection_rows,
    read_detections,
    write_detections,
)
from src.components.event_io import StreamHeader
from src.components.framing import FrameMode, ModeFrame
from src.exception import CoordOutOfRange, InvariantViolation, NegativeExtent, ParseError


def test_box_convention():
    frame = np.zeros((20, 30), dtype=np.uint8)
    frame[4:9, 10:20] = 255   # rows 4..8, cols 10..19
    (d,) = detect_blobs(ModeFrame(FrameMode.BINARY, frame), min_area=1, frame_index=7)
    assert (d.frame, d.x, d.y, d.w, d.h) == (7, 14.5, 6.0, 10.0, 5.0)
    assert d.id == -1 and d.cls == DetectionClass.TARGET


def test_diagonal_pixels_join_one_blob():
    frame = np.zeros((10, 10), dtype=np.uint8)
    for i in range(6):
        frame[i, i] = 1
    detections = detect_blobs(frame, min_area=1)
    assert len(detections) == 1
    assert (detections[0].w, detections[0].h) == (6.0, 6.0)


def test_area_filter_is_inclusive():
    frame = np.zeros((20, 20), dtype=np.uint8)
    frame[0, 0:3] = 1          # area 3
    frame[10:12, 10:15] = 1    # area 10
    assert len(detect_blobs(frame, min_area=3, max_area=10)) == 2
    assert len(detect_blobs(frame, min_area=4, max_area=10)) == 1
    assert len(detect_blobs(frame, min_area=3, max_area=9)) == 1


def test_detections_are_sorted_by_center():
    frame = np.zeros((30, 30), dtype=np.uint8)
    frame[20:22, 2:4] = 1
    frame[2:4, 20:22] = 1
    frame[2:4, 2:4] = 1
    ys_xs = [(d.y, d.x) for d in detect_blobs(frame, min_area=1)]
    assert ys_xs == sorted(ys_xs)


def test_empty_frame():
    assert detect_blobs(np.zeros((8, 8), dtype=np.uint8)) == []


def test_mixed_frame_counts_any_channel():
    frame = np.zeros((8, 8, 3), dtype=np.uint8)
    frame[2:4, 2:4, 1] = 255
    assert len(detect_blobs(frame, min_area=1)) == 1


def test_area_bounds_validated():
    with pytest.raises(InvariantViolation):
        detect_blobs(np.zeros((4, 4)), min_area=0)
    with pytest.raises(InvariantViolation):
        DetectionConfig(min_area=10, max_area=5)
    with pytest.raises(InvariantViolation):
        DetectionConfig(detector="yolo")


def test_detection_invariants():
    with pytest.raises(NegativeExtent):
        Detection(0, 1.0, 1.0, 0.0, 2.0)
    with pytest.raises(InvariantViolation):
        Detection(0, 1.0, 1.0, 2.0, 2.0, confidence=1.5)


def test_csv_round_trip(tmp_path):
    detections = [
        Detection(2, 10.5, 20.0, 8.0, 4.0, 0.9),
        Detection(0, 1.0, 2.0, 3.0, 4.0, 1.0, DetectionClass.NEGATIVE),
        Detection(2, 30.25, 5.0, 6.0, 6.0, 0.5, id=4),
    ]
    path = tmp_path / "det.csv"
    write_detections(path, detections)
    grouped = read_detections(path)
    assert list(grouped) == [0, 2]
    assert grouped[2] == [detections[0], detections[2]]
    assert grouped[0] == [detections[1]]
    assert path.read_text().splitlines()[0] == DETECTION_HEADER


def test_format_is_plain_floats():
    text = format_detections([Detection(1, np.float64(2.5), 3.0, 4.0, 5.0)])
    assert text.splitlines()[1] == "1,-1,2.5,3.0,4.0,5.0,1.0,target"


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as info:
        read_detection_rows(DETECTION_HEADER + "\n0,-1,1,1,2,2,1.0,fish\n")
    assert (info.value.line, info.value.column) == (2, 8)
    with pytest.raises(ParseError) as info:
        read_detection_rows(DETECTION_HEADER + "\n0,-1,1,1,2,2,1.0\n")
    assert info.value.line == 2
    with pytest.raises(ParseError):
        read_detection_rows("frame,x,y\n")


def test_negative_extent_in_file():
    with pytest.raises(NegativeExtent):
        read_detection_rows(DETECTION_HEADER + "\n0,-1,1,1,-2,2,1.0,target\n")


def test_negatives_are_filtered_before_tracking():
    dets = [Detection(0, 1, 1, 2, 2), Detection(0, 5, 5, 2, 2, cls=DetectionClass.NEGATIVE)]
    assert filter_targets(dets) == [dets[0]]


def test_grouping_keeps_file_order_within_frame():
    dets = [Detection(1, 9, 9, 2, 2), Detection(0, 1, 1, 2, 2), Detection(1, 3, 3, 2, 2)]
    grouped = detections_by_frame(dets)
    assert [d.x for d in grouped[1]] == [9, 3]


def test_boxes_must_overlap_the_sensor():
    header = StreamHeader(64, 48)
    text = DETECTION_HEADER + "\n0,-1,-500,10,8,8,1.0,target\n"
    assert len(read_detection_rows(text)) == 1
    with pytest.raises(CoordOutOfRange, match="<text>:2"):
        read_detection_rows(text, header)
    # a box straddling the border is kept
    edge = read_detection_rows(DETECTION_HEADER + "\n0,-1,-3,10,8,8,1.0,target\n", header)
    assert edge[0].intersects(header)
    assert not Detection(0, 66.5, 10, 4, 4).intersects(header)
    assert Detection(0, 65.5, 10, 4, 4).intersects(header)
