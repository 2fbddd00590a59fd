import math
from fractions import Fraction

import numpy as np
import pytest

from src.components.count import (
    CountConfig,
    count_windows,
    format_count_report,
    per_frame_count,
    per_frame_counts_from_rows,
    window_frames,
    windowed_count,
)
from src.components.track import SnapshotEntry, TrackRow, TrackSnapshot, TrackStatus
from src.exception import InsufficientFrames, InvariantViolation


def test_mean_is_rounded_up():
    report = windowed_count([19] * 54 + [20] * 36, fps=30.0, window=3.0)
    assert report.mean == Fraction(97, 5)
    assert report.final == 20
    assert report.window == (0, 90)
    assert report.line() == "0,90,19.4000,20"


def test_exact_integer_mean_is_not_bumped():
    assert windowed_count([20] * 90, 30.0).final == 20


def test_only_the_first_window_is_used():
    report = windowed_count([20] * 90 + [99] * 10, 30.0, start=5)
    assert report.final == 20
    assert report.window == (5, 95)


def test_insufficient_frames():
    with pytest.raises(InsufficientFrames):
        windowed_count([20] * 89, 30.0)


def test_window_frames():
    assert window_frames(30.0, 3.0) == 90
    assert window_frames(29.97, 3.0) == 89
    assert window_frames(10.0, 0.1) == 1
    with pytest.raises(InvariantViolation):
        window_frames(30.0, 0.01)
    with pytest.raises(InvariantViolation):
        CountConfig(window_s=0.0)


def test_consecutive_windows_drop_the_partial_tail():
    per_frame = [20] * 90 + [19] * 90 + [21] * 45
    reports = count_windows(per_frame, 30.0, 3.0, start=10)
    assert [r.window for r in reports] == [(10, 100), (100, 190)]
    assert [r.final for r in reports] == [20, 19]
    text = format_count_report(reports)
    assert text.splitlines() == ["window_start,window_end,mean,final", "10,100,20.0000,20", "100,190,19.0000,19"]


def test_snapshot_count_excludes_coasting_and_tentative():
    def entry(i, status, matched):
        return SnapshotEntry(i, 0.0, 0.0, 1.0, 1.0, status, matched, 0 if matched else 1)

    snapshot = TrackSnapshot(0, (
        entry(0, TrackStatus.CONFIRMED, True),
        entry(1, TrackStatus.CONFIRMED, False),
        entry(2, TrackStatus.TENTATIVE, True),
        entry(3, TrackStatus.CONFIRMED, True),
    ))
    assert per_frame_count(snapshot) == 2


def test_counts_from_rows_fill_missing_frames():
    rows = [
        TrackRow(3, 0, 1, 1, 1, 1),
        TrackRow(3, 1, 1, 1, 1, 1, "coasting"),
        TrackRow(5, 0, 1, 1, 1, 1),
        TrackRow(5, 1, 1, 1, 1, 1),
    ]
    assert per_frame_counts_from_rows(rows) == [1, 0, 2]
    assert per_frame_counts_from_rows([]) == []


def test_counts_from_rows_honour_explicit_bounds():
    rows = [TrackRow(3, 0, 1, 1, 1, 1), TrackRow(5, 0, 1, 1, 1, 1), TrackRow(9, 0, 1, 1, 1, 1)]
    assert per_frame_counts_from_rows(rows, first_frame=0) == [0, 0, 0, 1, 0, 1, 0, 0, 0, 1]
    assert per_frame_counts_from_rows(rows, first_frame=4, last_frame=6) == [0, 1, 0]
    assert per_frame_counts_from_rows([], first_frame=0, last_frame=2) == [0, 0, 0]


def test_mean_and_final_ignore_frame_order(rng):
    for _ in range(200):
        counts = rng.integers(0, 30, size=90).tolist()
        report = windowed_count(counts, 30.0)
        shuffled = windowed_count(rng.permutation(counts).tolist(), 30.0)
        assert (shuffled.mean, shuffled.final) == (report.mean, report.final)


def test_final_shifts_with_a_constant_offset(rng):
    for _ in range(200):
        counts = rng.integers(0, 30, size=90)
        k = int(rng.integers(0, 10))
        base = windowed_count(counts.tolist(), 30.0)
        assert windowed_count((counts + k).tolist(), 30.0).final == base.final + k


def test_final_lies_between_the_extremes(rng):
    for _ in range(200):
        counts = rng.integers(0, 30, size=int(rng.integers(90, 200))).tolist()
        report = windowed_count(counts, 30.0)
        window = counts[:90]
        assert math.ceil(min(window)) <= report.final <= math.ceil(max(window))
        assert report.per_frame_counts == tuple(window)
