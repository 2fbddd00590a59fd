import struct

import numpy as np
import pytest

from src.components.event_io import (
    EVENT_DTYPE,
    HEADER_SIZE,
    RECORD_SIZE,
    Event,
    Polarity,
    StreamHeader,
    format_csv_events,
    iter_events,
    load_stream,
    read_csv_events,
    read_stream,
    save_stream,
    to_event_array,
    write_csv_events,
    write_stream,
)
from src.exception import (
    BadMagic,
    CoordOutOfRange,
    InvariantViolation,
    ParseError,
    TimestampRegression,
    TruncatedRecord,
)
from tests.conftest import make_events, random_events


def test_record_layout_matches_hand_encoding():
    header = StreamHeader(640, 480)
    data = write_stream(header, [Event(7, 3, 5, Polarity.ON, 200)])
    expected = b"EVS1" + struct.pack("<HH", 640, 480) + struct.pack("<QHHBB", 7, 3, 5, 1, 200)
    assert data == expected
    assert HEADER_SIZE == 8
    assert RECORD_SIZE == 14


def test_fuzzed_stream_is_bit_exact(rng, small_header):
    events = random_events(rng, 10_000)
    data = write_stream(small_header, events)
    header, decoded = read_stream(data)
    assert header == small_header
    assert decoded.dtype == EVENT_DTYPE
    assert np.array_equal(decoded, events)
    assert write_stream(header, decoded) == data


def test_empty_stream():
    header, events = read_stream(b"EVS1" + struct.pack("<HH", 10, 10))
    assert (header.width, header.height) == (10, 10)
    assert len(events) == 0


@pytest.mark.parametrize("data", [b"", b"EV", b"XVS1\x0a\x00\x0a\x00", b"evs1\x0a\x00\x0a\x00"])
def test_bad_magic(data):
    with pytest.raises(BadMagic):
        read_stream(data)


def test_incomplete_header_is_truncated():
    with pytest.raises(TruncatedRecord):
        read_stream(b"EVS1\x0a\x00")


def test_trailing_partial_record_is_truncated(small_header):
    data = write_stream(small_header, [Event(1, 1, 1, Polarity.OFF, 0)])
    with pytest.raises(TruncatedRecord):
        read_stream(data + b"\x00" * 5)


def test_zero_geometry_rejected():
    with pytest.raises(InvariantViolation):
        read_stream(b"EVS1" + struct.pack("<HH", 0, 10))


def test_out_of_range_coordinate(small_header):
    data = b"EVS1" + struct.pack("<HH", 64, 48) + struct.pack("<QHHBB", 0, 64, 0, 0, 0)
    with pytest.raises(CoordOutOfRange):
        read_stream(data)


def test_bad_polarity_byte():
    data = b"EVS1" + struct.pack("<HH", 64, 48) + struct.pack("<QHHBB", 0, 1, 1, 2, 0)
    with pytest.raises(InvariantViolation, match="record 0"):
        read_stream(data)


def test_timestamp_regression():
    data = (b"EVS1" + struct.pack("<HH", 64, 48)
            + struct.pack("<QHHBB", 10, 1, 1, 0, 0) + struct.pack("<QHHBB", 9, 1, 1, 0, 0))
    with pytest.raises(TimestampRegression, match="record 1"):
        read_stream(data)


def test_equal_timestamps_are_allowed(small_header):
    events = make_events([(5, 1, 1, 0, 0), (5, 2, 2, 1, 9)])
    _, decoded = read_stream(write_stream(small_header, events))
    assert np.array_equal(decoded, events)


def test_writer_rejects_events_outside_header(small_header):
    with pytest.raises(InvariantViolation):
        write_stream(small_header, make_events([(0, 100, 0, 0, 0)]))


def test_file_round_trip(tmp_path, rng, small_header):
    events = random_events(rng, 500)
    path = tmp_path / "s.evs1"
    save_stream(path, small_header, events)
    header, decoded = load_stream(path)
    assert header == small_header
    assert np.array_equal(decoded, events)


def test_csv_round_trip(rng, small_header, tmp_path):
    events = random_events(rng, 10_000)
    text = format_csv_events(events)
    assert text.startswith("t_us,x,y,polarity,gray\n")
    assert np.array_equal(read_csv_events(text, small_header), events)
    path = tmp_path / "e.csv"
    write_csv_events(path, small_header, events)
    assert path.read_text() == text


def test_csv_parse_error_names_line_and_column():
    text = "t_us,x,y,polarity,gray\n1,2,3,0,10\n2,abc,3,0,10\n"
    with pytest.raises(ParseError) as info:
        read_csv_events(text)
    assert info.value.line == 3
    assert info.value.column == 2


def test_csv_bad_header():
    with pytest.raises(ParseError) as info:
        read_csv_events("t,x,y,p,g\n1,2,3,0,10\n")
    assert info.value.line == 1


def test_csv_bad_polarity():
    with pytest.raises(ParseError) as info:
        read_csv_events("t_us,x,y,polarity,gray\n1,2,3,5,10\n")
    assert info.value.column == 4


def test_csv_field_count():
    with pytest.raises(ParseError) as info:
        read_csv_events("t_us,x,y,polarity,gray\n1,2,3,0\n")
    assert info.value.line == 2


def test_iter_events_yields_named_tuples():
    events = make_events([(3, 1, 2, 1, 50)])
    (e,) = list(iter_events(events))
    assert e == Event(3, 1, 2, Polarity.ON, 50)
    assert e.polarity is Polarity.ON


def test_event_fields_must_fit_their_record_width():
    with pytest.raises(InvariantViolation, match="x must be in 0..65535, got 66000"):
        to_event_array([Event(0, 66000, 1, Polarity.ON, 10)])
    with pytest.raises(InvariantViolation, match="t must be in"):
        to_event_array([Event(2 ** 64, 1, 1, Polarity.ON, 10)])
    with pytest.raises(InvariantViolation, match="t must be in"):
        to_event_array([Event(-1, 1, 1, Polarity.OFF, 0)])
    with pytest.raises(InvariantViolation, match="gray"):
        to_event_array([Event(0, 1, 1, Polarity.OFF, 256)])
    assert to_event_array([Event(2 ** 64 - 1, 65535, 65535, Polarity.ON, 255)])["t"][0] == 2 ** 64 - 1


def test_wide_arrays_are_range_checked_not_wrapped():
    wide = np.zeros(2, dtype=[("t", "<i8"), ("x", "<i4"), ("y", "<i4"), ("polarity", "<i4"), ("gray", "<i4")])
    wide["x"] = [3, 70000]
    with pytest.raises(InvariantViolation, match="event 1: x"):
        to_event_array(wide)
    wide["x"][1] = 65535
    wide["y"][0] = -2
    with pytest.raises(InvariantViolation, match="event 0: y"):
        to_event_array(wide)
    wide["y"][0] = 0
    wide["polarity"][1] = 2
    with pytest.raises(InvariantViolation, match="polarity"):
        to_event_array(wide)
    wide["polarity"][1] = 1
    events = to_event_array(wide)
    assert events.dtype == EVENT_DTYPE
    assert events["x"].tolist() == [3, 65535]


def test_csv_writer_rejects_wide_coordinates(tmp_path):
    with pytest.raises(InvariantViolation):
        write_csv_events(tmp_path / "e.csv", StreamHeader(64, 48), [Event(0, 66000, 1, Polarity.ON, 1)])
    assert not (tmp_path / "e.csv").exists()
