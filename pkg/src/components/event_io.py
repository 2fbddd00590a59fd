"""
Event stream codecs: the EVS1 binary container and the CSV interchange format.

EVS1 layout (all integers little-endian):

    header  = magic "EVS1" (4) | width u16 | height u16
    record  = t u64 (microseconds) | x u16 | y u16 | polarity u8 | gray u8   (14 octets)

Streams are held as numpy structured arrays whose dtype is byte-for-byte the
EVS1 record, so decoding is one ``frombuffer`` over the record area.
"""
import csv
import io
import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, NamedTuple, Tuple, Union

import numpy as np

from src.exception import (
    BadMagic,
    CoordOutOfRange,
    InvariantViolation,
    ParseError,
    TimestampRegression,
    TruncatedRecord,
)
from src.logger import logging

MAGIC = b"EVS1"
HEADER_STRUCT = struct.Struct("<4sHH")
HEADER_SIZE = HEADER_STRUCT.size

EVENT_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("polarity", "u1"), ("gray", "u1")]
)
RECORD_SIZE = EVENT_DTYPE.itemsize
# inclusive value range of every record field
FIELD_RANGES = {name: (0, int(np.iinfo(EVENT_DTYPE[name]).max)) for name in EVENT_DTYPE.names}
FIELD_RANGES["polarity"] = (0, 1)

CSV_HEADER = "t_us,x,y,polarity,gray"
CSV_FIELDS = CSV_HEADER.split(",")

DEFAULT_WIDTH = 1280
DEFAULT_HEIGHT = 800

PathOrText = Union[str, os.PathLike]


class Polarity(IntEnum):
    OFF = 0
    ON = 1


class Event(NamedTuple):
    """One sensor event. Coordinates are pixels, t is microseconds."""
    t: int
    x: int
    y: int
    polarity: Polarity
    gray: int


@dataclass(frozen=True)
class StreamHeader:
    """
    Sensor geometry carried at the front of every EVS1 stream.

    Attributes:
        width (int): Sensor columns.
        height (int): Sensor rows.
        magic (bytes): Always b"EVS1".
    """
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    magic: bytes = MAGIC

    def __post_init__(self):
        if self.magic != MAGIC:
            raise BadMagic(f"header magic must be {MAGIC!r}, got {self.magic!r}")
        for name in ("width", "height"):
            value = getattr(self, name)
            if not 1 <= int(value) <= 0xFFFF:
                raise InvariantViolation(f"{name} must be in 1..65535, got {value}")

    @property
    def shape(self) -> Tuple[int, int]:
        """(rows, columns), the numpy frame shape for this sensor."""
        return (self.height, self.width)


@dataclass
class StreamConfig:
    """
    Sensor geometry used when a stream is created rather than read.

    Attributes:
        width (int): Sensor columns. Default 1280.
        height (int): Sensor rows. Default 800.
    """
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def header(self) -> StreamHeader:
        return StreamHeader(self.width, self.height)


def empty_events() -> np.ndarray:
    return np.zeros(0, dtype=EVENT_DTYPE)


def _out_of_range(name: str, column: np.ndarray) -> np.ndarray:
    """Mask of the values that do not fit the record field."""
    lo, hi = FIELD_RANGES[name]
    if column.dtype.kind in "iu":
        info = np.iinfo(column.dtype)
        bad = np.zeros(len(column), dtype=bool)
        if info.min < lo:
            bad |= column < lo
        if info.max > hi:
            bad |= column > hi
        return bad
    return np.array([not lo <= v <= hi for v in column.tolist()], dtype=bool)


def to_event_array(events: Union[np.ndarray, Iterable[Event]]) -> np.ndarray:
    """
    Normalise a structured array or an iterable of Event into an EVENT_DTYPE array.

    Raises:
        InvariantViolation: A field that does not fit its record width (t u64, x and y
            u16, gray u8) or a polarity other than 0 or 1.
    """
    if isinstance(events, np.ndarray):
        if events.dtype == EVENT_DTYPE:
            return events
        out = np.zeros(len(events), dtype=EVENT_DTYPE)
        for name in EVENT_DTYPE.names:
            column = np.asarray(events[name])
            bad = np.flatnonzero(_out_of_range(name, column))
            if bad.size:
                i = int(bad[0])
                lo, hi = FIELD_RANGES[name]
                raise InvariantViolation(f"event {i}: {name} must be in {lo}..{hi}, got {column[i]}")
            out[name] = column
        return out
    rows = list(events)
    out = np.zeros(len(rows), dtype=EVENT_DTYPE)
    for i, e in enumerate(rows):
        values = (int(e.t), int(e.x), int(e.y), int(e.polarity), int(e.gray))
        for name, value in zip(EVENT_DTYPE.names, values):
            lo, hi = FIELD_RANGES[name]
            if not lo <= value <= hi:
                raise InvariantViolation(f"event {i}: {name} must be in {lo}..{hi}, got {value}")
        out[i] = values
    return out


def iter_events(events: np.ndarray) -> Iterator[Event]:
    for t, x, y, p, g in events.tolist():
        yield Event(t, x, y, Polarity(p), g)


def validate_events(header: StreamHeader, events: np.ndarray) -> None:
    """
    Check coordinate bounds, polarity and timestamp order against a header.

    Raises:
        CoordOutOfRange: An x or y outside the sensor.
        InvariantViolation: A polarity byte other than 0 or 1.
        TimestampRegression: Timestamps decrease somewhere.
    """
    if len(events) == 0:
        return
    bad = np.flatnonzero((events["x"] >= header.width) | (events["y"] >= header.height))
    if bad.size:
        i = int(bad[0])
        raise CoordOutOfRange(
            f"record {i}: ({events['x'][i]}, {events['y'][i]}) outside {header.width}x{header.height}"
        )
    bad = np.flatnonzero(events["polarity"] > 1)
    if bad.size:
        i = int(bad[0])
        raise InvariantViolation(f"record {i}: polarity must be 0 or 1, got {events['polarity'][i]}")
    regress = np.flatnonzero(events["t"][1:] < events["t"][:-1])
    if regress.size:
        i = int(regress[0]) + 1
        raise TimestampRegression(
            f"record {i}: t={events['t'][i]} precedes previous t={events['t'][i - 1]}"
        )


def read_stream(data: bytes) -> Tuple[StreamHeader, np.ndarray]:
    """
    Decode an EVS1 byte string.

    Args:
        data (bytes): Whole stream, header included.

    Returns:
        (StreamHeader, np.ndarray): Header and EVENT_DTYPE records in file order.

    Raises:
        BadMagic, TruncatedRecord, CoordOutOfRange, TimestampRegression, InvariantViolation
    """
    data = bytes(data)
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"stream does not start with {MAGIC!r}: {data[:4]!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedRecord(f"header needs {HEADER_SIZE} octets, got {len(data)}")
    magic, width, height = HEADER_STRUCT.unpack_from(data, 0)
    header = StreamHeader(width, height, magic)

    body = len(data) - HEADER_SIZE
    count, remainder = divmod(body, RECORD_SIZE)
    if remainder:
        raise TruncatedRecord(
            f"record area of {body} octets is not a multiple of {RECORD_SIZE} ({remainder} trailing)"
        )
    events = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=HEADER_SIZE).copy()
    validate_events(header, events)
    return header, events


def write_stream(header: StreamHeader, events: Union[np.ndarray, Iterable[Event]]) -> bytes:
    """
    Encode a header and events as EVS1.

    Raises:
        InvariantViolation: Any event outside the header geometry, a bad polarity,
            or timestamps out of order.
    """
    events = to_event_array(events)
    try:
        validate_events(header, events)
    except (CoordOutOfRange, TimestampRegression) as e:
        raise InvariantViolation(str(e)) from e
    return HEADER_STRUCT.pack(header.magic, header.width, header.height) + events.tobytes()


def load_stream(path: PathOrText) -> Tuple[StreamHeader, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    header, events = read_stream(data)
    logging.info(f"Read {len(events)} events ({header.width}x{header.height}) from {path}")
    return header, events


def save_stream(path: PathOrText, header: StreamHeader, events: np.ndarray) -> None:
    payload = write_stream(header, events)
    with open(path, "wb") as f:
        f.write(payload)
    logging.info(f"Wrote {len(events)} events to {path}")


def _open_text(source: PathOrText):
    """Return (file object, name). Strings containing a newline or the CSV header are inline text."""
    if isinstance(source, str) and ("\n" in source or source.startswith(CSV_HEADER)):
        return io.StringIO(source), "<text>"
    return open(source, "r", newline=""), os.fspath(source)


def read_csv_events(source: PathOrText, header: StreamHeader = StreamHeader()) -> np.ndarray:
    """
    Parse the CSV interchange format ("t_us,x,y,polarity,gray" then one event per line).

    Args:
        source: A path, or the CSV text itself.
        header (StreamHeader): Geometry the coordinates are checked against.

    Raises:
        ParseError: Malformed header, field count or field value, with line and column.
        CoordOutOfRange, TimestampRegression: As for read_stream.
    """
    handle, name = _open_text(source)
    with handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None:
            raise ParseError(f"missing header line {CSV_HEADER!r}", name, 1)
        if [c.strip() for c in first] != CSV_FIELDS:
            raise ParseError(f"expected header {CSV_HEADER!r}, got {','.join(first)!r}", name, 1)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(CSV_FIELDS):
                raise ParseError(f"expected {len(CSV_FIELDS)} fields, got {len(row)}", name, line)
            values = []
            for col, text in enumerate(row, start=1):
                try:
                    values.append(int(text.strip()))
                except ValueError:
                    raise ParseError(f"{CSV_FIELDS[col - 1]} is not an integer: {text!r}", name, line, col)
            t, x, y, polarity, gray = values
            if t < 0 or t > 0xFFFFFFFFFFFFFFFF:
                raise ParseError(f"t_us out of range: {t}", name, line, 1)
            if not 0 <= x <= 0xFFFF:
                raise ParseError(f"x out of range: {x}", name, line, 2)
            if not 0 <= y <= 0xFFFF:
                raise ParseError(f"y out of range: {y}", name, line, 3)
            if polarity not in (0, 1):
                raise ParseError(f"polarity must be 0 or 1, got {polarity}", name, line, 4)
            if not 0 <= gray <= 255:
                raise ParseError(f"gray out of range: {gray}", name, line, 5)
            rows.append((t, x, y, polarity, gray))
    events = np.array(rows, dtype=EVENT_DTYPE) if rows else empty_events()
    validate_events(header, events)
    return events


def format_csv_events(events: Union[np.ndarray, Iterable[Event]]) -> str:
    events = to_event_array(events)
    lines = [CSV_HEADER]
    lines.extend(f"{t},{x},{y},{p},{g}" for t, x, y, p, g in events.tolist())
    return "\n".join(lines) + "\n"


def write_csv_events(path: PathOrText, header: StreamHeader, events: Union[np.ndarray, Iterable[Event]]) -> None:
    """
    Write events as CSV after checking them against the header.

    Raises:
        InvariantViolation: On out-of-range fields or unordered timestamps.
    """
    events = to_event_array(events)
    try:
        validate_events(header, events)
    except (CoordOutOfRange, TimestampRegression) as e:
        raise InvariantViolation(str(e)) from e
    with open(path, "w", newline="") as f:
        f.write(format_csv_events(events))
    logging.info(f"Wrote {len(events)} events as CSV to {path}")
