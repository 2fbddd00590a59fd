"""
Window rendering: binary, count, gray and accumulate frames per time window, and the
mixed frame that screen-blends them with the binary layer recoloured green.
"""
import concurrent.futures
import os
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.components.event_io import StreamHeader
from src.exception import EventOutOfWindow, GeometryMismatch, InvariantViolation, ParseError
from src.logger import logging

DEFAULT_FPS = 30.0
MICROS = 1_000_000


class FrameMode(str, Enum):
    BINARY = "binary"
    COUNT = "count"
    GRAY = "gray"
    ACCUMULATE = "accumulate"


LAYER_ORDER = (FrameMode.ACCUMULATE, FrameMode.GRAY, FrameMode.COUNT, FrameMode.BINARY)


@dataclass
class FramingConfig:
    """
    Attributes:
        fps (float): Windows per second. Default 30.
        origin_us (int | None): Window grid anchor; None anchors at the first event.
    """
    fps: float = DEFAULT_FPS
    origin_us: Optional[int] = None

    def __post_init__(self):
        if not self.fps > 0:
            raise InvariantViolation(f"fps must be > 0, got {self.fps}")


@dataclass(frozen=True)
class ModeFrame:
    mode: FrameMode
    pixels: np.ndarray

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class MixedFrame:
    pixels: np.ndarray

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class AccumulateState:
    """Most recent gray value per pixel, carried from window to window."""
    width: int
    height: int
    last_gray: np.ndarray

    @classmethod
    def empty(cls, width: int, height: int) -> "AccumulateState":
        return cls(width, height, np.zeros((height, width), dtype=np.uint8))


@dataclass(frozen=True)
class FrameStack:
    """
    The co-registered frames of one window. ``mixed`` is fused on first access.
    """
    window_index: int
    t_start: float
    t_end: float
    binary: ModeFrame
    count: ModeFrame
    gray: ModeFrame
    accumulate: ModeFrame
    event_count: int = field(default=0, compare=False)

    @cached_property
    def mixed(self) -> MixedFrame:
        return fuse(self.binary, self.count, self.gray, self.accumulate)

    def frames(self) -> Tuple[ModeFrame, ModeFrame, ModeFrame, ModeFrame]:
        return (self.binary, self.count, self.gray, self.accumulate)


def screen(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Screen blend on normalised values: C = 1 - (1 - A)(1 - B)."""
    return 1.0 - (1.0 - a) * (1.0 - b)


def composite(layers: Sequence[np.ndarray]) -> np.ndarray:
    """Screen a bottom-to-top stack of normalised layers."""
    out = np.zeros_like(np.asarray(layers[0], dtype=np.float64))
    for layer in layers:
        out = screen(out, np.asarray(layer, dtype=np.float64))
    return out


def quantize(normalized: np.ndarray) -> np.ndarray:
    """[0, 1] -> 0..255, rounding half away from zero."""
    return np.clip(np.floor(normalized * 255.0 + 0.5), 0, 255).astype(np.uint8)


def fuse(binary: ModeFrame, count: ModeFrame, gray: ModeFrame, accumulate: ModeFrame) -> MixedFrame:
    """
    Build the mixed frame. Count, gray and accumulate become gray RGB layers, binary
    becomes a green layer on top; every channel is screened bottom to top.

    Raises:
        GeometryMismatch: Frames of different shapes.
    """
    shapes = {f.pixels.shape for f in (binary, count, gray, accumulate)}
    if len(shapes) != 1:
        raise GeometryMismatch(f"cannot fuse frames of shapes {sorted(shapes)}")
    height, width = binary.pixels.shape

    def as_rgb(frame: ModeFrame) -> np.ndarray:
        v = frame.pixels.astype(np.float64) / 255.0
        return np.repeat(v[:, :, None], 3, axis=2)

    green = np.zeros((height, width, 3), dtype=np.float64)
    green[:, :, 1] = binary.pixels.astype(np.float64) / 255.0
    layers = [as_rgb(accumulate), as_rgb(gray), as_rgb(count), green]
    return MixedFrame(quantize(composite(layers)))


def _check_geometry(events: np.ndarray, state: AccumulateState) -> None:
    if len(events) and (int(events["x"].max()) >= state.width or int(events["y"].max()) >= state.height):
        raise GeometryMismatch(f"events fall outside the {state.width}x{state.height} frame")


def render_window(events: np.ndarray, state: AccumulateState, window_index: int = 0,
                  t_start: Optional[float] = None, t_end: Optional[float] = None,
                  check_bounds: bool = True) -> Tuple[FrameStack, AccumulateState]:
    """
    Render one window of time-ordered events.

    Args:
        events (np.ndarray): EVENT_DTYPE records with t_start <= t < t_end.
        state (AccumulateState): Accumulate-mode memory from the previous window.
        window_index (int): Index recorded on the stack.
        t_start, t_end (float | None): Window bounds in microseconds; when omitted the
            bounds are taken from the events and not checked.
        check_bounds (bool): Verify every event lies in [t_start, t_end).

    Returns:
        (FrameStack, AccumulateState)

    Raises:
        EventOutOfWindow: An event outside [t_start, t_end).
        GeometryMismatch: An event outside the state geometry.
    """
    if check_bounds and t_start is not None and t_end is not None and len(events):
        t = events["t"]
        outside = np.flatnonzero((t < t_start) | (t >= t_end))
        if outside.size:
            i = int(outside[0])
            raise EventOutOfWindow(f"event {i} at t={t[i]} outside window [{t_start}, {t_end})")
    _check_geometry(events, state)
    height, width = state.height, state.width
    if t_start is None:
        t_start = float(events["t"][0]) if len(events) else 0.0
    if t_end is None:
        t_end = float(events["t"][-1]) + 1.0 if len(events) else t_start

    flat = events["y"].astype(np.int64) * width + events["x"].astype(np.int64)
    counts = np.bincount(flat, minlength=width * height).reshape(height, width)

    binary = np.where(counts > 0, 255, 0).astype(np.uint8)

    n_max = int(counts.max()) if len(events) else 0
    if n_max == 0:
        count = np.zeros((height, width), dtype=np.uint8)
    else:
        # floor(255 n / n_max + 1/2) in integers
        count = ((510 * counts + n_max) // (2 * n_max)).astype(np.uint8)

    # last event per pixel: first occurrence in the reversed stream
    gray = np.zeros(height * width, dtype=np.uint8)
    last_gray = state.last_gray.copy()
    if len(events):
        rev = flat[::-1]
        pixels, first_rev = np.unique(rev, return_index=True)
        values = events["gray"][::-1][first_rev]
        gray[pixels] = values
        last_gray.reshape(-1)[pixels] = values
    gray = gray.reshape(height, width)

    new_state = AccumulateState(width, height, last_gray)
    stack = FrameStack(
        window_index=window_index,
        t_start=float(t_start),
        t_end=float(t_end),
        binary=ModeFrame(FrameMode.BINARY, binary),
        count=ModeFrame(FrameMode.COUNT, count),
        gray=ModeFrame(FrameMode.GRAY, gray),
        accumulate=ModeFrame(FrameMode.ACCUMULATE, last_gray.copy()),
        event_count=len(events),
    )
    return stack, new_state


def frame_rate(fps: Union[float, Fraction]) -> Fraction:
    """fps as the exact rational every window and frame boundary is computed with."""
    return Fraction(fps).limit_denominator(1_000_000)


def window_start_us(index: int, fps: Union[float, Fraction]) -> int:
    """First whole microsecond of window index on the grid anchored at t=0."""
    rate = frame_rate(fps)
    return -((-index * MICROS * rate.denominator) // rate.numerator)


def window_indices(events: np.ndarray, fps: Union[float, Fraction], origin_us: int) -> np.ndarray:
    """Window offset k of every event on the grid anchored at origin_us."""
    rate = frame_rate(fps)
    rel = events["t"].astype(np.int64) - np.int64(origin_us)
    if (rel < 0).any():
        raise EventOutOfWindow(f"events precede the window origin {origin_us}")
    return (rel * rate.numerator) // (rate.denominator * MICROS)


def windows(events: np.ndarray, fps: float, header: StreamHeader,
            origin_us: Optional[int] = None) -> Iterator[FrameStack]:
    """
    Partition a time-ordered stream into contiguous 1/fps windows and render each one,
    threading accumulate state from window to window. Empty windows between events
    are rendered too; an empty stream yields nothing.

    Args:
        events (np.ndarray): EVENT_DTYPE, non-decreasing t.
        fps (float): Windows per second, > 0.
        header (StreamHeader): Frame geometry.
        origin_us (int | None): Grid anchor; defaults to the first event's timestamp.
    """
    if not fps > 0:
        raise InvariantViolation(f"fps must be > 0, got {fps}")
    if len(events) == 0:
        return
    if origin_us is None:
        origin_us = int(events["t"][0])
    rate = frame_rate(fps)
    length = Fraction(MICROS) / rate
    base_index = (origin_us * rate.numerator) // (rate.denominator * MICROS)
    k_of_event = window_indices(events, rate, origin_us)
    n_windows = int(k_of_event[-1]) + 1
    bounds = np.searchsorted(k_of_event, np.arange(n_windows + 1), side="left")

    state = AccumulateState.empty(header.width, header.height)
    for k in range(n_windows):
        chunk = events[bounds[k]:bounds[k + 1]]
        t_start = origin_us + k * length
        t_end = origin_us + (k + 1) * length
        stack, state = render_window(chunk, state, int(base_index + k), float(t_start), float(t_end),
                                     check_bounds=False)
        yield stack


# ---------------------------------------------------------------- netpbm export

def write_pgm(path: Union[str, os.PathLike], frame: ModeFrame) -> None:
    """8-bit binary PGM (P5)."""
    pixels = np.ascontiguousarray(frame.pixels, dtype=np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def write_ppm(path: Union[str, os.PathLike], frame: MixedFrame) -> None:
    """8-bit binary PPM (P6)."""
    pixels = np.ascontiguousarray(frame.pixels, dtype=np.uint8)
    height, width, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_netpbm(path: Union[str, os.PathLike]) -> np.ndarray:
    """Read a P5 or P6 file written by write_pgm / write_ppm."""
    with open(path, "rb") as f:
        data = f.read()
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated netpbm header", os.fspath(path))
        tokens.append(data[start:pos])
    pos += 1
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or magic not in (b"P5", b"P6"):
        raise ParseError(f"unsupported netpbm variant {magic!r} maxval {maxval}", os.fspath(path))
    channels = 3 if magic == b"P6" else 1
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * channels, offset=pos)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return pixels.reshape(shape).copy()


def frame_paths(out_dir: Union[str, os.PathLike], window_index: int) -> dict:
    name = f"frame_{window_index:06d}"
    paths = {mode.value: os.path.join(out_dir, mode.value, name + ".pgm") for mode in FrameMode}
    paths["mixed"] = os.path.join(out_dir, "mixed", name + ".ppm")
    return paths


def export_frame_stack(stack: FrameStack, out_dir: Union[str, os.PathLike]) -> List[str]:
    """Write the four PGMs and the mixed PPM for one window; returns the written paths."""
    paths = frame_paths(out_dir, stack.window_index)
    for frame in stack.frames():
        write_pgm(paths[frame.mode.value], frame)
    write_ppm(paths["mixed"], stack.mixed)
    return list(paths.values())


def export_frames(stacks: Iterator[FrameStack], out_dir: Union[str, os.PathLike], max_workers: int = 4) -> int:
    """
    Render and write every window. Rendering stays sequential (accumulate state);
    fusion and file writes fan out over a thread pool.

    Returns:
        int: Number of windows written.
    """
    for sub in [m.value for m in FrameMode] + ["mixed"]:
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    written = 0
    pending = set()
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        for stack in stacks:
            pending.add(executor.submit(export_frame_stack, stack, out_dir))
            # bound the frames held in memory
            if len(pending) >= 2 * max_workers:
                done, pending = concurrent.futures.wait(pending, return_when=concurrent.futures.FIRST_COMPLETED)
                for future in done:
                    future.result()
                    written += 1
        for future in concurrent.futures.as_completed(pending):
            future.result()
            written += 1
    logging.info(f"Exported {written} windows to {out_dir}")
    return written
