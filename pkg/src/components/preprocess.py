"""
Event-level preprocessing: fixed-pattern-noise suppression from a dark capture,
and lens undistortion from supplied Brown-Conrady calibration parameters.
"""
import os
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.components.event_io import Event, StreamHeader
from src.exception import GeometryMismatch, InvariantViolation, NonConvergence, NonPositiveDuration
from src.logger import logging

DEFAULT_FPN_THRESHOLD = 2.0
DEFAULT_DARK_DURATION_S = 5.0
MAX_ITERATIONS = 20
TOLERANCE = 1e-8


@dataclass
class PreprocessConfig:
    """
    Configuration for noise suppression.

    Attributes:
        fpn_threshold (float): Events/second above which a dark-capture pixel is hot. Default 2.
        dark_events (str | None): EVS1 file recorded with the lens covered.
        dark_duration_s (float): Length of the dark capture in seconds. Default 5 ("a few seconds").
    """
    fpn_threshold: float = DEFAULT_FPN_THRESHOLD
    dark_events: Optional[str] = None
    dark_duration_s: float = DEFAULT_DARK_DURATION_S

    def __post_init__(self):
        if self.fpn_threshold < 0:
            raise InvariantViolation(f"fpn_threshold must be >= 0, got {self.fpn_threshold}")
        if self.dark_duration_s <= 0:
            raise NonPositiveDuration(f"dark_duration_s must be > 0, got {self.dark_duration_s}")


@dataclass
class HotPixelModel:
    """
    Per-pixel dark-capture firing rates and the resulting hot-pixel mask.

    Attributes:
        width (int), height (int): Sensor geometry.
        rate (np.ndarray): float64 (height, width), events per second.
        hot_mask (np.ndarray): bool (height, width), rate > threshold.
        threshold (float): Events per second.
    """
    width: int
    height: int
    rate: np.ndarray
    hot_mask: np.ndarray
    threshold: float

    @property
    def hot_count(self) -> int:
        return int(self.hot_mask.sum())


def build_hot_pixel_model(dark_events: np.ndarray, duration: float, geometry: StreamHeader,
                          threshold: float = DEFAULT_FPN_THRESHOLD) -> HotPixelModel:
    """
    Fold a dark capture into per-pixel rates and mark pixels firing faster than threshold.

    Raises:
        NonPositiveDuration: duration <= 0.
        GeometryMismatch: A dark event outside the geometry.
    """
    if not duration > 0:
        raise NonPositiveDuration(f"dark capture duration must be > 0 s, got {duration}")
    width, height = geometry.width, geometry.height
    if len(dark_events) and (int(dark_events["x"].max()) >= width or int(dark_events["y"].max()) >= height):
        raise GeometryMismatch(f"dark capture has events outside {width}x{height}")
    flat = dark_events["y"].astype(np.int64) * width + dark_events["x"].astype(np.int64)
    counts = np.bincount(flat, minlength=width * height).reshape(height, width)
    rate = counts / float(duration)
    hot_mask = rate > threshold
    logging.info(f"Hot-pixel model: {int(hot_mask.sum())} hot pixels above {threshold} ev/s "
                 f"from {len(dark_events)} dark events over {duration} s")
    return HotPixelModel(width, height, rate, hot_mask, float(threshold))


def suppress_fpn(events: np.ndarray, model: HotPixelModel,
                 geometry: Optional[StreamHeader] = None) -> np.ndarray:
    """
    Drop every event that lands on a hot pixel; order of the rest is preserved.

    Raises:
        GeometryMismatch: The stream geometry or an event lies outside the model.
    """
    if geometry is not None and (geometry.width, geometry.height) != (model.width, model.height):
        raise GeometryMismatch(
            f"stream is {geometry.width}x{geometry.height}, model is {model.width}x{model.height}"
        )
    if len(events) == 0:
        return events
    if int(events["x"].max()) >= model.width or int(events["y"].max()) >= model.height:
        raise GeometryMismatch(f"events fall outside the {model.width}x{model.height} model")
    keep = ~model.hot_mask[events["y"], events["x"]]
    out = events[keep]
    logging.info(f"FPN suppression removed {len(events) - len(out)} of {len(events)} events")
    return out


def save_hot_pixel_model(path: Union[str, os.PathLike], model: HotPixelModel) -> None:
    np.savez(path, rate=model.rate, hot_mask=model.hot_mask, threshold=model.threshold)


def load_hot_pixel_model(path: Union[str, os.PathLike]) -> HotPixelModel:
    with np.load(path) as data:
        rate = data["rate"]
        return HotPixelModel(rate.shape[1], rate.shape[0], rate, data["hot_mask"], float(data["threshold"]))


@dataclass(frozen=True)
class CalibrationParams:
    """
    Pinhole intrinsics plus Brown-Conrady distortion, as produced by a Zhang-style calibration.

    Attributes:
        fx, fy (float): Focal lengths in pixels, both > 0.
        cx, cy (float): Principal point in pixels.
        k1, k2, k3 (float): Radial coefficients.
        p1, p2 (float): Tangential coefficients.
    """
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantViolation(f"focal lengths must be > 0, got fx={self.fx}, fy={self.fy}")

    @property
    def is_identity(self) -> bool:
        return not any((self.k1, self.k2, self.k3, self.p1, self.p2))


@dataclass
class CalibrationConfig:
    """
    Calibration keys as read from the config file; unset fx means no undistortion.

    Attributes mirror CalibrationParams; cx and cy default to the sensor centre.
    """
    fx: Optional[float] = None
    fy: Optional[float] = None
    cx: Optional[float] = None
    cy: Optional[float] = None
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def params(self, header: StreamHeader) -> Optional[CalibrationParams]:
        if self.fx is None and self.fy is None:
            return None
        fx = self.fx if self.fx is not None else self.fy
        fy = self.fy if self.fy is not None else self.fx
        cx = self.cx if self.cx is not None else (header.width - 1) / 2.0
        cy = self.cy if self.cy is not None else (header.height - 1) / 2.0
        return CalibrationParams(fx, fy, cx, cy, self.k1, self.k2, self.k3, self.p1, self.p2)


def distort_normalized(x: np.ndarray, y: np.ndarray, params: CalibrationParams) -> Tuple[np.ndarray, np.ndarray]:
    """Forward Brown-Conrady model on normalised coordinates."""
    r2 = x * x + y * y
    radial = 1.0 + r2 * (params.k1 + r2 * (params.k2 + r2 * params.k3))
    xd = x * radial + 2.0 * params.p1 * x * y + params.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + params.p1 * (r2 + 2.0 * y * y) + 2.0 * params.p2 * x * y
    return xd, yd


def undistort_normalized(xd: np.ndarray, yd: np.ndarray, params: CalibrationParams,
                         max_iter: int = MAX_ITERATIONS,
                         tol: float = TOLERANCE) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Invert distort_normalized by fixed-point iteration.

    Returns:
        (x, y, converged): Undistorted normalised coordinates and a per-point bool.
    """
    xd = np.asarray(xd, dtype=np.float64)
    yd = np.asarray(yd, dtype=np.float64)
    x = xd.copy()
    y = yd.copy()
    converged = np.zeros(xd.shape, dtype=bool)
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (params.k1 + r2 * (params.k2 + r2 * params.k3))
        dx = 2.0 * params.p1 * x * y + params.p2 * (r2 + 2.0 * x * x)
        dy = params.p1 * (r2 + 2.0 * y * y) + 2.0 * params.p2 * x * y
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = (xd - dx) / radial
            y_new = (yd - dy) / radial
        step = np.maximum(np.abs(x_new - x), np.abs(y_new - y))
        active = ~converged
        x = np.where(active, x_new, x)
        y = np.where(active, y_new, y)
        converged |= active & np.isfinite(step) & (step < tol)
        if converged.all():
            break
    return x, y, converged


def round_half_away(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, np.floor(v + 0.5), np.ceil(v - 0.5))


def _undistort_pixels(u: np.ndarray, v: np.ndarray, params: CalibrationParams):
    xd = (u - params.cx) / params.fx
    yd = (v - params.cy) / params.fy
    x, y, ok = undistort_normalized(xd, yd, params)
    uu = round_half_away(params.fx * x + params.cx)
    vv = round_half_away(params.fy * y + params.cy)
    return uu, vv, ok


def undistort_event(e: Event, params: CalibrationParams) -> Event:
    """
    Move one event to its undistorted pixel; t, polarity and gray are unchanged.

    The result may lie off the sensor; undistort_stream drops such events.

    Raises:
        NonConvergence: Fixed-point inversion missed the tolerance after MAX_ITERATIONS.
    """
    uu, vv, ok = _undistort_pixels(np.array([float(e.x)]), np.array([float(e.y)]), params)
    if not ok[0]:
        raise NonConvergence(f"undistortion of ({e.x}, {e.y}) did not converge in {MAX_ITERATIONS} iterations")
    return e._replace(x=int(uu[0]), y=int(vv[0]))


def build_undistort_map(params: CalibrationParams, header: StreamHeader) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-pixel remap table for the whole sensor.

    Returns:
        (map_x, map_y, valid): int64 target coordinates and a bool mask of pixels that
        converged and land on the sensor.
    """
    v, u = np.mgrid[0:header.height, 0:header.width].astype(np.float64)
    uu, vv, ok = _undistort_pixels(u, v, params)
    valid = ok & (uu >= 0) & (uu < header.width) & (vv >= 0) & (vv < header.height)
    map_x = np.where(valid, uu, 0).astype(np.int64)
    map_y = np.where(valid, vv, 0).astype(np.int64)
    return map_x, map_y, valid


def undistort_stream(events: np.ndarray, params: CalibrationParams, header: StreamHeader) -> np.ndarray:
    """
    Undistort every event through a per-pixel table; drop events that land off the
    sensor or whose pixel does not converge.
    """
    if len(events) == 0:
        return events
    map_x, map_y, valid = build_undistort_map(params, header)
    ys = events["y"]
    xs = events["x"]
    keep = valid[ys, xs]
    out = events[keep].copy()
    out["x"] = map_x[ys[keep], xs[keep]]
    out["y"] = map_y[ys[keep], xs[keep]]
    unconverged = int((~valid).sum())
    if len(out) < len(events):
        logging.warning(f"Undistortion dropped {len(events) - len(out)} of {len(events)} events "
                        f"({unconverged} sensor pixels map off-sensor or do not converge)")
    return out
