"""
Tracking-by-detection: a constant-velocity Kalman filter per fish, Hungarian
association on center distance, and an ID lifecycle that coasts unmatched
tracks on prediction for up to ``max_coast`` frames.
"""
import csv
import io
import os
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.components.detect import Detection
from src.exception import InvariantViolation, NegativeExtent, ParseError, SingularInnovationCovariance
from src.logger import logging

DEFAULT_Q_DIAG = (1.0, 1.0, 0.25, 0.25)
DEFAULT_R_DIAG = (4.0, 4.0)
DEFAULT_P0_DIAG = (10.0, 10.0, 100.0, 100.0)
DEFAULT_GATE_PX = 50.0
DEFAULT_MIN_HITS = 3
DEFAULT_MAX_COAST = 15

PSD_TOLERANCE = 1e-9
TIE_SCALE = 1e-9

TRACK_HEADER = "frame,id,x,y,w,h,status"
TRACK_FIELDS = TRACK_HEADER.split(",")


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DEAD = "dead"


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def _check_psd(name: str, m: np.ndarray) -> None:
    if not np.allclose(m, m.T, atol=PSD_TOLERANCE):
        raise InvariantViolation(f"{name} must be symmetric")
    if np.linalg.eigvalsh(_symmetrize(m)).min() < -PSD_TOLERANCE:
        raise InvariantViolation(f"{name} must be positive semi-definite")


@dataclass(frozen=True, eq=False)
class KalmanModel:
    """
    Linear motion and measurement model shared by every track.

    Attributes:
        F (np.ndarray): 4x4 state transition over one frame.
        H (np.ndarray): 2x4 measurement matrix selecting (x, y).
        Q (np.ndarray): 4x4 process noise covariance.
        R (np.ndarray): 2x2 measurement noise covariance.
        B (np.ndarray): 4x2 control input matrix.
        u (np.ndarray): Control vector, always zero.
    """
    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    B: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        _check_psd("Q", self.Q)
        _check_psd("R", self.R)
        if np.any(self.B @ self.u != 0):
            raise InvariantViolation("control term B.u must be zero")

    @classmethod
    def constant_velocity(cls, q_diag: Sequence[float] = DEFAULT_Q_DIAG,
                          r_diag: Sequence[float] = DEFAULT_R_DIAG) -> "KalmanModel":
        """State [x, y, vx, vy] with a unit frame step; velocities in pixels/frame."""
        if len(q_diag) != 4 or len(r_diag) != 2:
            raise InvariantViolation(f"need 4 Q and 2 R diagonal entries, got {len(q_diag)} and {len(r_diag)}")
        F = np.eye(4)
        F[0, 2] = F[1, 3] = 1.0
        H = np.zeros((2, 4))
        H[0, 0] = H[1, 1] = 1.0
        return cls(F=F, H=H, Q=np.diag(np.asarray(q_diag, dtype=np.float64)),
                   R=np.diag(np.asarray(r_diag, dtype=np.float64)),
                   B=np.zeros((4, 2)), u=np.zeros(2))


@dataclass(frozen=True, eq=False)
class TrackState:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def position(self) -> Tuple[float, float]:
        return float(self.mean[0]), float(self.mean[1])

    @property
    def velocity(self) -> Tuple[float, float]:
        return float(self.mean[2]), float(self.mean[3])


@dataclass(frozen=True, eq=False)
class Track:
    """
    One fish identity.

    Attributes:
        id (int): Unique, never reused within a run.
        state (TrackState): Kalman mean [x, y, vx, vy] and covariance.
        extent (Tuple[float, float]): (w, h) of the last matched detection.
        frames_since_update (int): Consecutive frames without a match.
        hits (int): Matched detections, the creating one included.
        status (TrackStatus): tentative, confirmed or dead.
    """
    id: int
    state: TrackState
    extent: Tuple[float, float]
    frames_since_update: int = 0
    hits: int = 1
    status: TrackStatus = TrackStatus.TENTATIVE

    @property
    def position(self) -> Tuple[float, float]:
        return self.state.position


def predict(track: Track, model: KalmanModel) -> Track:
    """
    Advance a track by one frame. frames_since_update is left to the step driver.

    Raises:
        InvariantViolation: The track is dead.
    """
    if track.status == TrackStatus.DEAD:
        raise InvariantViolation(f"track {track.id} is dead and cannot be predicted")
    mean = model.F @ track.state.mean + model.B @ model.u
    covariance = _symmetrize(model.F @ track.state.covariance @ model.F.T + model.Q)
    return replace(track, state=TrackState(mean, covariance))


def update(track: Track, z: Sequence[float], model: KalmanModel,
           extent: Optional[Tuple[float, float]] = None) -> Track:
    """
    Correct a predicted track with a measured center z = (x, y).

    Resets frames_since_update, counts a hit and, when given, takes the new extent.

    Raises:
        SingularInnovationCovariance: H.P.H^T + R cannot be inverted.
    """
    P = track.state.covariance
    innovation = np.asarray(z, dtype=np.float64) - model.H @ track.state.mean
    S = model.H @ P @ model.H.T + model.R
    try:
        # K = P.H^T.S^-1, solved rather than inverted
        gain = np.linalg.solve(S.T, (P @ model.H.T).T).T
    except np.linalg.LinAlgError as e:
        raise SingularInnovationCovariance(f"track {track.id}: innovation covariance is singular") from e
    if not np.all(np.isfinite(gain)):
        raise SingularInnovationCovariance(f"track {track.id}: innovation covariance is singular")
    mean = track.state.mean + gain @ innovation
    covariance = _symmetrize((np.eye(len(mean)) - gain @ model.H) @ P)
    return replace(
        track,
        state=TrackState(mean, covariance),
        extent=track.extent if extent is None else (float(extent[0]), float(extent[1])),
        frames_since_update=0,
        hits=track.hits + 1,
    )


@dataclass(frozen=True)
class Assignment:
    """Matches as (track index, detection index) pairs; all lists ascending."""
    matches: List[Tuple[int, int]]
    unmatched_tracks: List[int]
    unmatched_detections: List[int]


def distance_matrix(predicted: Sequence[Track], detections: Sequence[Detection]) -> np.ndarray:
    """Euclidean center distance, rows are tracks and columns detections."""
    tracks_xy = np.array([t.position for t in predicted], dtype=np.float64).reshape(-1, 2)
    dets_xy = np.array([(d.x, d.y) for d in detections], dtype=np.float64).reshape(-1, 2)
    return np.linalg.norm(tracks_xy[:, None, :] - dets_xy[None, :, :], axis=2)


def solve_assignment(cost: np.ndarray) -> List[Tuple[int, int]]:
    """
    Minimum-cost rectangular assignment.

    Equal-cost solutions resolve toward lower (row, column) pairs: a perturbation
    delta * j * (n_rows - i) is added before solving, with delta chosen so the
    total stays below 1e-9 of the largest cost.
    """
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    scale = float(cost.max()) if cost.size and cost.max() > 0 else 1.0
    delta = TIE_SCALE * scale / (1 + n * m * min(n, m))
    i = np.arange(n)[:, None]
    j = np.arange(m)[None, :]
    rows, cols = linear_sum_assignment(cost + delta * j * (n - i))
    return sorted(zip(rows.tolist(), cols.tolist()))


def assign(predicted: Sequence[Track], detections: Sequence[Detection], gate: float) -> Assignment:
    """
    Match predicted tracks to detections on center distance; matches farther than
    gate pixels are dissolved into unmatched on both sides.
    """
    if not gate > 0:
        raise InvariantViolation(f"gate must be > 0, got {gate}")
    cost = distance_matrix(predicted, detections)
    matches = []
    for i, j in solve_assignment(cost):
        if cost[i, j] <= gate:
            matches.append((i, j))
    matched_tracks = {i for i, _ in matches}
    matched_dets = {j for _, j in matches}
    return Assignment(
        matches=matches,
        unmatched_tracks=[i for i in range(len(predicted)) if i not in matched_tracks],
        unmatched_detections=[j for j in range(len(detections)) if j not in matched_dets],
    )


@dataclass
class TrackerConfig:
    """
    Tracker parameters.

    Attributes:
        q_diag (Tuple[float, ...]): Process noise diagonal, px^2. Default (1, 1, 0.25, 0.25).
        r_diag (Tuple[float, ...]): Measurement noise diagonal, px^2. Default (4, 4).
        p0_diag (Tuple[float, ...]): Initial covariance diagonal. Default (10, 10, 100, 100).
        gate_px (float): Largest center distance a match may have. Default 50.
        min_hits (int): Matches needed before a track is confirmed. Default 3.
        max_coast (int): Frames a track survives unmatched. Default 15.
    """
    q_diag: Tuple[float, ...] = DEFAULT_Q_DIAG
    r_diag: Tuple[float, ...] = DEFAULT_R_DIAG
    p0_diag: Tuple[float, ...] = DEFAULT_P0_DIAG
    gate_px: float = DEFAULT_GATE_PX
    min_hits: int = DEFAULT_MIN_HITS
    max_coast: int = DEFAULT_MAX_COAST

    def __post_init__(self):
        self.q_diag = tuple(float(v) for v in self.q_diag)
        self.r_diag = tuple(float(v) for v in self.r_diag)
        self.p0_diag = tuple(float(v) for v in self.p0_diag)
        if len(self.p0_diag) != 4 or min(self.p0_diag) < 0:
            raise InvariantViolation(f"p0_diag needs 4 non-negative entries, got {self.p0_diag}")
        if not self.gate_px > 0:
            raise InvariantViolation(f"gate_px must be > 0, got {self.gate_px}")
        if self.min_hits < 1:
            raise InvariantViolation(f"min_hits must be >= 1, got {self.min_hits}")
        if self.max_coast < 0:
            raise InvariantViolation(f"max_coast must be >= 0, got {self.max_coast}")
        self.model()

    def model(self) -> KalmanModel:
        return KalmanModel.constant_velocity(self.q_diag, self.r_diag)

    def initial_covariance(self) -> np.ndarray:
        return np.diag(np.asarray(self.p0_diag, dtype=np.float64))


@dataclass(frozen=True)
class SnapshotEntry:
    id: int
    x: float
    y: float
    w: float
    h: float
    status: TrackStatus
    matched: bool
    frames_since_update: int

    @property
    def counted(self) -> bool:
        """Confirmed and matched this frame."""
        return self.status == TrackStatus.CONFIRMED and self.matched

    @property
    def coasting(self) -> bool:
        return self.status == TrackStatus.CONFIRMED and not self.matched


@dataclass(frozen=True)
class TrackSnapshot:
    """Every live track after one frame, ordered by id."""
    frame: int
    entries: Tuple[SnapshotEntry, ...] = ()

    def rows(self) -> List["TrackRow"]:
        """Track CSV rows: confirmed tracks only, coasting ones marked as such."""
        return [
            TrackRow(self.frame, e.id, e.x, e.y, e.w, e.h, "confirmed" if e.matched else "coasting")
            for e in self.entries if e.status == TrackStatus.CONFIRMED
        ]


@dataclass(frozen=True)
class TrackSet:
    tracks: Tuple[Track, ...] = ()
    next_id: int = 0


def step(track_set: TrackSet, detections: Sequence[Detection], model: KalmanModel,
         config: TrackerConfig, frame: int) -> Tuple[TrackSet, TrackSnapshot]:
    """
    Advance every track by one frame against that frame's detections.

    Args:
        track_set (TrackSet): Live tracks and the next free id.
        detections (Sequence[Detection]): Target-class detections of this frame.
        model (KalmanModel): Motion and measurement model.
        config (TrackerConfig): Gate, confirmation and coast limits, P0.
        frame (int): Frame index recorded in the snapshot.

    Returns:
        (TrackSet, TrackSnapshot): The next state and what this frame looked like.
    """
    predicted = [predict(t, model) for t in track_set.tracks]
    result = assign(predicted, detections, config.gate_px)

    survivors: List[Tuple[Track, bool]] = []
    for i, j in result.matches:
        d = detections[j]
        track = update(predicted[i], (d.x, d.y), model, extent=(d.w, d.h))
        if track.status == TrackStatus.TENTATIVE and track.hits >= config.min_hits:
            track = replace(track, status=TrackStatus.CONFIRMED)
        survivors.append((track, True))
    for i in result.unmatched_tracks:
        track = replace(predicted[i], frames_since_update=predicted[i].frames_since_update + 1)
        if track.frames_since_update > config.max_coast:
            logging.debug(f"Frame {frame}: track {track.id} dead after {track.frames_since_update} unmatched frames")
            continue
        survivors.append((track, False))

    next_id = track_set.next_id
    for j in result.unmatched_detections:
        d = detections[j]
        track = Track(
            id=next_id,
            state=TrackState(np.array([d.x, d.y, 0.0, 0.0], dtype=np.float64), config.initial_covariance()),
            extent=(float(d.w), float(d.h)),
            status=TrackStatus.CONFIRMED if config.min_hits <= 1 else TrackStatus.TENTATIVE,
        )
        next_id += 1
        survivors.append((track, True))

    survivors.sort(key=lambda pair: pair[0].id)
    entries = tuple(
        SnapshotEntry(t.id, t.position[0], t.position[1], t.extent[0], t.extent[1],
                      t.status, matched, t.frames_since_update)
        for t, matched in survivors
    )
    return TrackSet(tuple(t for t, _ in survivors), next_id), TrackSnapshot(frame, entries)


class MultiFishTracker:
    """
    Stateful wrapper around step for frame-by-frame use.

    Frames must be fed in increasing order; frames without detections still have
    to be fed so that coasting tracks age.
    """
    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.model = self.config.model()
        self.track_set = TrackSet()
        self.last_frame: Optional[int] = None

    def update(self, frame: int, detections: Sequence[Detection]) -> TrackSnapshot:
        if self.last_frame is not None and frame <= self.last_frame:
            raise InvariantViolation(f"frame {frame} does not follow frame {self.last_frame}")
        self.track_set, snapshot = step(self.track_set, detections, self.model, self.config, frame)
        self.last_frame = frame
        return snapshot

    def run(self, detections: Mapping[int, Sequence[Detection]], first_frame: Optional[int] = None,
            last_frame: Optional[int] = None) -> Iterator[TrackSnapshot]:
        """
        Track over every frame from first_frame to last_frame inclusive, defaulting to
        the range covered by the detections.
        """
        if first_frame is None:
            first_frame = min(detections) if detections else 0
        if last_frame is None:
            last_frame = max(detections) if detections else first_frame - 1
        for frame in range(first_frame, last_frame + 1):
            yield self.update(frame, detections.get(frame, ()))
        logging.info(f"Tracked frames {first_frame}..{last_frame}: {self.track_set.next_id} ids issued")


def track_detections(detections: Mapping[int, Sequence[Detection]], config: Optional[TrackerConfig] = None,
                     first_frame: Optional[int] = None, last_frame: Optional[int] = None) -> List[TrackSnapshot]:
    return list(MultiFishTracker(config).run(detections, first_frame, last_frame))


@dataclass(frozen=True)
class TrackRow:
    """One row of the track CSV; status is "confirmed" (matched) or "coasting"."""
    frame: int
    id: int
    x: float
    y: float
    w: float
    h: float
    status: str = "confirmed"

    @property
    def coasting(self) -> bool:
        return self.status == "coasting"


def format_track_rows(rows: Iterable[TrackRow]) -> str:
    lines = [TRACK_HEADER]
    for r in rows:
        lines.append(",".join([str(int(r.frame)), str(int(r.id))]
                              + [repr(float(v)) for v in (r.x, r.y, r.w, r.h)]
                              + [r.status]))
    return "\n".join(lines) + "\n"


def write_tracks(path: Union[str, os.PathLike], snapshots: Iterable[TrackSnapshot]) -> int:
    """Write the track CSV; returns the number of rows."""
    rows = [row for snap in snapshots for row in snap.rows()]
    with open(path, "w", newline="") as f:
        f.write(format_track_rows(rows))
    logging.info(f"Wrote {len(rows)} track rows to {path}")
    return len(rows)


def read_tracks(source: Union[str, os.PathLike]) -> List[TrackRow]:
    """
    Read a track CSV ("frame,id,x,y,w,h,status") in file order.

    Raises:
        ParseError: Bad header, field count, value or status, with line and column.
        NegativeExtent: w or h <= 0.
    """
    if isinstance(source, str) and ("\n" in source or source.startswith(TRACK_HEADER)):
        handle, name = io.StringIO(source), "<text>"
    else:
        handle, name = open(source, "r", newline=""), os.fspath(source)
    rows = []
    with handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != TRACK_FIELDS:
            raise ParseError(f"expected header {TRACK_HEADER!r}", name, 1)
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            line = reader.line_num
            if len(row) != len(TRACK_FIELDS):
                raise ParseError(f"expected {len(TRACK_FIELDS)} fields, got {len(row)}", name, line)
            values = []
            for col, text in enumerate(row[:6], start=1):
                try:
                    values.append(int(text) if col <= 2 else float(text))
                except ValueError:
                    raise ParseError(f"bad {TRACK_FIELDS[col - 1]} value {text.strip()!r}", name, line, col)
            status = row[6].strip()
            if status not in ("confirmed", "coasting"):
                raise ParseError(f"status must be confirmed or coasting, got {status!r}", name, line, 7)
            frame, track_id, x, y, w, h = values
            if w <= 0 or h <= 0:
                raise NegativeExtent(f"{name}:{line}: box extent must be positive, got w={w}, h={h}")
            rows.append(TrackRow(frame, track_id, x, y, w, h, status))
    return rows


def rows_by_frame(rows: Iterable[TrackRow]) -> Dict[int, List[TrackRow]]:
    grouped: Dict[int, List[TrackRow]] = {}
    for r in sorted(rows, key=lambda r: r.frame):
        grouped.setdefault(r.frame, []).append(r)
    return grouped
