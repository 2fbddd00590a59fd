"""
Synthetic fish scenes: a seeded random walk of flexing elliptical fish rendered as
ON/OFF contour events, with hot-pixel noise, scripted occlusions and optional
mirror reflections.
Ground truth is written in the detection CSV shape with the fish index as id.

Random draws come from one ``numpy.random.default_rng(seed)`` in a fixed order:
hot-pixel positions; then per fish in index order x, y, heading, speed, gray;
then per frame (from frame 1) per fish a turn and a speed jitter; then the
fish-event timestamps of that frame; then per hot pixel a Poisson count; then
the hot-pixel timestamps.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.components.detect import Detection, DetectionClass, write_detections
from src.components.event_io import EVENT_DTYPE, Polarity, StreamHeader, empty_events, save_stream
from src.components.framing import window_start_us
from src.exception import InvariantViolation, UnknownFishId
from src.logger import logging

DEFAULT_N_FISH = 20
DEFAULT_FISH_LENGTH = 60.0
DEFAULT_FISH_WIDTH = 12.0
DEFAULT_FLEX_PX = 2.0
DEFAULT_SPEED_RANGE = (2.0, 8.0)
DEFAULT_TURN_STD = 0.15
DEFAULT_DURATION_S = 10.0
DEFAULT_HOT_PIXEL_RATE = 50.0
SPEED_JITTER_STD = 0.5
HOT_PIXEL_GRAY = 128
FRAME_EPSILON = 1e-9

FULL_NEIGHBOURHOOD = np.ones((3, 3), dtype=bool)

# (x, y, heading, speed)
Pose = Tuple[float, float, float, float]


@dataclass(frozen=True)
class HotPixelSpec:
    x: int
    y: int
    rate: float

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.rate < 0:
            raise InvariantViolation(f"hot pixel needs x, y, rate >= 0, got {self}")


@dataclass(frozen=True)
class OcclusionScript:
    """Fish a swims as fish b's wingman and lies fully under it for start <= frame < end."""
    a: int
    b: int
    start: int
    end: int

    def __post_init__(self):
        if self.a == self.b:
            raise InvariantViolation(f"occlusion needs two fish, got a = b = {self.a}")
        if not 0 <= self.start < self.end:
            raise InvariantViolation(f"occlusion needs 0 <= start < end, got {self.start}, {self.end}")


@dataclass
class SceneSpec:
    """
    A synthetic tank.

    Attributes:
        width, height (int): Sensor geometry in pixels.
        n_fish (int): Number of fish.
        fish_length, fish_width (float): Ellipse axes in pixels.
        speed_min, speed_max (float): Speed range in pixels/frame.
        turn_std (float): Heading random-walk std in radians/frame.
        duration_s (float): Scene length in seconds.
        fps (float): Frames per second.
        gray_min, gray_max (int): Range fish gray values are drawn from.
        hot_pixels (tuple): Explicit HotPixelSpec entries.
        n_hot_pixels (int): Extra hot pixels placed at random.
        hot_pixel_rate (float): Rate of the random hot pixels, events/s.
        occlusions (tuple): OcclusionScript entries.
        seed (int): Generator seed.
        arena (tuple | None): (x0, y0, x1, y1), end exclusive; None is the whole sensor.
        initial_poses (dict): fish -> (x, y, heading, speed) pinning frame 0.
        occluder_margin_px (int): Growth of upper footprints when hiding lower contours.
        reflections (bool): Mirror fish about the arena's top wall.
        wingman_offset_px (float | None): Distance of a scripted fish from its partner;
            None means 2 * fish_width.
        flex_px (float): Body flex; the minor axis is fish_width + flex_px on even frames
            and fish_width - flex_px on odd ones, so a fish gliding along its own axis
            still fires along its flanks.
    """
    width: int = 1280
    height: int = 800
    n_fish: int = DEFAULT_N_FISH
    fish_length: float = DEFAULT_FISH_LENGTH
    fish_width: float = DEFAULT_FISH_WIDTH
    speed_min: float = DEFAULT_SPEED_RANGE[0]
    speed_max: float = DEFAULT_SPEED_RANGE[1]
    turn_std: float = DEFAULT_TURN_STD
    duration_s: float = DEFAULT_DURATION_S
    fps: float = 30.0
    gray_min: int = 80
    gray_max: int = 220
    hot_pixels: Tuple[HotPixelSpec, ...] = ()
    n_hot_pixels: int = 0
    hot_pixel_rate: float = DEFAULT_HOT_PIXEL_RATE
    occlusions: Tuple[OcclusionScript, ...] = ()
    seed: int = 0
    arena: Optional[Tuple[int, int, int, int]] = None
    initial_poses: Dict[int, Pose] = field(default_factory=dict)
    occluder_margin_px: int = 1
    reflections: bool = False
    wingman_offset_px: Optional[float] = None
    flex_px: float = DEFAULT_FLEX_PX

    def __post_init__(self):
        self.hot_pixels = tuple(self.hot_pixels)
        self.occlusions = tuple(self.occlusions)
        if self.n_fish < 0:
            raise InvariantViolation(f"n_fish must be >= 0, got {self.n_fish}")
        if not 2 <= self.fish_width <= self.fish_length:
            raise InvariantViolation(f"need 2 <= fish_width <= fish_length, got {self.fish_width}, {self.fish_length}")
        if not (self.flex_px >= 0 and self.fish_width - self.flex_px >= 2
                and self.fish_width + self.flex_px <= self.fish_length):
            raise InvariantViolation(f"flex_px {self.flex_px} must keep the width of {self.fish_width} "
                                     f"within [2, fish_length]")
        if not 0 <= self.speed_min <= self.speed_max:
            raise InvariantViolation(f"need 0 <= speed_min <= speed_max, got {self.speed_min}, {self.speed_max}")
        if self.turn_std < 0:
            raise InvariantViolation(f"turn_std must be >= 0, got {self.turn_std}")
        if not 0 <= self.gray_min <= self.gray_max <= 255:
            raise InvariantViolation(f"need 0 <= gray_min <= gray_max <= 255, got {self.gray_min}, {self.gray_max}")
        if not self.fps > 0 or self.n_frames < 1:
            raise InvariantViolation(f"duration_s * fps must be >= 1, got {self.duration_s} * {self.fps}")
        if self.occluder_margin_px < 0:
            raise InvariantViolation(f"occluder_margin_px must be >= 0, got {self.occluder_margin_px}")
        if self.n_hot_pixels < 0 or self.n_hot_pixels > self.width * self.height:
            raise InvariantViolation(f"n_hot_pixels out of range: {self.n_hot_pixels}")
        header = StreamHeader(self.width, self.height)
        for hp in self.hot_pixels:
            if hp.x >= header.width or hp.y >= header.height:
                raise InvariantViolation(f"hot pixel ({hp.x}, {hp.y}) outside {self.width}x{self.height}")
        x0, y0, x1, y1 = self.arena_bounds
        if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
            raise InvariantViolation(f"arena {self.arena} must lie inside the sensor")
        if x1 - x0 < self.fish_length + 1 or y1 - y0 < self.fish_length + 1:
            raise InvariantViolation(f"fish of length {self.fish_length} do not fit the arena {self.arena_bounds}")
        for fish in self.initial_poses:
            if not 0 <= fish < self.n_fish:
                raise UnknownFishId(f"initial pose for fish {fish}, scene has {self.n_fish}")
        _check_scripts(self.occlusions, self.n_fish)

    @property
    def arena_bounds(self) -> Tuple[int, int, int, int]:
        return tuple(self.arena) if self.arena is not None else (0, 0, self.width, self.height)

    @property
    def n_frames(self) -> int:
        return math.floor(self.duration_s * self.fps + FRAME_EPSILON)

    @property
    def header(self) -> StreamHeader:
        return StreamHeader(self.width, self.height)

    @property
    def wingman_offset(self) -> float:
        return 2.0 * self.fish_width if self.wingman_offset_px is None else float(self.wingman_offset_px)

    def body_width(self, frame: int) -> float:
        return self.fish_width + self.flex_px if frame % 2 == 0 else self.fish_width - self.flex_px


def _check_scripts(scripts: Sequence[OcclusionScript], n_fish: int) -> None:
    seen_a = set()
    for s in scripts:
        for fish in (s.a, s.b):
            if not 0 <= fish < n_fish:
                raise UnknownFishId(f"occlusion names fish {fish}, scene has {n_fish}")
        if s.a in seen_a:
            raise InvariantViolation(f"fish {s.a} is already scripted under another fish")
        seen_a.add(s.a)
    partners = {s.b for s in scripts}
    if seen_a & partners:
        raise InvariantViolation(f"fish {sorted(seen_a & partners)} cannot both hide and cover")


def script_occlusion(spec: SceneSpec, a: int, b: int, start: int, end: int) -> SceneSpec:
    """
    Return a copy of spec in which fish a passes fully under fish b for frames
    start <= f < end.

    Raises:
        UnknownFishId: a or b is not a fish of the scene.
        InvariantViolation: a == b, start >= end, or a clash with an existing script.
    """
    for fish in (a, b):
        if not 0 <= fish < spec.n_fish:
            raise UnknownFishId(f"occlusion names fish {fish}, scene has {spec.n_fish}")
    return replace(spec, occlusions=spec.occlusions + (OcclusionScript(a, b, start, end),))


@dataclass(frozen=True)
class _Patch:
    """A boolean mask placed at (y0, x0) on the sensor."""
    y0: int
    x0: int
    mask: np.ndarray

    @property
    def y1(self) -> int:
        return self.y0 + self.mask.shape[0]

    @property
    def x1(self) -> int:
        return self.x0 + self.mask.shape[1]

    def crop(self, y0: int, x0: int, y1: int, x1: int) -> np.ndarray:
        out = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        ty0, tx0 = max(y0, self.y0), max(x0, self.x0)
        ty1, tx1 = min(y1, self.y1), min(x1, self.x1)
        if ty0 < ty1 and tx0 < tx1:
            out[ty0 - y0:ty1 - y0, tx0 - x0:tx1 - x0] = self.mask[ty0 - self.y0:ty1 - self.y0,
                                                                  tx0 - self.x0:tx1 - self.x0]
        return out

    def box(self) -> Tuple[float, float, float, float]:
        """Center-based tight box of the mask pixels."""
        rows = np.flatnonzero(self.mask.any(axis=1))
        cols = np.flatnonzero(self.mask.any(axis=0))
        ymin, ymax = self.y0 + int(rows[0]), self.y0 + int(rows[-1])
        xmin, xmax = self.x0 + int(cols[0]), self.x0 + int(cols[-1])
        return (xmin + xmax) / 2.0, (ymin + ymax) / 2.0, float(xmax - xmin + 1), float(ymax - ymin + 1)


def rasterize_fish(x: float, y: float, heading: float, length: float, width: float,
                   header: StreamHeader) -> _Patch:
    """Filled ellipse with its long axis along heading, clipped to the sensor."""
    a, b = length / 2.0, width / 2.0
    x0, x1 = max(int(math.floor(x - a)), 0), min(int(math.ceil(x + a)) + 1, header.width)
    y0, y1 = max(int(math.floor(y - a)), 0), min(int(math.ceil(y + a)) + 1, header.height)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dx, dy = xs - x, ys - y
    c, s = math.cos(heading), math.sin(heading)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    return _Patch(y0, x0, u * u + v * v <= 1.0)


def contour(mask: np.ndarray) -> np.ndarray:
    """Footprint pixels with a 4-neighbour outside the footprint: an 8-connected ring."""
    return mask & ~ndimage.binary_erosion(mask)


@dataclass
class SimulationResult:
    """
    Attributes:
        header (StreamHeader): Sensor geometry.
        events (np.ndarray): EVENT_DTYPE, sorted by t.
        ground_truth (List[Detection]): One box per fish per frame, id = fish index.
        is_noise (np.ndarray): bool per event, True for hot-pixel events.
        negatives (List[Detection]): Mirror-reflection boxes, class negative.
        n_frames (int): Frames simulated.
    """
    header: StreamHeader
    events: np.ndarray
    ground_truth: List[Detection]
    is_noise: np.ndarray
    negatives: List[Detection]
    n_frames: int

    def write(self, events_path, gt_path=None) -> None:
        save_stream(events_path, self.header, self.events)
        if gt_path is not None:
            write_detections(gt_path, self.ground_truth)


def _hot_pixel_table(spec: SceneSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = [hp.x for hp in spec.hot_pixels]
    ys = [hp.y for hp in spec.hot_pixels]
    rates = [hp.rate for hp in spec.hot_pixels]
    if spec.n_hot_pixels:
        flat = rng.choice(spec.width * spec.height, size=spec.n_hot_pixels, replace=False)
        xs.extend((flat % spec.width).tolist())
        ys.extend((flat // spec.width).tolist())
        rates.extend([spec.hot_pixel_rate] * spec.n_hot_pixels)
    return np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64), np.array(rates, dtype=np.float64)


class _School:
    """Poses of every fish, advanced one frame at a time."""

    def __init__(self, spec: SceneSpec, rng: np.random.Generator):
        self.spec = spec
        n = spec.n_fish
        x0, y0, x1, y1 = spec.arena_bounds
        r = spec.fish_length / 2.0
        self.lo = np.array([x0 + r, y0 + r])
        self.hi = np.array([x1 - 1 - r, y1 - 1 - r])
        self.x = np.empty(n)
        self.y = np.empty(n)
        self.heading = np.empty(n)
        self.speed = np.empty(n)
        self.gray = np.empty(n, dtype=np.uint8)
        for i in range(n):
            self.x[i] = rng.uniform(self.lo[0], self.hi[0])
            self.y[i] = rng.uniform(self.lo[1], self.hi[1])
            self.heading[i] = rng.uniform(-math.pi, math.pi)
            self.speed[i] = rng.uniform(spec.speed_min, spec.speed_max)
            self.gray[i] = rng.integers(spec.gray_min, spec.gray_max, endpoint=True)
        for i, (px, py, ph, ps) in spec.initial_poses.items():
            self.x[i], self.y[i] = np.clip([px, py], self.lo, self.hi)
            self.heading[i], self.speed[i] = ph, ps
        self.scripts = {s.a: s for s in spec.occlusions}
        self.depth_order = sorted(self.scripts) + [i for i in range(n) if i not in self.scripts]
        self._place_wingmen(0)

    def advance(self, frame: int, draws: np.ndarray) -> None:
        spec = self.spec
        self.heading = self.heading + spec.turn_std * draws[:, 0]
        self.speed = np.clip(self.speed + SPEED_JITTER_STD * draws[:, 1], spec.speed_min, spec.speed_max)
        self.x = self.x + self.speed * np.cos(self.heading)
        self.y = self.y + self.speed * np.sin(self.heading)
        # reflecting walls
        for axis, pos in ((0, self.x), (1, self.y)):
            low, high = pos < self.lo[axis], pos > self.hi[axis]
            pos[low] = 2 * self.lo[axis] - pos[low]
            pos[high] = 2 * self.hi[axis] - pos[high]
            bounced = low | high
            self.heading[bounced] = (math.pi - self.heading[bounced]) if axis == 0 else -self.heading[bounced]
            np.clip(pos, self.lo[axis], self.hi[axis], out=pos)
        self.heading = np.remainder(self.heading + math.pi, 2 * math.pi) - math.pi
        self._place_wingmen(frame)

    def _place_wingmen(self, frame: int) -> None:
        for a, s in self.scripts.items():
            offset = 0.0 if s.start <= frame < s.end else self.spec.wingman_offset
            h = self.heading[s.b]
            self.x[a] = min(max(self.x[s.b] - offset * math.sin(h), self.lo[0]), self.hi[0])
            self.y[a] = min(max(self.y[s.b] + offset * math.cos(h), self.lo[1]), self.hi[1])
            self.heading[a] = h
            self.speed[a] = self.speed[s.b]

    def rasterize(self, frame: int) -> List[_Patch]:
        spec = self.spec
        width = spec.body_width(frame)
        return [rasterize_fish(self.x[i], self.y[i], self.heading[i], spec.fish_length, width, spec.header)
                for i in range(spec.n_fish)]


def _cover(patches: List[_Patch], above: Sequence[int], y0: int, x0: int, y1: int, x1: int,
           margin: int) -> np.ndarray:
    """Pixels of the region [y0:y1, x0:x1] under any fish in above, each footprint grown by margin."""
    cover = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for j in above:
        q = patches[j]
        if (q.y1 + margin <= y0 or q.y0 - margin >= y1
                or q.x1 + margin <= x0 or q.x0 - margin >= x1):
            continue
        grown = q.crop(y0 - margin, x0 - margin, y1 + margin, x1 + margin)
        if margin:
            grown = ndimage.binary_dilation(grown, structure=FULL_NEIGHBOURHOOD, iterations=margin)
        cover |= grown[margin:margin + y1 - y0, margin:margin + x1 - x0]
    return cover


def _frame_fish_events(patches: List[_Patch], previous: List[_Patch], school: _School,
                       margin: int) -> Tuple[List[np.ndarray], List[np.ndarray], List[np.ndarray], List[int]]:
    """
    Pixel coordinates, polarities and owning fish of every fish event in one frame.

    A fish fires ON where its contour covers a pixel its previous footprint did not,
    and OFF where its previous contour left a pixel its footprint no longer covers.
    Pixels under a fish above it, in either frame, stay silent.
    """
    xs, ys, pols, owners = [], [], [], []
    order = school.depth_order
    rank = {fish: k for k, fish in enumerate(order)}
    for i in range(len(patches)):
        p, q = patches[i], previous[i]
        y0, x0 = min(p.y0, q.y0), min(p.x0, q.x0)
        y1, x1 = max(p.y1, q.y1), max(p.x1, q.x1)
        now, was = p.crop(y0, x0, y1, x1), q.crop(y0, x0, y1, x1)
        on = contour(now) & ~was
        off = contour(was) & ~now
        if not (on.any() or off.any()):
            continue
        above = order[rank[i] + 1:]
        hidden = (_cover(patches, above, y0, x0, y1, x1, margin)
                  | _cover(previous, above, y0, x0, y1, x1, margin))
        ry, rx = np.nonzero((on | off) & ~hidden)
        if ry.size == 0:
            continue
        xs.append(rx + x0)
        ys.append(ry + y0)
        pols.append(np.where(on[ry, rx], Polarity.ON, Polarity.OFF).astype(np.uint8))
        owners.append(i)
    return xs, ys, pols, owners


def simulate(spec: SceneSpec) -> SimulationResult:
    """
    Render the scene as an event stream with per-frame ground truth.

    Fish events of frame f carry timestamps in [ceil(f * 1e6 / fps), ceil((f + 1) * 1e6 / fps)),
    so a window grid anchored at t=0 puts frame f in window f.
    """
    rng = np.random.default_rng(spec.seed)
    header = spec.header
    hot_x, hot_y, hot_rate = _hot_pixel_table(spec, rng)
    school = _School(spec, rng)
    arena_top = spec.arena_bounds[1]

    chunks, noise_masks = [], []
    ground_truth: List[Detection] = []
    negatives: List[Detection] = []
    previous: Optional[List[_Patch]] = None
    for frame in range(spec.n_frames):
        if frame > 0:
            school.advance(frame, rng.normal(size=(spec.n_fish, 2)))
        patches = school.rasterize(frame)
        for i, p in enumerate(patches):
            x, y, w, h = p.box()
            ground_truth.append(Detection(frame, x, y, w, h, id=i))

        t0 = window_start_us(frame, spec.fps)
        t1 = window_start_us(frame + 1, spec.fps)
        if t1 <= t0:
            raise InvariantViolation(f"fps {spec.fps} leaves frame {frame} without a microsecond")

        if previous is not None and spec.n_fish:
            xs, ys, pols, owners = _frame_fish_events(patches, previous, school, spec.occluder_margin_px)
        else:
            xs, ys, pols, owners = [], [], [], []
        sizes = [len(a) for a in xs]
        n_fish_events = sum(sizes)
        fish = np.zeros(n_fish_events, dtype=EVENT_DTYPE)
        if n_fish_events:
            fish["t"] = rng.integers(t0, t1, size=n_fish_events)
            fish["x"] = np.concatenate(xs)
            fish["y"] = np.concatenate(ys)
            fish["polarity"] = np.concatenate(pols)
            fish["gray"] = np.repeat(school.gray[owners], sizes)

        counts = rng.poisson(hot_rate / spec.fps) if len(hot_rate) else np.zeros(0, dtype=np.int64)
        noise = np.zeros(int(counts.sum()), dtype=EVENT_DTYPE)
        if len(noise):
            noise["t"] = rng.integers(t0, t1, size=len(noise))
            noise["x"] = np.repeat(hot_x, counts)
            noise["y"] = np.repeat(hot_y, counts)
            noise["polarity"] = Polarity.ON
            noise["gray"] = HOT_PIXEL_GRAY

        mirrored = empty_events()
        if spec.reflections and n_fish_events and arena_top > 0:
            mirrored, frame_negatives = _reflect(fish, owners, sizes, arena_top, frame)
            negatives.extend(frame_negatives)

        events = np.concatenate([fish, mirrored, noise])
        is_noise = np.concatenate([np.zeros(len(fish) + len(mirrored), dtype=bool), np.ones(len(noise), dtype=bool)])
        order = np.argsort(events["t"], kind="stable")
        chunks.append(events[order])
        noise_masks.append(is_noise[order])
        previous = patches

    events = np.concatenate(chunks) if chunks else empty_events()
    is_noise = np.concatenate(noise_masks) if noise_masks else np.zeros(0, dtype=bool)
    logging.info(f"Simulated {spec.n_frames} frames of {spec.n_fish} fish: {len(events)} events "
                 f"({int(is_noise.sum())} noise), seed {spec.seed}")
    return SimulationResult(header, events, ground_truth, is_noise, negatives, spec.n_frames)


def _reflect(fish: np.ndarray, owners: List[int], sizes: List[int], arena_top: int,
             frame: int) -> Tuple[np.ndarray, List[Detection]]:
    """Mirror fish events about the arena's top wall; keep what lands on the sensor."""
    mirrored = fish.copy()
    y = 2 * arena_top - 1 - fish["y"].astype(np.int64)
    keep = y >= 0
    mirrored["y"] = np.where(keep, y, 0)
    mirrored["gray"] = fish["gray"] // 2
    negatives = []
    owner_of = np.repeat(np.arange(len(owners)), sizes)
    for k in np.unique(owner_of[keep]):
        sel = keep & (owner_of == k)
        xs, ys = mirrored["x"][sel].astype(np.int64), mirrored["y"][sel].astype(np.int64)
        negatives.append(Detection(frame, (xs.min() + xs.max()) / 2.0, (ys.min() + ys.max()) / 2.0,
                                   float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1),
                                   cls=DetectionClass.NEGATIVE))
    return mirrored[keep], negatives


def simulate_dark(spec: SceneSpec, duration_s: float) -> SimulationResult:
    """The same sensor and hot pixels with no fish, as a covered-lens capture."""
    dark = replace(spec, n_fish=0, occlusions=(), initial_poses={}, reflections=False, duration_s=duration_s)
    return simulate(dark)


def parse_hot_pixels(text: str) -> Tuple[HotPixelSpec, ...]:
    """"x:y:rate;x:y:rate" -> HotPixelSpec entries."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        x, y, rate = item.split(":")
        out.append(HotPixelSpec(int(x), int(y), float(rate)))
    return tuple(out)


def parse_occlusions(text: str) -> Tuple[OcclusionScript, ...]:
    """"a:b:start:end;..." -> OcclusionScript entries."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        a, b, start, end = (int(v) for v in item.split(":"))
        out.append(OcclusionScript(a, b, start, end))
    return tuple(out)


def parse_poses(text: str) -> Dict[int, Pose]:
    """"fish:x:y:heading:speed;..." -> initial poses."""
    out: Dict[int, Pose] = {}
    for item in filter(None, (s.strip() for s in text.split(";"))):
        fish, x, y, heading, speed = item.split(":")
        out[int(fish)] = (float(x), float(y), float(heading), float(speed))
    return out


def parse_arena(text: str) -> Optional[Tuple[int, int, int, int]]:
    text = text.strip()
    if not text or text.lower() == "none":
        return None
    x0, y0, x1, y1 = (int(v) for v in text.split(","))
    return (x0, y0, x1, y1)
