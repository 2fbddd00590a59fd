"""
File-level stages behind the command line, and the end-to-end pipeline:
simulate or ingest -> preprocess -> frames -> detect -> track -> count -> eval.

Every public function logs failures and re-raises them as CustomException with
the original error kept as ``cause``.
"""
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.components.count import (
    CountReport,
    count_windows,
    format_count_report,
    per_frame_count,
    per_frame_counts_from_rows,
    window_frames,
    windowed_count,
)
from src.components.detect import (
    Detection,
    DetectionConfig,
    detect_blobs,
    detections_by_frame,
    filter_targets,
    read_detections,
    write_detections,
)
from src.components.evaluation import (
    CountAccuracyReport,
    MotaReport,
    boxes_from_detections,
    boxes_from_rows,
    counting_accuracy,
    evaluate_boxes,
    evaluate_sequences,
    format_sequence_table,
    read_track_file,
)
from src.components.event_io import StreamHeader, load_stream, save_stream
from src.components.framing import export_frames, windows
from src.components.preprocess import (
    HotPixelModel,
    build_hot_pixel_model,
    save_hot_pixel_model,
    suppress_fpn,
    undistort_stream,
)
from src.components.simgen import SimulationResult, simulate, simulate_dark
from src.components.track import MultiFishTracker, TrackSnapshot, read_tracks, write_tracks
from src.config.pipeline_config import PipelineConfig
from src.exception import ConfigError, GeometryMismatch, log_and_wrap
from src.logger import logging

DETECTOR_GAP_NOTE = ("desk-scale run: connected-component blob detector on event frames; "
                     "accuracy of a trained detector on real fish is not reproduced here")


# ---------------------------------------------------------------- stage helpers

def _dark_model(config: PipelineConfig, header: StreamHeader,
                dark_path: Optional[str] = None, scene_dark: bool = False) -> Optional[HotPixelModel]:
    """Hot-pixel model from a dark capture file, or from a simulated dark run of the scene."""
    settings = config.preprocess
    path = dark_path or settings.dark_events
    if path:
        dark_header, dark_events = load_stream(path)
        if (dark_header.width, dark_header.height) != (header.width, header.height):
            raise GeometryMismatch(f"dark capture is {dark_header.width}x{dark_header.height}, "
                                   f"stream is {header.width}x{header.height}")
        return build_hot_pixel_model(dark_events, settings.dark_duration_s, header, settings.fpn_threshold)
    if scene_dark:
        dark = simulate_dark(config.scene, settings.dark_duration_s)
        return build_hot_pixel_model(dark.events, settings.dark_duration_s, header, settings.fpn_threshold)
    return None


def _preprocess(config: PipelineConfig, header: StreamHeader, events: np.ndarray,
                model: Optional[HotPixelModel]) -> Tuple[np.ndarray, Dict[str, int]]:
    stats = {"events_in": len(events)}
    if model is not None:
        events = suppress_fpn(events, model, header)
        stats["hot_pixels"] = model.hot_count
    stats["events_after_fpn"] = len(events)
    params = config.calibration.params(header)
    if params is not None and not params.is_identity:
        events = undistort_stream(events, params, header)
    stats["events_after_undistort"] = len(events)
    return events, stats


def _file_detections(config: PipelineConfig, header: StreamHeader) -> Tuple[List[Detection], List[int]]:
    path = config.detection.detections_path
    if not path:
        raise ConfigError("detect.detector = file needs detect.detections_path")
    grouped = read_detections(path, header)
    return [d for frame in grouped.values() for d in frame], list(grouped)


def _blob_detections(config: PipelineConfig, header: StreamHeader, events: np.ndarray,
                     origin_us: Optional[int]) -> Tuple[List[Detection], List[int]]:
    """Blob detections over the binary frame of every window; also returns the window indices."""
    settings: DetectionConfig = config.detection
    detections, indices = [], []
    for stack in windows(events, config.framing.fps, header, origin_us):
        indices.append(stack.window_index)
        detections.extend(detect_blobs(stack.binary, settings.min_area, settings.max_area, stack.window_index))
    return detections, indices


def _track(config: PipelineConfig, detections: Sequence[Detection], first_frame: Optional[int],
           last_frame: Optional[int]) -> List[TrackSnapshot]:
    grouped = detections_by_frame(filter_targets(detections))
    return list(MultiFishTracker(config.tracker).run(grouped, first_frame, last_frame))


def _count(config: PipelineConfig, per_frame: Sequence[int], start: int) -> List[CountReport]:
    return count_windows(per_frame, config.framing.fps, config.count.window_s, start)


# ---------------------------------------------------------------- subcommands

def simulate_scene(config: PipelineConfig, events_out: str, gt_out: Optional[str] = None,
                   dark_out: Optional[str] = None) -> SimulationResult:
    """Simulate the configured scene and write its EVS1 stream, ground truth and dark capture."""
    try:
        logging.info("Starting scene simulation")
        result = simulate(config.scene)
        result.write(events_out, gt_out)
        if dark_out:
            dark = simulate_dark(config.scene, config.preprocess.dark_duration_s)
            save_stream(dark_out, dark.header, dark.events)
        return result
    except Exception as e:
        raise log_and_wrap(e, "simulate")


def render_frames(config: PipelineConfig, events_path: str, out_dir: str) -> int:
    """Write the four mode frames and the mixed frame of every window; returns the window count."""
    try:
        header, events = load_stream(events_path)
        return export_frames(windows(events, config.framing.fps, header, config.framing.origin_us), out_dir)
    except Exception as e:
        raise log_and_wrap(e, "frames")


def preprocess_stream(config: PipelineConfig, events_path: str, out_path: str,
                      dark_path: Optional[str] = None, model_out: Optional[str] = None) -> Dict[str, int]:
    """Suppress hot pixels (when a dark capture is given) and undistort (when calibrated)."""
    try:
        header, events = load_stream(events_path)
        model = _dark_model(config, header, dark_path)
        if model is not None and model_out:
            save_hot_pixel_model(model_out, model)
        events, stats = _preprocess(config, header, events, model)
        save_stream(out_path, header, events)
        return stats
    except Exception as e:
        raise log_and_wrap(e, "preprocess")


def detect_stream(config: PipelineConfig, events_path: Optional[str], out_path: str) -> List[Detection]:
    """Detect fish per window with the configured detector and write the detection CSV."""
    try:
        if config.detection.detector == "file":
            detections, _ = _file_detections(config, config.stream.header())
        else:
            header, events = load_stream(events_path)
            detections, _ = _blob_detections(config, header, events, config.framing.origin_us)
        write_detections(out_path, detections)
        return detections
    except Exception as e:
        raise log_and_wrap(e, "detect")


def track_file(config: PipelineConfig, detections_path: str, out_path: str,
               first_frame: Optional[int] = None, last_frame: Optional[int] = None) -> List[TrackSnapshot]:
    """Track a detection CSV, whose boxes must overlap the configured sensor, and write the track CSV."""
    try:
        grouped = read_detections(detections_path, config.stream.header())
        snapshots = _track(config, [d for frame in grouped.values() for d in frame], first_frame, last_frame)
        write_tracks(out_path, snapshots)
        return snapshots
    except Exception as e:
        raise log_and_wrap(e, "track")


def count_file(config: PipelineConfig, tracks_path: str, true_count: Optional[int] = None,
               first_frame: Optional[int] = None, last_frame: Optional[int] = None
               ) -> Tuple[List[CountReport], Optional[CountAccuracyReport]]:
    """
    Window counts of a track CSV and, with a known true count, the counting accuracy.

    Windows start at first_frame, or at the first row when it is None.
    """
    try:
        rows = read_tracks(tracks_path)
        per_frame = per_frame_counts_from_rows(rows, first_frame, last_frame)
        start = first_frame if first_frame is not None else min((r.frame for r in rows), default=0)
        reports = _count(config, per_frame, start)
        if not reports:
            # a short file still gets the first-window report, or InsufficientFrames
            reports = [windowed_count(per_frame, config.framing.fps, config.count.window_s, start)]
        true_count = true_count if true_count is not None else config.count.true_count
        accuracy = counting_accuracy((r.final, true_count) for r in reports) if true_count is not None else None
        return reports, accuracy
    except Exception as e:
        raise log_and_wrap(e, "count")


def evaluate_files(config: PipelineConfig, pairs: Sequence[Tuple[str, str]]) -> str:
    """MOTA report for one (gt, hyp) pair, or a table with both averages for several."""
    try:
        settings = config.evaluation
        reports = evaluate_sequences(pairs, settings.iou_threshold, settings.include_coasting)
        if len(reports) == 1:
            return "\n".join(reports[0].lines()) + "\n"
        return format_sequence_table(reports)
    except Exception as e:
        raise log_and_wrap(e, "eval")


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    stats: Dict[str, object] = field(default_factory=dict)
    count_reports: List[CountReport] = field(default_factory=list)
    first_window: Optional[CountReport] = None
    mota: Optional[MotaReport] = None
    accuracy: Optional[CountAccuracyReport] = None

    def summary(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.stats.items()]
        lines.append(f"count_windows: {len(self.count_reports)}")
        lines.extend(f"count_window: {r.line()}" for r in self.count_reports)
        if self.first_window is not None:
            lines.append(f"mean_count: {float(self.first_window.mean):.4f}")
            lines.append(f"final_count: {self.first_window.final}")
        if self.mota is not None:
            lines.extend(self.mota.lines(prefix="mota_"))
        if self.accuracy is not None:
            lines.extend(self.accuracy.lines())
        lines.append(f"note: {DETECTOR_GAP_NOTE}")
        return "\n".join(lines) + "\n"


def run_pipeline(config: PipelineConfig, out_dir: str, events_path: Optional[str] = None,
                 gt_path: Optional[str] = None, frames_dir: Optional[str] = None) -> PipelineResult:
    """
    Run every stage and write detections.csv, tracks.csv and summary.txt to out_dir.

    Without events_path the configured scene is simulated: windows are anchored at t=0,
    the dark capture is a fish-free run of the same scene, and the simulator's ground
    truth is used for evaluation unless gt_path is given.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        result = PipelineResult()
        simulated = events_path is None
        gt_boxes = None
        first_frame = last_frame = None
        origin_us = config.framing.origin_us

        logging.info("Pipeline: ingest")
        if simulated:
            sim = simulate(config.scene)
            header, events = sim.header, sim.events
            gt_boxes = boxes_from_detections(sim.ground_truth)
            first_frame, last_frame = 0, sim.n_frames - 1
            origin_us = 0 if origin_us is None else origin_us
            result.stats["source"] = (f"simulated seed={config.scene.seed} fish={config.scene.n_fish} "
                                      f"frames={sim.n_frames}")
        else:
            header, events = load_stream(events_path)
            result.stats["source"] = os.path.basename(events_path)
        if gt_path:
            gt_boxes = read_track_file(gt_path)

        logging.info("Pipeline: preprocess")
        model = _dark_model(config, header, scene_dark=simulated)
        events, stats = _preprocess(config, header, events, model)
        result.stats.update(stats)

        logging.info("Pipeline: frames and detect")
        if frames_dir:
            export_frames(windows(events, config.framing.fps, header, origin_us), frames_dir)
        if config.detection.detector == "file":
            detections, indices = _file_detections(config, header)
        else:
            detections, indices = _blob_detections(config, header, events, origin_us)
        result.stats["windows"] = len(indices)
        result.stats["detections"] = len(detections)
        write_detections(os.path.join(out_dir, "detections.csv"), detections)

        logging.info("Pipeline: track")
        if first_frame is None and indices:
            first_frame, last_frame = min(indices), max(indices)
        snapshots = _track(config, detections, first_frame, last_frame)
        write_tracks(os.path.join(out_dir, "tracks.csv"), snapshots)
        result.stats["frames_tracked"] = len(snapshots)
        result.stats["track_ids_issued"] = len({e.id for s in snapshots for e in s.entries})

        logging.info("Pipeline: count")
        per_frame = [per_frame_count(s) for s in snapshots]
        start = snapshots[0].frame if snapshots else 0
        result.count_reports = _count(config, per_frame, start)
        if len(per_frame) >= window_frames(config.framing.fps, config.count.window_s):
            result.first_window = windowed_count(per_frame, config.framing.fps, config.count.window_s, start)

        logging.info("Pipeline: eval")
        if gt_boxes is not None:
            hyp = boxes_from_rows([row for s in snapshots for row in s.rows()], config.evaluation.include_coasting)
            result.mota = evaluate_boxes(gt_boxes, hyp, config.evaluation.iou_threshold)
        true_count = config.count.true_count
        if true_count is None and simulated:
            true_count = config.scene.n_fish
        if true_count and result.count_reports:
            result.accuracy = counting_accuracy((r.final, true_count) for r in result.count_reports)

        with open(os.path.join(out_dir, "summary.txt"), "w") as f:
            f.write(result.summary())
        logging.info("Pipeline completed")
        return result
    except Exception as e:
        raise log_and_wrap(e, "pipeline")


def format_counts(reports: Sequence[CountReport], accuracy: Optional[CountAccuracyReport]) -> str:
    text = format_count_report(reports)
    if accuracy is not None:
        text += "\n".join(accuracy.lines()) + "\n"
    return text
