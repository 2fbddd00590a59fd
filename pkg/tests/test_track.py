import itertools

import numpy as np
import pytest

from src.components.detect import Detection
from src.components.track import (
    TRACK_HEADER,
    KalmanModel,
    MultiFishTracker,
    Track,
    TrackerConfig,
    TrackRow,
    TrackState,
    TrackStatus,
    assign,
    format_track_rows,
    predict,
    read_tracks,
    rows_by_frame,
    solve_assignment,
    track_detections,
    update,
    write_tracks,
)
from src.exception import InvariantViolation, NegativeExtent, ParseError, SingularInnovationCovariance


def brute_force_minimum(cost):
    n, m = cost.shape
    if n <= m:
        return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
    return min(sum(cost[p[j], j] for j in range(m)) for p in itertools.permutations(range(n), m))


def make_track(x=5.0, y=5.0, vx=1.0, vy=1.0, track_id=0, covariance=None):
    cov = np.diag([10.0, 10.0, 100.0, 100.0]) if covariance is None else covariance
    return Track(track_id, TrackState(np.array([x, y, vx, vy]), cov), (10.0, 4.0))


def test_assignment_matches_brute_force(rng):
    for _ in range(1000):
        n, m = rng.integers(1, 7, size=2)
        cost = rng.random((n, m)) * 100.0
        if rng.random() < 0.3:
            cost = np.round(cost / 25.0) * 25.0   # plenty of ties
        pairs = solve_assignment(cost)
        assert len(pairs) == min(n, m)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
        total = sum(cost[i, j] for i, j in pairs)
        assert total == pytest.approx(brute_force_minimum(cost), abs=1e-6)


def test_ties_resolve_to_lower_pairs():
    assert solve_assignment(np.zeros((3, 3))) == [(0, 0), (1, 1), (2, 2)]
    assert solve_assignment(np.ones((2, 3))) == [(0, 0), (1, 1)]


def test_empty_assignment():
    assert solve_assignment(np.zeros((0, 3))) == []
    result = assign([], [Detection(0, 1, 1, 2, 2)], gate=50.0)
    assert result.unmatched_detections == [0]


def test_gate_dissolves_far_matches():
    track = make_track(0.0, 0.0)
    result = assign([track], [Detection(0, 60.0, 0.0, 2, 2), Detection(0, 20.0, 0.0, 2, 2)], gate=50.0)
    assert result.matches == [(0, 1)]
    result = assign([track], [Detection(0, 60.0, 0.0, 2, 2)], gate=50.0)
    assert result.matches == []
    assert result.unmatched_tracks == [0] and result.unmatched_detections == [0]
    with pytest.raises(InvariantViolation):
        assign([track], [], gate=0.0)


def test_zero_innovation_keeps_mean():
    model = KalmanModel.constant_velocity()
    track = make_track(5.0, 7.0, 1.5, -0.5)
    updated = update(track, (5.0, 7.0), model)
    assert np.abs(updated.state.mean - track.state.mean).max() < 1e-12
    assert updated.hits == track.hits + 1
    assert updated.frames_since_update == 0


def test_covariances_stay_symmetric_psd(rng):
    model = KalmanModel.constant_velocity()
    track = make_track()
    for _ in range(200):
        track = predict(track, model)
        if rng.random() < 0.7:
            track = update(track, track.state.position + rng.normal(scale=2.0, size=2), model)
        cov = track.state.covariance
        assert np.abs(cov - cov.T).max() <= 1e-9
        assert np.linalg.eigvalsh(cov).min() >= -1e-9


def test_prediction_grows_uncertainty(rng):
    model = KalmanModel.constant_velocity()
    track = make_track()
    for _ in range(100):
        before = np.trace(track.state.covariance)
        track = predict(track, model)
        assert np.trace(track.state.covariance) > before
        if rng.random() < 0.8:
            track = update(track, track.state.position + rng.normal(scale=2.0, size=2), model)


def test_prediction_adds_exactly_the_process_noise(rng):
    model = KalmanModel.constant_velocity()
    for _ in range(50):
        a = rng.normal(size=(4, 4))
        track = make_track(covariance=a @ a.T)
        predicted = predict(track, model).state.covariance
        expected = model.F @ track.state.covariance @ model.F.T + model.Q
        assert np.abs(predicted - expected).max() < 1e-9


def test_untrusted_measurement_barely_moves_the_state():
    model = KalmanModel.constant_velocity(r_diag=(1e12, 1e12))
    track = predict(make_track(50.0, 50.0, 1.0, 0.0), model)
    x, y = track.position
    updated = update(track, (x + 10.0, y), model)
    assert abs(updated.position[0] - x) < 1e-6
    assert abs(updated.position[1] - y) < 1e-6


def test_update_never_inflates_position_uncertainty(rng):
    model = KalmanModel.constant_velocity()
    for _ in range(100):
        a = rng.normal(size=(4, 4))
        track = make_track(*rng.normal(scale=10.0, size=4), covariance=a @ a.T + 0.1 * np.eye(4))
        prior = track.state.covariance[:2, :2]
        posterior = update(track, rng.normal(scale=10.0, size=2), model).state.covariance[:2, :2]
        assert np.linalg.eigvalsh(prior - posterior).min() >= -1e-9


def test_tracking_is_deterministic(rng):
    detections = {
        f: [Detection(f, *rng.uniform(20.0, 480.0, size=2), 20.0, 6.0) for _ in range(int(rng.integers(0, 6)))]
        for f in range(40)
    }
    first = track_detections(detections, first_frame=0, last_frame=39)
    second = track_detections(detections, first_frame=0, last_frame=39)
    assert first == second
    assert format_track_rows(r for s in first for r in s.rows()) == \
        format_track_rows(r for s in second for r in s.rows())


def test_predict_moves_by_velocity():
    model = KalmanModel.constant_velocity()
    moved = predict(make_track(5.0, 5.0, 2.0, -1.0), model)
    assert moved.position == (7.0, 4.0)


def test_dead_track_cannot_predict():
    model = KalmanModel.constant_velocity()
    dead = Track(0, make_track().state, (1.0, 1.0), status=TrackStatus.DEAD)
    with pytest.raises(InvariantViolation):
        predict(dead, model)


def test_singular_innovation_covariance():
    model = KalmanModel.constant_velocity(r_diag=(0.0, 0.0))
    track = make_track(covariance=np.zeros((4, 4)))
    with pytest.raises(SingularInnovationCovariance):
        update(track, (6.0, 6.0), model)


def test_model_rejects_indefinite_noise():
    with pytest.raises(InvariantViolation):
        KalmanModel.constant_velocity(q_diag=(1.0, -1.0, 0.25, 0.25))
    with pytest.raises(InvariantViolation):
        TrackerConfig(min_hits=0)


def moving_fish(frames, gap=()):
    """One fish moving right at 2 px/frame, missing on the frames in gap."""
    return {f: [Detection(f, 100.0 + 2 * f, 100.0, 20.0, 6.0)] for f in frames if f not in gap}


def ids_seen(snapshots):
    return sorted({r.id for s in snapshots for r in s.rows()})


def test_confirmation_after_min_hits():
    snapshots = track_detections(moving_fish(range(5)))
    assert [len(s.rows()) for s in snapshots] == [0, 0, 1, 1, 1]
    assert snapshots[0].entries[0].status == TrackStatus.TENTATIVE
    assert snapshots[2].entries[0].status == TrackStatus.CONFIRMED


@pytest.mark.parametrize("gap_length, expected_ids", [(1, [0]), (10, [0]), (15, [0]), (16, [0, 1])])
def test_coast_limit(gap_length, expected_ids):
    gap = range(20, 20 + gap_length)
    snapshots = track_detections(moving_fish(range(60), gap), first_frame=0, last_frame=59)
    assert ids_seen(snapshots) == expected_ids
    coasting = [r for s in snapshots for r in s.rows() if r.coasting]
    assert len(coasting) == min(gap_length, 15)


def test_coasting_rows_follow_prediction():
    snapshots = track_detections(moving_fish(range(40), range(20, 25)), first_frame=0, last_frame=39)
    (row,) = snapshots[24].rows()
    assert row.status == "coasting"
    assert row.x == pytest.approx(100.0 + 2 * 24, abs=1.0)
    assert row.w == 20.0


def test_ids_are_never_reused():
    detections = moving_fish(range(10))
    detections.update({f: [Detection(f, 500.0, 500.0, 20.0, 6.0)] for f in range(40, 45)})
    snapshots = track_detections(detections, first_frame=0, last_frame=44)
    assert ids_seen(snapshots) == [0, 1]


def test_two_fish_keep_their_ids():
    detections = {
        f: [Detection(f, 100.0 + 3 * f, 100.0, 20, 6), Detection(f, 100.0 + 3 * f, 200.0, 20, 6)]
        for f in range(30)
    }
    snapshots = track_detections(detections)
    by_id = {}
    for s in snapshots:
        for r in s.rows():
            by_id.setdefault(r.id, set()).add(round(r.y))
    assert by_id == {0: {100}, 1: {200}}


def test_frames_must_increase():
    tracker = MultiFishTracker()
    tracker.update(3, [])
    with pytest.raises(InvariantViolation):
        tracker.update(3, [])


def test_track_csv_round_trip(tmp_path):
    snapshots = track_detections(moving_fish(range(30), range(10, 13)))
    path = tmp_path / "tracks.csv"
    n = write_tracks(path, snapshots)
    rows = read_tracks(path)
    assert len(rows) == n
    assert rows == [r for s in snapshots for r in s.rows()]
    assert path.read_text().splitlines()[0] == TRACK_HEADER
    assert sorted(rows_by_frame(rows)) == list(range(2, 30))


def test_track_csv_errors():
    with pytest.raises(ParseError) as info:
        read_tracks(TRACK_HEADER + "\n0,1,2.0,2.0,3.0,3.0,lost\n")
    assert (info.value.line, info.value.column) == (2, 7)
    with pytest.raises(ParseError) as info:
        read_tracks(TRACK_HEADER + "\n0,x,2.0,2.0,3.0,3.0,confirmed\n")
    assert info.value.column == 2
    with pytest.raises(NegativeExtent):
        read_tracks(TRACK_HEADER + "\n0,1,2.0,2.0,0.0,3.0,confirmed\n")


def test_format_track_rows():
    text = format_track_rows([TrackRow(1, 2, np.float64(3.5), 4.0, 5.0, 6.0, "coasting")])
    assert text == TRACK_HEADER + "\n1,2,3.5,4.0,5.0,6.0,coasting\n"
