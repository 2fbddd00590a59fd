import pytest

from src.cli.commands import main
from src.components.track import TRACK_HEADER

SCENE = ["--set", "sensor.width=320", "--set", "sensor.height=240", "--set", "sim.n_fish=3",
         "--set", "sim.fish_length=40", "--set", "sim.fish_width=8", "--set", "sim.duration_s=1",
         "--set", "sim.n_hot_pixels=5"]


def test_stages_chain_through_files(tmp_path, capsys):
    events, gt, dark = tmp_path / "s.evs1", tmp_path / "gt.csv", tmp_path / "dark.evs1"
    assert main(["simulate", *SCENE, "--events-out", str(events), "--gt-out", str(gt),
                 "--dark-out", str(dark)]) == 0
    assert "frames: 30" in capsys.readouterr().out

    clean = tmp_path / "clean.evs1"
    assert main(["preprocess", "--events", str(events), "--dark", str(dark), "--out", str(clean),
                 "--model-out", str(tmp_path / "hot.npz")]) == 0
    out = capsys.readouterr().out
    assert "hot_pixels: 5" in out
    assert (tmp_path / "hot.npz").exists()

    detections = tmp_path / "det.csv"
    assert main(["detect", "--events", str(clean), "--out", str(detections)]) == 0
    tracks = tmp_path / "tracks.csv"
    assert main(["track", "--detections", str(detections), "--out", str(tracks)]) == 0
    assert tracks.read_text().startswith(TRACK_HEADER)

    assert main(["eval", "--gt", str(gt), "--hyp", str(tracks)]) == 0
    assert "mota:" in capsys.readouterr().out

    frames = tmp_path / "frames"
    assert main(["frames", "--events", str(clean), "--out", str(frames)]) == 0
    assert any((frames / "mixed").iterdir())


def test_count_command(tmp_path, capsys):
    rows = [f"{f},{i},10.0,10.0,5.0,5.0,confirmed" for f in range(90) for i in range(3)]
    tracks = tmp_path / "tracks.csv"
    tracks.write_text(TRACK_HEADER + "\n" + "\n".join(rows) + "\n")
    assert main(["count", "--tracks", str(tracks), "--true", "3"]) == 0
    out = capsys.readouterr().out
    assert "0,90,3.0000,3" in out
    assert "average_accuracy: 100.00%" in out


def test_count_on_too_short_file_fails(tmp_path, capsys):
    tracks = tmp_path / "tracks.csv"
    tracks.write_text(TRACK_HEADER + "\n0,0,1.0,1.0,2.0,2.0,confirmed\n")
    assert main(["count", "--tracks", str(tracks)]) == 1
    assert "window needs 90 frames" in capsys.readouterr().err


def test_pipeline_writes_summary(tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["pipeline", *SCENE, "--set", "sim.duration_s=4", "--out", str(out_dir)]) == 0
    summary = (out_dir / "summary.txt").read_text()
    assert summary == capsys.readouterr().out
    for key in ("events_in:", "hot_pixels: 5", "count_window: 0,90,", "mota_mota:", "average_accuracy:", "note:"):
        assert key in summary
    assert (out_dir / "detections.csv").exists() and (out_dir / "tracks.csv").exists()


def test_bad_config_exits_with_one(capsys):
    assert main(["pipeline", "--set", "track.nope=1", "--out", "unused"]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_missing_input_exits_with_one(tmp_path, capsys):
    assert main(["track", "--detections", str(tmp_path / "none.csv"), "--out", str(tmp_path / "t.csv")]) == 1
    assert "zfcount track" in capsys.readouterr().err


def test_usage_errors_exit_with_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["eval", "--gt", "a.csv", "--gt", "b.csv", "--hyp", "c.csv"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["track", "--bogus"])
    assert info.value.code == 2


def test_count_command_matches_pipeline_windows(tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["pipeline", *SCENE, "--set", "sim.duration_s=6", "--out", str(out_dir)]) == 0
    summary = capsys.readouterr().out
    expected = [line.split(": ", 1)[1] for line in summary.splitlines() if line.startswith("count_window:")]
    assert [w.split(",")[:2] for w in expected] == [["0", "90"], ["90", "180"]]

    assert main(["count", *SCENE, "--tracks", str(out_dir / "tracks.csv"), "--last-frame", "179"]) == 0
    assert capsys.readouterr().out.splitlines()[1:] == expected


def test_pipeline_summary_is_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for out_dir in (first, second):
        assert main(["pipeline", *SCENE, "--set", "sim.duration_s=3", "--out", str(out_dir)]) == 0
    assert (first / "summary.txt").read_bytes() == (second / "summary.txt").read_bytes()
    assert (first / "tracks.csv").read_bytes() == (second / "tracks.csv").read_bytes()


def test_bad_kalman_diagonal_fails_before_any_output(tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["pipeline", *SCENE, "--set", "track.q_diag=1,1", "--out", str(out_dir)]) == 1
    assert "config error" in capsys.readouterr().err
    assert not out_dir.exists()
    assert main(["pipeline", *SCENE, "--set", "track.r_diag=4,-4", "--out", str(out_dir)]) == 1
    assert "config error" in capsys.readouterr().err
    assert not out_dir.exists()


def test_track_rejects_boxes_off_the_sensor(tmp_path, capsys):
    detections = tmp_path / "det.csv"
    detections.write_text("frame,id,x,y,w,h,conf,class\n0,-1,-500.0,10.0,8.0,8.0,1.0,target\n")
    out = tmp_path / "t.csv"
    assert main(["track", "--detections", str(detections), "--out", str(out)]) == 1
    assert "outside the 1280x800 sensor" in capsys.readouterr().err
    assert not out.exists()
