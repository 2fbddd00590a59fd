import pytest

from src.config.pipeline_config import load_config
from src.services.pipeline_service import DETECTOR_GAP_NOTE, run_pipeline


@pytest.mark.slow
def test_twenty_fish_for_a_minute(tmp_path):
    config = load_config(overrides=[
        "sim.n_fish=20", "sim.duration_s=60", "sim.speed_min=2", "sim.speed_max=5",
        "sim.n_hot_pixels=40", "sim.occlusions=1:0:300:308;3:2:900:910", "seed=7",
    ])
    result = run_pipeline(config, str(tmp_path))
    assert len(result.count_reports) == 20
    assert result.accuracy.average >= 95
    assert all(abs(r.final - 20) <= 2 for r in result.count_reports)
    assert result.stats["events_after_fpn"] < result.stats["events_in"]
    assert DETECTOR_GAP_NOTE in (tmp_path / "summary.txt").read_text()
