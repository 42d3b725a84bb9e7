"""Full cascade on the small configuration ``N = (1, 3, 16)`` (about 3 minutes)."""
import math

import pytest

from nscascade.config import load_config
from nscascade.solver import run
from pathlib import Path


@pytest.mark.slow
def test_desk_cascade_ordering(tmp_path):
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk.ini")
    series, summary = run(cfg, output=tmp_path)
    c = summary["checks"]
    assert summary["status"] == "ok"
    assert series.times[-1] == pytest.approx(cfg.K)
    t0, t1, t2 = summary["activation_times"]
    assert t2 < t1 < t0
    assert c["top_shell_max_at_zero"] and c["top_shell_decays"]
    assert c["w_zero_at_start"] == 0.0
    assert all(math.isfinite(x) for row in series.shell_amp for x in row)
