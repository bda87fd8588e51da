import pytest

from varfield.pipeline import YMDemoPipeline, summary_lines

STAGES = ["started", "euler", "jacobi", "pair_current", "conservation", "done"]


def test_demo_run_in_two_dimensions():
    events = list(YMDemoPipeline(dim=2).run())
    assert [event["stage"] for event in events] == STAGES
    assert events[-1]["passed"] is True
    conservation = events[4]
    assert conservation["samples"] == 81
    assert conservation["max_residual"] <= conservation["threshold"]
    lines = summary_lines(events)
    assert lines[0].startswith("Euler-Lagrange match: PASS (6 components")
    assert lines[3].startswith("numeric conservation: PASS (max |residual| =")


@pytest.mark.asyncio
async def test_stream_reports_unsupported_dimension():
    events = [event async for event in YMDemoPipeline(dim=5).stream()]
    assert [event["stage"] for event in events] == ["started", "error"]
    assert "unsupported" in events[-1]["error"]


def test_summary_marks_missing_stages():
    events = [
        {"stage": "started"},
        {"stage": "euler", "passed": True, "components": 6, "wall_time": 0.5},
        {"stage": "jacobi", "passed": False, "components": 6, "wall_time": 1.0},
    ]
    lines = summary_lines(events)
    assert lines == [
        "Euler-Lagrange match: PASS (6 components, 0.50s)",
        "Jacobi equation match: FAIL (6 components, 1.00s)",
        "pair current match: FAIL (not reached)",
        "numeric conservation: FAIL (not reached)",
    ]
