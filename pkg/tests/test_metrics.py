import numpy as np
import pytest

from skillnet.metrics import MetricsWriter, read_metrics, scrub, validate_event


def solve_event(**overrides):
    event = {
        "event": "solve",
        "task_id": "a",
        "pass_number": 1,
        "budget": 100.0,
        "winner": "warm",
        "relevant_trial_ids": [3],
    }
    event.update(overrides)
    return event


def test_valid_event_passes():
    validate_event(solve_event())


def test_missing_field_rejected():
    event = solve_event()
    del event["winner"]
    with pytest.raises(ValueError, match="winner"):
        validate_event(event)


def test_extra_field_rejected():
    with pytest.raises(ValueError, match="undeclared"):
        validate_event(solve_event(extra=1))


def test_wrong_type_rejected():
    with pytest.raises(ValueError, match="pass_number"):
        validate_event(solve_event(pass_number="one"))


def test_bool_is_not_numeric():
    with pytest.raises(ValueError, match="budget"):
        validate_event(solve_event(budget=True))


def test_unknown_event_rejected():
    with pytest.raises(ValueError, match="unknown"):
        validate_event({"event": "mystery"})


def test_scrub_converts_numpy_types():
    out = scrub({
        "a": np.float64(1.5),
        "b": np.int64(2),
        "c": np.bool_(True),
        "d": np.array([1.0, 2.0]),
        "e": {"nested": np.float32(0.5)},
    })
    assert out == {"a": 1.5, "b": 2, "c": True, "d": [1.0, 2.0], "e": {"nested": 0.5}}
    assert isinstance(out["a"], float) and isinstance(out["b"], int)


def test_writer_round_trip(tmp_path):
    path = tmp_path / "metrics.jsonl"
    with MetricsWriter(path) as writer:
        writer.emit(solve_event())
        writer.emit({
            "event": "budget_double",
            "pass_number": 2,
            "old_budget": 100.0,
            "new_budget": 200.0,
        })
    events = read_metrics(path)
    assert [e["event"] for e in events] == ["solve", "budget_double"]


def test_writer_refuses_invalid_event(tmp_path):
    with MetricsWriter(tmp_path / "m.jsonl") as writer:
        with pytest.raises(ValueError):
            writer.emit({"event": "solve"})


def test_read_metrics_reports_bad_line(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"event": "budget_double", "pass_number": 1, '
                    '"old_budget": 1, "new_budget": 2}\nnot json\n')
    with pytest.raises(ValueError, match="line 2"):
        read_metrics(path)
