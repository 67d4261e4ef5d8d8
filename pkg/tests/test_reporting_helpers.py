import json
import math

import numpy as np
import pandas as pd
import pytest

from backend.core.dyna import MetricsRecord
from backend.core.errors import MetricsParseError, ShapeError
from backend.core.evaluation import (
    final_window_mean,
    learning_curve_auc,
    mean_stderr,
    mse,
    relative_gap,
    summarize_runs,
)
from backend.core.identifiers import build_run_id, compute_config_hash, parse_run_id, sanitize_fragment
from backend.storage.manifest import load_manifest, write_manifest
from backend.storage.metrics_sink import MetricsSink, format_value
from backend.storage.plotting import (
    learning_curve_bands,
    plot_learning_curves,
    read_metrics_csv,
    update_time_ratio,
    wall_clock_series,
)

HEADER = "step,episode,return,normalized_return,model_error_fraction\n"


def _record(step, episode, ret, error=math.nan, wall=0.001):
    return MetricsRecord(step=step, episode=episode, episode_return=ret, normalized_return=ret,
                         model_error_fraction=error, update_wall_time=wall)


def _write_runs(root, returns_by_run):
    sink = MetricsSink(str(root), "dyna")
    paths = []
    for run_id, returns in returns_by_run.items():
        sink.open_run(run_id)
        sink.append(run_id, [_record(100 * (i + 1), i, r) for i, r in enumerate(returns)])
        paths.append(sink.metrics_path(run_id))
    return sink, paths


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(0.25)) == "0.25"
    assert format_value(math.nan) == ""
    assert format_value(3) == "3"


def test_metrics_sink_layout(tmp_path):
    sink = MetricsSink(str(tmp_path), "dyna")
    run_id = build_run_id("dyna", "model_free", 3)
    sink.open_run(run_id)
    with pytest.raises(ValueError):
        sink.open_run(run_id)
    assert sink.append(run_id, [_record(10, 0, -5.0, wall=0.5), _record(25, 1, 1.0, error=0.125)]) == 2
    with open(sink.metrics_path(run_id), encoding="utf-8") as f:
        assert f.read() == HEADER + "10,0,-5.0,-5.0,\n25,1,1.0,1.0,0.125\n"
    with open(sink.timing_path(run_id), encoding="utf-8") as f:
        assert f.read() == "step,update_wall_time\n10,0.5\n25,0.001\n"
    assert sink.run_ids() == [run_id]


def test_read_metrics_csv_reports_line_numbers(tmp_path):
    good = tmp_path / "good.csv"
    good.write_text(HEADER + "1,0,1.0,0.5,\n")
    frame = read_metrics_csv(str(good))
    assert len(frame) == 1 and math.isnan(frame["model_error_fraction"][0])

    bad_cell = tmp_path / "bad_cell.csv"
    bad_cell.write_text(HEADER + "1,0,1.0,0.5,\n2,0,abc,0.5,\n")
    with pytest.raises(MetricsParseError) as exc:
        read_metrics_csv(str(bad_cell))
    assert exc.value.line == 3

    ragged = tmp_path / "ragged.csv"
    ragged.write_text(HEADER + "1,0,1.0\n")
    with pytest.raises(MetricsParseError) as exc:
        read_metrics_csv(str(ragged))
    assert exc.value.line == 2

    missing = tmp_path / "missing.csv"
    missing.write_text("step,episode\n1,0\n")
    with pytest.raises(MetricsParseError) as exc:
        read_metrics_csv(str(missing))
    assert exc.value.line == 1

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(MetricsParseError):
        read_metrics_csv(str(empty))


def test_learning_curve_bands_average_seeds(tmp_path):
    _, paths = _write_runs(tmp_path, {
        "dyna__dyna__s000": [0.2, 0.2],
        "dyna__dyna__s001": [0.4, 0.4],
        "dyna__model_free__s000": [0.1, 0.3],
    })
    bands = learning_curve_bands(paths, points=4)
    assert sorted(bands["arm"].unique()) == ["dyna", "model_free"]
    last = bands[bands["arm"] == "dyna"].iloc[-1]
    assert last["step"] == 200.0
    assert last["mean"] == pytest.approx(0.3)
    assert last["stderr"] == pytest.approx(0.1)
    assert last["n"] == 2
    first = bands[bands["arm"] == "model_free"].iloc[0]
    assert math.isnan(first["mean"]) and first["n"] == 0


def test_replot_is_byte_identical(tmp_path):
    _, paths = _write_runs(tmp_path, {
        "dyna__dyna__s000": [0.1, 0.5, 0.7],
        "dyna__model_free__s000": [0.0, 0.2, 0.3],
    })
    first = tmp_path / "a.svg"
    second = tmp_path / "b.svg"
    plot_learning_curves(paths, str(first), title="gridworld")
    plot_learning_curves(paths, str(second), title="gridworld")
    assert first.read_bytes() == second.read_bytes()
    assert first.read_bytes().lstrip().startswith(b"<?xml")


def test_wall_clock_series(tmp_path):
    sink, paths = _write_runs(tmp_path, {"dyna__dyna__s000": [0.1, 0.5]})
    series = wall_clock_series(paths, sink.timing_dir)
    assert list(series["arm"]) == ["dyna", "dyna"]
    assert series["cumulative_update_seconds"].tolist() == pytest.approx([0.1, 0.2])
    assert math.isnan(update_time_ratio([sink.timing_path("dyna__dyna__s000")]))


def test_evaluation_helpers():
    assert mse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        mse([1.0], [1.0, 2.0])
    m, se = mean_stderr([1.0, 2.0, 3.0])
    assert m == pytest.approx(2.0) and se == pytest.approx(1.0 / math.sqrt(3.0))
    assert mean_stderr([4.0]) == (4.0, 0.0)
    assert all(math.isnan(v) for v in mean_stderr([]))
    assert relative_gap(1.0, 0.0) == 1.0
    assert relative_gap(0.0, 0.0) == 0.0
    assert final_window_mean([float(i) for i in range(10)], 0.2) == pytest.approx(8.5)
    assert math.isnan(final_window_mean([]))


def test_learning_curve_auc_holds_each_episode_until_the_next():
    # 0 until step 10, 0.5 until step 30, 1.0 until the budget
    assert learning_curve_auc([10, 30], [0.5, 1.0], 50) == pytest.approx((0.5 * 20 + 1.0 * 20) / 50)
    assert learning_curve_auc([], [], 50) == 0.0
    # faster learners score higher even with the same final return
    early = learning_curve_auc([5, 10, 15], [1.0, 1.0, 1.0], 20)
    late = learning_curve_auc([5, 10, 15], [0.0, 0.0, 1.0], 20)
    assert early == pytest.approx(0.75) and late == pytest.approx(0.25)
    with pytest.raises(ValueError):
        learning_curve_auc([3, 1], [0.0, 0.0], 10)
    with pytest.raises(ShapeError):
        learning_curve_auc([1, 2], [0.0], 10)


def test_summarize_runs_groups_and_counts():
    frame = pd.DataFrame({
        "method": ["ftl", "ftl", "gd", "gd"],
        "d": [0.5, 0.5, 0.5, 0.5],
        "mse": [1.0, 3.0, 2.0, math.nan],
    })
    summary = summarize_runs(frame, ["method", "d"], "mse")
    assert list(summary.columns) == ["method", "d", "mean", "stderr", "n"]
    assert summary["mean"].tolist() == pytest.approx([2.0, 2.0])
    assert summary["n"].tolist() == [2, 1]


def test_run_ids():
    run_id = build_run_id("Dyna", "model free", 3)
    assert run_id == "dyna__model_free__s003"
    assert parse_run_id(run_id) == ("dyna", "model_free", 3)
    with pytest.raises(ValueError):
        parse_run_id("learning_curves")
    assert sanitize_fragment("") == "unknown"


def test_config_hash_ignores_key_order():
    assert compute_config_hash({"a": 1, "b": [1, 2]}) == compute_config_hash({"b": [1, 2], "a": 1})
    assert compute_config_hash({"a": 1}) != compute_config_hash({"a": 2})


def test_manifest_round_trip(tmp_path):
    path = write_manifest(str(tmp_path), "stream", {"stream_length": 10}, [0, 1])
    manifest = load_manifest(str(tmp_path))
    assert manifest["seeds"] == [0, 1]
    assert manifest["config"] == {"stream_length": 10}
    assert manifest["version"].startswith("v") and "-g" in manifest["version"]
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    data["manifest_version"] = 99
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)
    with pytest.raises(ValueError):
        load_manifest(path)
