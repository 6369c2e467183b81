import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactile_compliance.errors import MalformedRow, UnknownKey
from tactile_compliance.physics import ModulusBounds, normalize_young
from tactile_compliance.reports import (
    band_half_width_decades,
    breakdown_report,
    read_predictions,
    rolling_window_report,
    write_breakdown,
    write_predictions,
    write_report,
    write_scatter_svg,
    write_windows,
)
from tactile_compliance.training import EvalReport, PredictionRow


def row(gid, truth, pred, material="foam", shape="Sphere", seed=0):
    se = (normalize_young(pred) - normalize_young(truth)) ** 2
    return PredictionRow(gid, truth, pred, material, shape, float(se), seed)


def uniform_rows(n=700, log_err=0.3, seeds=(0,), rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    rows = []
    for s in seeds:
        logs = rng.uniform(3, 12, n)
        signs = rng.choice([-1.0, 1.0], n)
        rows += [row(f"g{s}_{i:04d}", 10**t, 10 ** (t + sg * log_err), seed=s) for i, (t, sg) in enumerate(zip(logs, signs))]
    return rows


def test_window_edges_and_counts():
    report = rolling_window_report(uniform_rows())
    assert [(w.log10_lo, w.log10_hi) for w in report.windows] == [(3 + k, 6 + k) for k in range(7)]
    used = {w.used[0] for w in report.windows}
    assert len(used) == 1  # undersampled to the smallest window
    assert used.pop() == min(w.available[0] for w in report.windows)
    assert report.complete


def test_uniform_error_is_flat_across_windows():
    report = rolling_window_report(uniform_rows(seeds=(0, 1, 2)))
    means = [w.mean_std[0] for w in report.windows]
    assert max(means) <= 2 * min(means), means


def test_window_report_deterministic_and_seeded():
    rows = uniform_rows()
    a, b = rolling_window_report(rows, seed=1), rolling_window_report(rows, seed=1)
    assert a == b


def test_empty_windows_flagged():
    rows = [row(f"g{i}", 10 ** (4 + 0.01 * i), 10 ** (4 + 0.01 * i)) for i in range(30)]
    report = rolling_window_report(rows)
    assert not report.complete
    assert [w.empty for w in report.windows] == [False, False, True, True, True, True, True]
    assert len(report.nonempty()) == 2


def test_breakdown_single_group_equals_overall():
    rows = [row(f"g{i}", 10 ** (4 + i * 0.1), 10 ** (4.5 + i * 0.1)) for i in range(20)]
    rep = breakdown_report(rows, "material")
    assert list(rep.groups) == ["foam"]
    assert rep.groups["foam"] == rep.overall


def test_breakdown_band_boundary_inclusive():
    truth = 1e6
    a = row("a", truth, truth * 10)
    b = row("b", truth, truth * 10)
    rep = breakdown_report([a, b], "shape")
    # both SEs equal the mean SE exactly
    assert all(p.inside_band for p in rep.scatter)
    c = row("c", truth, truth)
    rep = breakdown_report([a, c], "shape")
    assert {p.grasp_id: p.inside_band for p in rep.scatter} == {"a": False, "c": True}


def test_breakdown_orders_soft_groups_lower():
    rng = np.random.default_rng(0)
    rows = []
    for i in range(60):
        soft = i % 2 == 0
        t = rng.uniform(4, 5) if soft else rng.uniform(9, 10)
        err = 0.1 if soft else 0.8
        rows.append(row(f"g{i}", 10**t, 10 ** (t + err), material="foam" if soft else "metal"))
    rep = breakdown_report(rows, "material")
    assert rep.groups["foam"]["n_mse"] < rep.groups["metal"]["n_mse"]
    assert rep.groups["foam"]["count"] == rep.groups["metal"]["count"] == 30


def test_breakdown_unknown_key():
    with pytest.raises(UnknownKey):
        breakdown_report([row("a", 1e5, 1e5)], "colour")


def test_band_half_width():
    assert band_half_width_decades(0.01) == pytest.approx(0.9)
    assert band_half_width_decades(0.04, ModulusBounds(4, 7)) == pytest.approx(0.6)


def test_predictions_roundtrip(tmp_path):
    rows = uniform_rows(n=20, seeds=(0, 3))
    path = write_predictions(rows, tmp_path / "p.csv")
    assert sorted(read_predictions(path), key=rows.index) == rows


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(3, 12), st.floats(3, 12), st.integers(0, 9)), min_size=1, max_size=20))
def test_predictions_roundtrip_exact(tmp_path_factory, triples):
    rows = [row(f"g{i}", 10**t, 10**p, seed=s) for i, (t, p, s) in enumerate(triples)]
    path = tmp_path_factory.mktemp("p") / "p.csv"
    # written in (seed, grasp_id) order
    assert read_predictions(write_predictions(rows, path)) == sorted(rows, key=lambda r: (r.seed, r.grasp_id))


def test_predictions_without_seed_column(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("grasp_id,truth_pa,pred_pa,material,shape,se\na,1e6,1e7,foam,Sphere,0.01\n")
    assert read_predictions(p)[0].seed == 0


def test_predictions_malformed(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("grasp_id,truth_pa\na,1e6\n")
    with pytest.raises(MalformedRow):
        read_predictions(p)
    p.write_text("grasp_id,truth_pa,pred_pa,material,shape,se,seed\na,abc,1e7,foam,Sphere,0.01,0\n")
    with pytest.raises(MalformedRow):
        read_predictions(p)


def test_writers(tmp_path):
    rows = uniform_rows(n=200)
    windows = write_windows(rolling_window_report(rows), tmp_path / "w.csv")
    assert len(windows.read_text().splitlines()) == 8
    bd = write_breakdown(breakdown_report(rows, "material"), tmp_path / "b.csv")
    lines = bd.read_text().splitlines()
    assert lines[0].split(",")[:2] == ["grasp_id", "seed"] and len(lines) == 201
    svg = write_scatter_svg(rows, tmp_path / "s.svg", "material")
    text = svg.read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text


def test_write_report_is_reproducible(tmp_path):
    rows = uniform_rows(n=100, seeds=(0, 1))
    report = EvalReport.from_rows(rows)
    a = write_report(report, tmp_path / "a")
    b = write_report(report, tmp_path / "b")
    assert sorted(a) == sorted(b)
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
    assert {p.name for p in a.values()} >= {"report.json", "predictions.csv", "scatter.svg"}


def test_nmse_window_bounds_limit_error():
    # a prediction far outside a window is clamped to the window edge
    rows = [row("a", 1e4, 1e11), row("b", 10**4.5, 10**4.5)]
    w = rolling_window_report(rows, windows=1).windows[0]
    assert w.n_mse[0] <= 1.0
    assert math.isfinite(w.mean_std[0])
