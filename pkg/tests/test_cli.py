import json

import numpy as np
import pytest

from wpdegen import cli
from wpdegen.errors import InputError, PrecisionError, SolverError


def _run(tmp_path, **kw):
    kw.setdefault("out", str(tmp_path / "out"))
    return cli.run(cli.ExperimentConfig(**kw))


def test_model_wp_row_at_one_half(tmp_path):
    rec = _run(tmp_path, experiment="model-wp", s_grid=[0.5])
    vals = {q: v for s, q, v in rec.rows}
    assert vals["closed_form"] == pytest.approx(4 / np.pi, rel=1e-14)
    assert rec.summary["criteria"]["1_model_wp"]["pass"]


def test_indicial_roots_in_summary(tmp_path):
    rec = _run(tmp_path, experiment="indicial")
    data = json.loads((tmp_path / "out" / "indicial.json").read_text())
    assert data["roots"] == {"cusp": [-2.0, 1.0], "neck": [0.0, 3.0]}
    assert rec.summary["criteria"]["4_linear_solver"]["pass"]


def test_rerun_is_byte_identical(tmp_path):
    a = _run(tmp_path, experiment="model-wp", out=str(tmp_path / "a"))
    b = _run(tmp_path, experiment="model-wp", out=str(tmp_path / "b"))
    for fa, fb in zip(a.files, b.files):
        assert open(fa, "rb").read() == open(fb, "rb").read()


def test_threads_do_not_change_output(tmp_path):
    kw = dict(experiment="graft-check", s_grid=[0.05, 0.1])
    a = _run(tmp_path, out=str(tmp_path / "a"), threads=1, **kw)
    b = _run(tmp_path, out=str(tmp_path / "b"), threads=2, **kw)
    assert open(a.files[0], "rb").read() == open(b.files[0], "rb").read()


def test_csv_has_one_row_per_sample_and_quantity(tmp_path):
    rec = _run(tmp_path, experiment="model-wp", s_grid=[0.1, 0.2])
    lines = open(rec.files[0], newline="").read().split("\r\n")
    assert lines[0] == "s,quantity,value"
    assert len([ln for ln in lines[1:] if ln]) == 6


def test_cache_hit_and_stale_detection(tmp_path, caplog):
    kw = dict(experiment="model-wp", s_grid=[0.1], cache=str(tmp_path / "cache"))
    first = _run(tmp_path, **kw)
    again = _run(tmp_path, **kw)
    assert not first.cached and again.cached and again.rows == first.rows
    with caplog.at_level("WARNING", logger="wpdegen"):
        changed = _run(tmp_path, tolerances={"model_rel": 1e-9}, **kw)
    assert not changed.cached
    assert "stale cache" in caplog.text


@pytest.mark.parametrize(
    "kw",
    [
        dict(experiment="no-such-thing"),
        dict(experiment="wp-metric", s_grid=[0.5]),
        dict(experiment="wp-metric", resolution={"n_theta": 7}),
        dict(experiment="wp-metric", tolerances={"bogus": 1}),
    ],
)
def test_invalid_config_exit_code(tmp_path, kw):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**kw, "out": str(tmp_path / "o")}))
    assert cli.main(["--config", str(cfg)]) == 2


def test_unreadable_config(tmp_path):
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["--out", str(tmp_path)]) == 2  # no experiment


@pytest.mark.parametrize("err, code", [(SolverError("x"), 3), (PrecisionError("x"), 4), (InputError("x"), 2)])
def test_error_exit_codes(tmp_path, monkeypatch, err, code):
    def boom(cfg, pmap):
        raise err

    monkeypatch.setitem(cli.RUNNERS, "model-wp", boom)
    assert cli.main(["--experiment", "model-wp", "--out", str(tmp_path)]) == code


def test_main_prints_criteria(tmp_path, capsys):
    assert cli.main(["--experiment", "model-wp", "--out", str(tmp_path), "--seed", "5"]) == 0
    assert "1_model_wp: PASS" in capsys.readouterr().out


# --- report ------------------------------------------------------------------------
def test_report_rejects_empty():
    with pytest.raises(InputError):
        cli.report([])


def test_report_single_run_is_identity(tmp_path):
    rec = _run(tmp_path, experiment="model-wp", s_grid=[0.1, 0.2])
    table = cli.report([rec])
    got = {(r["s"], r["quantity"]): r["value"] for r in table["rows"]}
    assert got == {(s, q): v for s, q, v in rec.rows}
    assert all(r["uncertainty"] == 0 for r in table["rows"])


def _fake(n, value, arg=0.0):
    return {
        "experiment": "wp-metric",
        "config_hash": f"h{n}",
        "rows": [[0.05, "g_wp", value]],
        "provenance": {"config": {"resolution": {"n_theta": n}, "arg": arg}},
    }


def test_report_refinement_estimates():
    # values v(n) = 1 + 3 / n^2 on three grids
    recs = [_fake(n, 1 + 3 / n**2) for n in (64, 128, 256)]
    row = cli.report(recs)["rows"][0]
    assert row["value"] == pytest.approx(1 + 3 / 256**2)
    assert row["order"] == pytest.approx(2.0, abs=1e-9)
    assert row["uncertainty"] == pytest.approx(3 / 256**2, rel=1e-9)


def test_report_rejects_incompatible_runs():
    with pytest.raises(InputError):
        cli.report([_fake(64, 1.0, arg=0.0), _fake(128, 1.0, arg=1.0)])


def test_fit_report_reads_previous_runs(tmp_path):
    out = str(tmp_path / "out")
    _run(tmp_path, experiment="model-wp", s_grid=[0.1], out=out)
    rec = _run(tmp_path, experiment="fit-report", out=out)
    assert any(q == "model-wp:closed_form" for _, q, _ in rec.rows)
    with pytest.raises(InputError):
        _run(tmp_path, experiment="fit-report", out=str(tmp_path / "empty"))
