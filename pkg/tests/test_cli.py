import json
import re

import numpy as np
import pytest

from loadaug import pipeline as pl
from loadaug.checkpoint import load_model
from loadaug.cli import main
from loadaug.dataset import NormalizationParams, read_dataset_csv
from loadaug.diffusion import generate_rows
from loadaug.numerics import NumericError, derive_seed
from loadaug.pipeline import PipelineConfig, load_config, verify_manifest
from loadaug.plots import line_svg, scatter_svg, stacked_area_svg


def _fast_config(tmp_path, **diffusion):
    cfg = load_config().to_dict()
    cfg["augment"]["diffusion"] = {"epochs": 2, "hidden": 16, **diffusion}
    cfg["augment"]["timegan"] = {"embedding_steps": 2, "supervised_steps": 2, "joint_steps": 2, "hidden": 4}
    cfg["augment"]["n_windows"] = 6
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------- plots


def test_scatter_has_one_marker_per_point():
    rng = np.random.default_rng(0)
    svg = scatter_svg([("a", rng.normal(size=34), rng.normal(size=34))], "t", "x", "y")
    assert svg.count("<circle") == 34
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_plots_are_deterministic():
    x = np.linspace(0, 1, 50)
    a = line_svg([("s", x, x**2)], "t")
    b = line_svg([("s", x.copy(), (x**2).copy())], "t")
    assert a == b


def test_stacked_area_two_series_over_day():
    hours = np.arange(24)
    svg = stacked_area_svg(hours, [("grid", np.full(24, 6.0)), ("PV", np.full(24, 4.0))])
    polys = re.findall(r'<polygon[^>]*points="([^"]*)"', svg)
    assert len(polys) == 2
    assert all(len(p.split()) == 48 for p in polys)


@pytest.mark.parametrize("fn", [scatter_svg, line_svg])
def test_empty_series_rejected(fn):
    with pytest.raises(ValueError):
        fn([("a", [], [])])
    with pytest.raises(ValueError):
        fn([])


# ---------------------------------------------------------------- config


def test_bundled_config_loads():
    cfg = load_config().validate()
    assert cfg.augment.kind == "diffusion" and cfg.augment.n_windows == 144
    assert cfg.data.train_fraction == 0.8 and cfg.data.window_length == 24


def test_stage_seeds_are_independent():
    cfg = PipelineConfig(seed=11)
    assert cfg.stage_seed("augment") == derive_seed(11, "augment")
    assert cfg.stage_seed("augment") != cfg.stage_seed("evaluate")


@pytest.mark.parametrize(
    "doc",
    [{"bogus": 1}, {"data": {"nope": 2}}, {"augment": {"kind": "gan"}}, {"augment": {"diffusion": {"epochs": -1}}}, {"data": 3}],
)
def test_bad_config_is_usage_error(tmp_path, doc, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    assert main(["ingest", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["pipeline", "--augmenter", "vae"])
    assert e.value.code == 1
    assert main(["ingest", "--config", str(tmp_path / "missing.json")]) == 1


# ---------------------------------------------------------------- pipeline


def test_pipeline_outputs_and_manifest(tmp_path):
    out = tmp_path / "run"
    cfg = _fast_config(tmp_path)
    assert main(["pipeline", "--config", str(cfg), "--out", str(out), "--kinds", "extratrees,random_forest,xgboost_like,catboost_like"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    s = manifest["summary"]
    assert s["benchmark_rows"] >= 12
    assert s["dispatch_schedules"] == 1
    assert len(list((out / "fidelity").glob("*.svg"))) == 9
    assert s["plots"] == 10  # nine fidelity plots and the dispatch chart
    assert verify_manifest(out) == []
    assert not (out / pl.LOCK_NAME).exists()
    effective = json.loads((out / "config.json").read_text())
    assert effective["augment"]["n_windows"] == 6
    aug = read_dataset_csv(out / "augment" / "augmented.csv")
    assert len(aug) == 6 * 24 and aug.source == "diffusion"
    report = json.loads((out / "reports" / "eval_report.json").read_text())
    assert {r["source"] for r in report["rows"]} == {"original", "replicated", "augmented-diffusion"}
    sched = (out / "dispatch" / "dispatch_schedule.csv").read_text().splitlines()
    assert len(sched) == 25


def test_augmenter_checkpoint_reproduces_rows(tmp_path):
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(_fast_config(tmp_path)), "--out", str(out), "--kinds", "extratrees"]) == 0
    loaded = load_model(out / "checkpoints" / "augmenter.ckpt")
    params = NormalizationParams.from_dict(loaded.extra["normalization"])
    seed = derive_seed(derive_seed(0, "augment"), "generate")
    rows = generate_rows(loaded.model, loaded.schedule, 6, params, seed)
    np.testing.assert_array_equal(rows.values, read_dataset_csv(out / "augment" / "augmented.csv").values)


def test_same_seed_same_report_bytes(tmp_path):
    cfg = _fast_config(tmp_path)
    for name in ("a", "b"):
        assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / name), "--seed", "5", "--kinds", "extratrees"]) == 0
    a = (tmp_path / "a" / "reports" / "eval_report.csv").read_bytes()
    assert a == (tmp_path / "b" / "reports" / "eval_report.csv").read_bytes()
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "6", "--kinds", "extratrees"]) == 0
    assert a != (tmp_path / "c" / "reports" / "eval_report.csv").read_bytes()


def test_timegan_and_replicate_augmenters(tmp_path):
    cfg = str(_fast_config(tmp_path))
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "g"), "--augmenter", "timegan", "--kinds", "extratrees"]) == 0
    assert read_dataset_csv(tmp_path / "g" / "augment" / "augmented.csv").source == "timegan"
    assert main(["pipeline", "--config", cfg, "--out", str(tmp_path / "r"), "--augmenter", "replicate", "--kinds", "extratrees"]) == 0
    assert not (tmp_path / "r" / "augment" / "augmented.csv").exists()


def test_missing_input_names_path(tmp_path, capsys):
    code = main(["pipeline", "--out", str(tmp_path / "o"), "--input", str(tmp_path / "absent.csv")])
    assert code == 2
    assert "absent.csv" in capsys.readouterr().err


def test_stage_without_prerequisite(tmp_path, capsys):
    assert main(["evaluate", "--out", str(tmp_path / "o")]) == 2
    assert "ingest" in capsys.readouterr().err


def test_test_rows_in_augmenter_training_abort(tmp_path, monkeypatch, capsys):
    real = pl.split_chronological

    def leaky(ds, fraction):
        _, test = real(ds, fraction)
        return ds, test  # training partition now contains the test rows

    monkeypatch.setattr(pl, "split_chronological", leaky)
    code = main(["pipeline", "--config", str(_fast_config(tmp_path)), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "augment" in err and "LeakageError" in err
    assert not (tmp_path / "o" / "augment" / "augmented.csv").exists()


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericError("loss became NaN")

    monkeypatch.setattr(pl, "train_diffusion", boom)
    assert main(["pipeline", "--config", str(_fast_config(tmp_path)), "--out", str(tmp_path / "o")]) == 3


def test_output_directory_lock(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / pl.LOCK_NAME).write_text("123")
    assert main(["ingest", "--out", str(out)]) == 1


def test_dispatch_problem_file(tmp_path, capsys):
    prob = tmp_path / "p.csv"
    prob.write_text("hour,load_kw,pv_max_kw\n" + "".join(f"{t},10,4\n" for t in range(24)))
    assert main(["dispatch", "--out", str(tmp_path / "o"), "--problem", str(prob)]) == 0
    summary = json.loads((tmp_path / "o" / "dispatch" / "dispatch_summary.json").read_text())
    assert summary["total_cost"] == pytest.approx(182.40)
