from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

import replay_fixtures
from hdtwin.agents import save_replay
from hdtwin.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUN, EXIT_TRANSPORT, build_parser, dispatch
from hdtwin.dsl import canonicalize
from hdtwin.engine import load_saved_dataset, one_step_mse, per_component_mse, load_params
from hdtwin.systems import builtin_system


def last_metrics(capsys) -> dict:
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("METRICS ")]
    assert lines, "no METRICS line printed"
    return json.loads(lines[-1][len("METRICS "):])


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "cancer"
    code = dispatch(["gen-data", "--system", "cancer-chemo-radio", "--seed", "3",
                     "--n", "5", "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_gen_data_layout(small_data, capsys):
    for split in ("train", "val", "test"):
        d = small_data / split
        assert (d / "manifest.json").exists()
        assert len(list(d.glob("traj-*.csv"))) == 5
    ds = load_saved_dataset(small_data / "train")
    assert len(ds.trajectories[0]) == 61


def test_gen_data_exposes_every_generation_flag(capsys, tmp_path):
    code = dispatch(["gen-data", "--system", "seir-covid", "--seed", "1", "--n", "2",
                     "--intervention", "--intervention-day", "19",
                     "--intervention-scale", "0.25", "--out", str(tmp_path / "x")])
    assert code == EXIT_OK
    assert last_metrics(capsys)["splits"] == ["test", "train", "val"]


def test_fit_and_eval_round_trip(small_data, tmp_path, capsys):
    system = builtin_system("cancer-chemo-radio")
    spec_path = tmp_path / "true.hdt"
    spec_path.write_text(canonicalize(system.spec).text)
    out = tmp_path / "fitrun"
    code = dispatch(["fit", "--spec", str(spec_path), "--data", str(small_data),
                     "--out", str(out), "--max-epochs", "5", "--patience", "5",
                     "--batch-size", "200"])
    assert code == EXIT_OK
    doc = last_metrics(capsys)
    assert doc["val_upsilon"] <= 1e-12  # true structure with true inits
    assert (out / "best-model.hdt").exists()
    assert (out / "best-params.json").exists()

    code = dispatch(["eval", "--spec", str(out / "best-model.hdt"),
                     "--params", str(out / "best-params.json"),
                     "--data", str(small_data / "test")])
    assert code == EXIT_OK
    doc = last_metrics(capsys)
    # the printed numbers match a direct library evaluation exactly
    spec = system.spec
    params = load_params(out / "best-params.json")
    delta, ups = per_component_mse(spec, params, load_saved_dataset(small_data / "test"))
    assert doc["upsilon"] == pytest.approx(ups, abs=1e-12)
    assert doc["delta"] == pytest.approx(list(delta), abs=1e-12)
    assert doc["sum_mse"] == pytest.approx(
        one_step_mse(spec, params, load_saved_dataset(small_data / "test")), abs=1e-12)


def test_evolve_with_replay_config(tmp_path, capsys):
    replay = tmp_path / "replies.json"
    save_replay(replay_fixtures.evolution_replies(), replay)
    out = tmp_path / "run"
    config = {
        "system": "cancer-chemo-radio",
        "method": "evolve",
        "seeds": [0],
        "out": str(out),
        "client": {"mode": "replay", "path": str(replay)},
        "evolve": {"generations": 6, "capacity": 16},
        "optim": {"batch_size": 200, "max_epochs": 20, "patience": 8},
        "gen": {"n": 5},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    code = dispatch(["evolve", "--config", str(cfg_path)])
    assert code == EXIT_OK
    doc = last_metrics(capsys)
    assert doc["mean"] is not None
    seed_dir = out / "seed-0000"
    for rel in ("run.manifest", "report.csv", "result.json", "best-model.hdt",
                "transcript/transcript.json"):
        assert (seed_dir / rel).exists(), rel
    assert (out / "summary.csv").exists()


def test_evolve_config_errors(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"system": "cancer", "method": "evolve", "seeds": [0],
                               "client": {"mode": "replay", "path": "/nonexistent"}}))
    assert dispatch(["evolve", "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text(json.dumps({"system": "cancer", "seeds": [0]}))
    assert dispatch(["evolve", "--config", str(cfg)]) == EXIT_CONFIG
    cfg.write_text(json.dumps({"system": "cancer", "method": "evolve", "seeds": [0],
                               "bogus_key": 1}))
    assert dispatch(["evolve", "--config", str(cfg)]) == EXIT_CONFIG
    assert dispatch(["evolve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_evolve_replay_exhaustion_is_transport_failure(tmp_path):
    replay = tmp_path / "replies.json"
    save_replay(replay_fixtures.evolution_replies()[:1], replay)  # far too short
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "system": "cancer-chemo-radio", "method": "evolve", "seeds": [0],
        "client": {"mode": "replay", "path": str(replay)},
        "evolve": {"generations": 3},
        "optim": {"batch_size": 200, "max_epochs": 5, "patience": 5},
        "gen": {"n": 4},
    }))
    assert dispatch(["evolve", "--config", str(cfg)]) == EXIT_TRANSPORT


def test_baseline_sindy_subcommand(tmp_path, capsys):
    code = dispatch(["baseline", "--id", "sindy", "--system", "lv2", "--seeds", "0", "1",
                     "--n", "4", "--out", str(tmp_path / "s")])
    assert code == EXIT_OK
    doc = last_metrics(capsys)
    assert doc["mean"] is not None and not doc["errors"]


def test_baseline_mechanistic_subcommand(tmp_path, capsys):
    code = dispatch(["baseline", "--id", "lv2", "--system", "lv2", "--seeds", "0",
                     "--n", "4", "--max-epochs", "10", "--patience", "5",
                     "--batch-size", "500", "--out", str(tmp_path / "b")])
    assert code == EXIT_OK
    assert np.isfinite(last_metrics(capsys)["mean"])


def test_baseline_run_failure_exit_code(tmp_path):
    code = dispatch(["baseline", "--id", "not-real", "--system", "lv2", "--seeds", "0",
                     "--n", "2", "--max-epochs", "5", "--patience", "5"])
    assert code == EXIT_RUN  # every seed failed


def test_report_aggregates_archives(tmp_path, capsys):
    for k, value in enumerate([1.0, 2.0, 3.0]):
        d = tmp_path / f"run{k}"
        d.mkdir()
        (d / "result.json").write_text(json.dumps(
            {"headline_metric": "one-step", "headline_value": value}))
    out_csv = tmp_path / "summary.csv"
    code = dispatch(["report", "--runs", str(tmp_path / "run0"), str(tmp_path / "run1"),
                     str(tmp_path / "run2"), "--out", str(out_csv)])
    assert code == EXIT_OK
    doc = last_metrics(capsys)
    assert doc["mean"] == 2.0
    assert doc["half_width_95"] == pytest.approx(2.484, abs=1e-3)
    assert "half_width_95" in out_csv.read_text()
    assert dispatch(["report", "--runs", str(tmp_path / "nope")]) == EXIT_CONFIG


def test_unknown_subcommand_is_config_error(capsys):
    assert dispatch(["frobnicate"]) == EXIT_CONFIG
    assert dispatch(["gen-data", "--bogus-flag"]) == EXIT_CONFIG


def test_help_lists_defaults():
    parser = build_parser()
    help_text = parser.format_help()
    assert "gen-data" in help_text and "report" in help_text
    fit_help = subprocess.run(
        [sys.executable, "-m", "hdtwin.cli", "fit", "--help"],
        capture_output=True, text=True,
    )
    assert fit_help.returncode == 0
    assert "default: 0.01" in fit_help.stdout       # learning rate
    assert "default: 1000" in fit_help.stdout       # batch size
    assert "default: 2000" in fit_help.stdout       # max epochs
    assert "default: 20" in fit_help.stdout         # patience


def test_module_entry_point_smoke(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "hdtwin.cli", "gen-data", "--system", "lv2",
         "--seed", "0", "--n", "2", "--out", str(tmp_path / "d")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "METRICS " in proc.stdout
