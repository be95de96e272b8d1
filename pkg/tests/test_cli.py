import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from fcncd.checkpoint import load_checkpoint
from fcncd.cli import main, make_model
from fcncd.data import load_dataset
from fcncd.simulator import SimConfig

SMALL = dict(n_participants=40, n_dims=8, n_items=32, n_blocks=8, items_per_block=4, seed=3)


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    config = root / "config.json"
    config.write_text(json.dumps(SMALL))
    assert main(["simulate", "--config", str(config), "--out", str(root / "data")]) == 0
    return root


@pytest.fixture(scope="module")
def manifest(sim_dir):
    return sim_dir / "data" / "manifest.json"


@pytest.fixture(scope="module")
def trained(manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("train") / "model.ckpt"
    assert main(["train", "--dataset", str(manifest), "--max-epochs", "2", "--lr", "0.01", "--out", str(out)]) == 0
    return out


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# simulate


def test_simulate_writes_loadable_dataset(manifest):
    ds = load_dataset(manifest)
    assert (ds.n_participants, ds.n_items, ds.n_blocks, ds.n_dims) == (40, 32, 8, 8)
    assert (manifest.parent / "truth_theta.csv").exists() and (manifest.parent / "truth_items.csv").exists()


def test_simulate_defaults(tmp_path, monkeypatch):
    import fcncd.cli as cli

    seen = {}

    def fake_write(config, out):
        seen["config"] = config
        raise SystemExit(0)

    monkeypatch.setattr(cli, "write_simulation", fake_write)
    with pytest.raises(SystemExit):
        main(["simulate", "--out", str(tmp_path)])
    cfg = seen["config"]
    assert (cfg.n_participants, cfg.n_items, cfg.n_blocks, cfg.n_dims, cfg.items_per_block) == (1000, 480, 120, 24, 4)
    assert cfg == SimConfig()


def test_simulate_summary_reports_counts(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps(dict(SMALL, n_participants=2)))
    start = time.perf_counter()
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "d"), "--seed", "5"]) == 0
    assert time.perf_counter() - start < 1.0
    out = capsys.readouterr().out
    assert "participants=2 items=32 blocks=8 dimensions=8" in out
    assert json.loads((tmp_path / "d" / "sim_config.json").read_text())["seed"] == 5


def test_simulate_is_byte_identical(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps(SMALL))
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_bad_config(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps(dict(SMALL, n_items=31)))
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "d")]) == 2
    assert "n_items" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "d")]) == 2


# --------------------------------------------------------------------------
# train


def test_train_outputs(trained):
    model = load_checkpoint(trained)
    assert type(model).__name__ == "FCNCD"
    history = _csv(trained.with_suffix(".history.csv"))
    assert [row["epoch"] for row in history] == ["1", "2"]
    assert set(history[0]) == {"epoch", "loss", "pra", "lra"}
    report = json.loads(trained.with_suffix(".report.json").read_text())
    assert set(report) == {"pra", "lra", "doa", "n_records"}
    assert 0 <= report["pra"] <= 1 and 0 <= report["doa"] <= 1


def test_train_missing_dataset(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "manifest.json"
    assert main(["train", "--dataset", str(missing), "--out", str(tmp_path / "m.ckpt")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_train_unknown_model(manifest, tmp_path, capsys):
    assert main(["train", "--dataset", str(manifest), "--model", "kancd", "--out", str(tmp_path / "m")]) == 2
    assert "unknown model" in capsys.readouterr().err


def test_profile_and_overrides():
    model = make_model("fcncd", profile="sim-mole")
    assert (model.lam, model.batch_size, model.lr) == (10.0, 32, 5e-4)
    model = make_model("fcncd", profile="map", lr=0.2, seed=7)
    assert (model.lam, model.batch_size, model.lr, model.seed) == (8.0, 256, 0.2, 7)


def test_variant_plumbing(manifest, tmp_path):
    out = tmp_path / "mo.ckpt"
    assert main(["train", "--dataset", str(manifest), "--variant", "mo", "--max-epochs", "1", "--out", str(out)]) == 0
    assert load_checkpoint(out).no_monotone
    assert make_model("fcncd-eb").skip_mapping
    assert make_model("fcncd", variant="list").loss == "list"


def test_train_is_byte_identical(manifest, tmp_path):
    for name in ("a", "b"):
        argv = ["train", "--dataset", str(manifest), "--max-epochs", "1", "--seed", "4", "--out", str(tmp_path / f"{name}.ckpt")]
        assert main(argv) == 0
    for suffix in (".ckpt", ".history.csv", ".report.json"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()


# --------------------------------------------------------------------------
# eval and diagnose


def test_eval_reports_and_per_block(trained, manifest, tmp_path):
    out, per_block = tmp_path / "r.json", tmp_path / "blocks.csv"
    argv = ["eval", "--checkpoint", str(trained), "--dataset", str(manifest), "--held-out",
            "--per-block", str(per_block), "--out", str(out)]
    assert main(argv) == 0
    report = json.loads(out.read_text())
    assert report == json.loads(trained.with_suffix(".report.json").read_text())
    rows = _csv(per_block)
    assert len(rows) == report["n_records"]
    assert set(rows[0]) == {"participant_id", "block_id", "pair_accuracy", "exact"}
    assert np.mean([float(r["pair_accuracy"]) for r in rows]) == pytest.approx(report["pra"])
    assert main(argv[:-2] + ["--out", str(tmp_path / "again.json")]) == 0
    assert (tmp_path / "again.json").read_bytes() == out.read_bytes()


def test_eval_all_records(trained, manifest, capsys):
    assert main(["eval", "--checkpoint", str(trained), "--dataset", str(manifest)]) == 0
    assert json.loads(capsys.readouterr().out)["n_records"] == load_dataset(manifest).n_records


def test_eval_shape_mismatch(trained, tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text(json.dumps(dict(SMALL, n_participants=10)))
    main(["simulate", "--config", str(config), "--out", str(tmp_path / "d")])
    assert main(["eval", "--checkpoint", str(trained), "--dataset", str(tmp_path / "d" / "manifest.json")]) == 2
    assert "N=40" in capsys.readouterr().err


def test_eval_bad_checkpoint(manifest, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"junk")
    assert main(["eval", "--checkpoint", str(bad), "--dataset", str(manifest)]) == 2


def test_diagnose(trained, manifest, tmp_path):
    out = tmp_path / "d.json"
    assert main(["diagnose", "--checkpoint", str(trained), "--dataset", str(manifest),
                 "--participants", "0", "3", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert [p["participant_id"] for p in report["participants"]] == [0, 3]
    for entry in report["participants"]:
        ab = np.array(entry["abilities"])
        assert ab.shape == (8,) and ((ab > 0) & (ab < 1)).all()
        assert len(entry["blocks"]) == 8
        block = entry["blocks"][0]
        assert len(block["items"]) == len(block["scores"]) == len(block["predicted"]) == len(block["actual"]) == 4


def test_diagnose_unknown_participant(trained, manifest, capsys):
    assert main(["diagnose", "--checkpoint", str(trained), "--dataset", str(manifest), "--participants", "40"]) == 2
    assert "unknown participant 40" in capsys.readouterr().err


def test_diagnose_rejects_uninterpretable_models(manifest, tmp_path, capsys):
    out = tmp_path / "mf.ckpt"
    assert main(["train", "--dataset", str(manifest), "--model", "mf", "--max-epochs", "1", "--out", str(out)]) == 0
    assert main(["diagnose", "--checkpoint", str(out), "--dataset", str(manifest), "--participants", "0"]) == 2


# --------------------------------------------------------------------------
# bench


def test_bench_leaderboard(manifest, tmp_path):
    out = tmp_path / "board.csv"
    argv = ["bench", "--dataset", str(manifest), "--models", "random,fcncd", "--repeats", "1",
            "--max-epochs", "1", "--out", str(out)]
    assert main(argv) == 0
    with open(out, newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["model", "pra", "lra", "doa", "seed_count"]
    rows = _csv(out)
    assert [r["model"] for r in rows] == ["random", "fcncd"]
    assert all(r["seed_count"] == "1" for r in rows)
    assert abs(float(rows[0]["pra"]) - 0.5) < 0.1
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_bench_averages_over_seeds(manifest, tmp_path):
    out = tmp_path / "board.csv"
    assert main(["bench", "--dataset", str(manifest), "--models", "random", "--repeats", "3", "--seed", "2",
                 "--out", str(out)]) == 0
    assert _csv(out)[0]["seed_count"] == "3"


def test_bench_rejects_unknown_model_before_training(manifest, tmp_path):
    assert main(["bench", "--dataset", str(manifest), "--models", "fcncd,nope", "--out", str(tmp_path / "b.csv")]) == 2


def test_console_script_runs(tmp_path):
    result = subprocess.run([sys.executable, "-m", "fcncd.cli", "simulate", "--out", str(tmp_path / "x"),
                             "--config", str(tmp_path / "absent.json")], capture_output=True, text=True)
    assert result.returncode == 2
    assert "absent.json" in result.stderr
