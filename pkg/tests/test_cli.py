import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from bgnn.cli import COMMANDS, COMMON, build_parser, derive_seed, main, resolve_options
from bgnn.mesh import read_obj

TINY_NET = ["--layers", "1", "--node-width", "8", "--edge-width", "8", "--history", "2"]


def run(args, capsys=None):
    code = main([str(a) for a in args])
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(Path(directory).rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--preset", "tiny", "--n-trajectories", "3", "--steps", "25", "-o", str(d),
                 "--val-fraction", "0.34", "--test-fraction", "0.0", "--seed", "5"]) == 0
    return d


# ---------------------------------------------------------------- parser

@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_every_flag(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    spec = COMMANDS[command]
    keys = [k for k, *_ in spec["required"]] + [k for k, *_ in COMMON + spec["opts"]]
    for key in keys:
        assert "--" + key.replace("_", "-") in text, key


def test_unknown_flag_is_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-mesh", "--kind", "box", "-o", "x.obj", "--bogus"])
    assert exc.value.code == 2


def test_missing_required_flag_exit_2(capsys):
    code, out = run(["gen-mesh", "--kind", "box"], capsys)
    assert code == 2
    assert "usage:" in out.err and "--out" in out.err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bgnn", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gen-data" in res.stdout


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 7, "learning_rate": 0.5}))
    args = vars(build_parser().parse_args(["train", "--data", "d", "-o", "o", "--config", str(cfg), "--epochs", "3"]))
    o = resolve_options("train", args)
    assert o["epochs"] == 3  # flag beats file
    assert o["learning_rate"] == 0.5  # file beats default
    assert o["batch_frames"] == 8  # default


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"not_an_option": 1}))
    code, out = run(["gen-mesh", "--kind", "box", "-o", tmp_path / "m.obj", "--config", cfg], capsys)
    assert code == 2 and "not_an_option" in out.err


def test_required_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "box", "out": str(tmp_path / "m.obj")}))
    code, _ = run(["gen-mesh", "--config", cfg], capsys)
    assert code == 0 and len(read_obj(tmp_path / "m.obj").faces) == 12


def test_derive_seed_stable():
    assert derive_seed(3, "train") == derive_seed(3, "train")
    assert derive_seed(3, "train") != derive_seed(3, "init")
    assert derive_seed(3, "train") != derive_seed(4, "train")


# ---------------------------------------------------------------- commands

def test_gen_mesh_box_and_drum(tmp_path, capsys):
    code, out = run(["gen-mesh", "--kind", "box", "--size", "1", "1", "1", "-o", tmp_path / "box.obj"], capsys)
    assert code == 0 and "faces=12" in out.out
    mesh = read_obj(tmp_path / "box.obj")
    assert len(mesh.faces) == 12 and mesh.vertices.max() == 1.0
    code, _ = run(["gen-mesh", "--kind", "drum", "--facets", "32", "-o", tmp_path / "drum.obj"], capsys)
    assert code == 0 and len(read_obj(tmp_path / "drum.obj").faces) == 128


def test_gen_mesh_invalid_value(tmp_path, capsys):
    code, _ = run(["gen-mesh", "--kind", "hopper", "--angle", "45", "-o", tmp_path / "h.obj"], capsys)
    assert code == 2


def test_gen_data_manifest(tiny_data):
    manifest = json.loads((tiny_data / "manifest.json").read_text())
    assert [e["split"] for e in manifest["trajectories"]].count("val") == 1
    assert all((tiny_data / e["path"] / "frames.csv").is_file() for e in manifest["trajectories"])
    assert manifest["root_seed"] == 5 and manifest["steps"] == 25


def test_train_missing_data_exit_2(tmp_path, capsys):
    code, _ = run(["train", "--data", tmp_path / "nothing", "-o", tmp_path / "o"], capsys)
    assert code == 2


def test_rollout_zero_steps_exit_2(tmp_path, capsys):
    code, out = run(["rollout", "--checkpoint", tmp_path / "c.json", "--trajectory", tmp_path / "t",
                     "-o", tmp_path / "r", "--steps", "0"], capsys)
    assert code == 2 and "steps" in out.err


def test_runtime_failure_exit_1(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("{}")
    code, out = run(["rollout", "--checkpoint", bad, "--trajectory", tmp_path, "-o", tmp_path / "r"], capsys)
    assert code == 1 and "error" in out.err


def test_reflect_eight_entries(tmp_path, capsys):
    code, out = run(["reflect", "-o", tmp_path, "--steps", "20", "--n-train", "64", "--n-test", "32",
                     "--hidden", "8"], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert sorted(summary["mse"]) == sorted(f"R{k}_{o}" for k in range(1, 5) for o in ("same", "inverted"))
    assert out.out.count("event=variant") == 4


def test_thread_env_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BGNN_NUM_THREADS", "zero")
    code, _ = run(["gen-mesh", "--kind", "box", "-o", tmp_path / "m.obj"], capsys)
    assert code == 2


def test_tiny_pipeline_smoke(tiny_data, tmp_path, capsys):
    start = time.perf_counter()
    ckpt = tmp_path / "run"
    code, out = run(["train", "--data", tiny_data, "-o", ckpt, "--epochs", "2", *TINY_NET], capsys)
    assert code == 0, out.err
    assert "event=epoch" in out.out
    metrics = (ckpt / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "step,train_loss,val_loss,wall_seconds" and len(metrics) == 3

    traj = tiny_data / "traj_000"
    code, out = run(["rollout", "--checkpoint", ckpt / "checkpoint.json", "--trajectory", traj,
                     "-o", tmp_path / "pred", "--steps", "10"], capsys)
    assert code == 0, out.err
    meta = json.loads((tmp_path / "pred" / "metadata.json").read_text())
    assert meta["n_frames"] == 11 and meta["start_frame"] == 2

    code, out = run(["eval", "--trajectory", tmp_path / "pred", "--reference", traj, "--data", tiny_data,
                     "--checkpoint", ckpt / "checkpoint.json", "-o", tmp_path / "eval"], capsys)
    assert code == 0, out.err
    for name in ("containment.csv", "entropy.csv", "mean_position.csv", "mean_velocity.csv", "emd.csv", "summary.json"):
        assert (tmp_path / "eval" / name).is_file(), name
    summary = json.loads((tmp_path / "eval" / "summary.json").read_text())
    assert summary["emd"]["reference_offset"] == 2
    assert len(summary["edge_growth"]["per_trajectory"]) == 3
    assert time.perf_counter() - start < 300


def test_deterministic_outputs_bitwise(tiny_data, tmp_path, capsys):
    args = ["train", "--data", tiny_data, "-o", tmp_path / "run", "--epochs", "2", "--deterministic", "--seed", "3",
            *TINY_NET]
    snaps = []
    for _ in range(2):
        assert run(args, capsys)[0] == 0
        snaps.append(snapshot(tmp_path / "run"))
    assert snaps[0] == snaps[1]
    assert b",0.0\n" in snaps[0]["metrics.csv"]  # wall_seconds zeroed

    roll = ["rollout", "--checkpoint", tmp_path / "run" / "checkpoint.json", "--trajectory", tiny_data / "traj_001",
            "-o", tmp_path / "pred", "--steps", "8", "--deterministic", "--seed", "3"]
    snaps = []
    for _ in range(2):
        assert run(roll, capsys)[0] == 0
        snaps.append(snapshot(tmp_path / "pred"))
    assert snaps[0] == snaps[1]
