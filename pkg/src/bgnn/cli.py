"""Command line entry point: ``bgnn <subcommand> [options]``.

Subcommands: gen-mesh, gen-data, train, rollout, eval, reflect.  Every
option may also be given in a JSON file passed via ``--config`` (keys are the
option names with underscores); flags override the file, which overrides the
defaults.  Progress is reported on stdout as ``key=value`` lines.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import zlib
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analytics
from .datagen import PRESETS, SceneSpec, gen_mesh, oracle_simulate
from .dynamics import MeshSchedule, RolloutConfig, load_trajectory, rollout, save_trajectory
from .graph import BoundaryMode, EdgeFeatureLaw, GraphConfig
from .mesh import write_obj
from .net import NetConfig, load_checkpoint, save_checkpoint
from .reflection import REFLECTION_VARIANTS, ReflectionConfig, run_experiment
from .train import LearnedSimulator, NormStats, TrainConfig, split_dataset, train, write_metrics_csv

THREADS_ENV = "BGNN_NUM_THREADS"
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; maps to exit code 2."""


def derive_seed(root: int, label: str) -> int:
    """Independent 32-bit seed for a named subsystem."""
    return int(np.random.SeedSequence([int(root), zlib.crc32(label.encode())]).generate_state(1)[0])


def emit(**kv) -> None:
    print(" ".join(f"{k}={_fmt(v)}" for k, v in kv.items()), flush=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v).replace(" ", "_")


def _build(cls, **kw):
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------- options
# (key, type, default, help, extra argparse kwargs)

COMMON = [
    ("config", str, None, "JSON file with option values (flags override it)", {}),
    ("seed", int, 0, "root random seed", {}),
    ("deterministic", bool, False, "single thread, no wall-clock values in outputs", {}),
]

GRAPH_OPTS = [
    ("r_cutoff", float, 0.015, "particle-particle cutoff radius (m)", {}),
    ("r_tilde_cutoff", float, None, "particle-boundary cutoff radius (m); defaults to r_cutoff", {}),
    ("history", int, 5, "number of past velocities per node", {}),
    ("edge_feature_law", str, "plain", "edge attributes", {"choices": [e.value for e in EdgeFeatureLaw]}),
    ("boundary_mode", str, "virtual_per_pair", "boundary representation", {"choices": [m.value for m in BoundaryMode]}),
    ("sample_spacing", float, None, "lattice spacing for boundary_mode=sampled (m)", {}),
    ("bidirectional_boundary", bool, False, "also add particle-to-boundary edges", {}),
]

NET_OPTS = [
    ("layers", int, 3, "message passing layers", {}),
    ("node_width", int, 64, "node embedding width", {}),
    ("edge_width", int, 64, "edge embedding width", {}),
    ("boundary_feature_boost", float, 3.0, "virtual copies of boundary inputs assumed at init", {}),
    ("layer_norm_eps", float, 1.0, "layer norm epsilon", {}),
    ("readout_gain", float, 0.1, "scale of the decoder output weights at init", {}),
]

TRAIN_OPTS = [
    ("learning_rate", float, 1e-3, "Adam step size", {}),
    ("beta1", float, 0.9, "Adam first moment decay", {}),
    ("beta2", float, 0.999, "Adam second moment decay", {}),
    ("adam_eps", float, 1e-8, "Adam epsilon", {}),
    ("batch_frames", int, 8, "frames per optimization step", {}),
    ("epochs", int, 20, "passes over the training frames", {}),
    ("max_steps", int, None, "stop after this many optimization steps", {}),
    ("noise_std", float, 0.0, "random-walk position noise (m)", {}),
    ("validation_fraction", float, 0.1, "held-out trajectories when the manifest has no val split", {}),
]

COMMANDS = {
    "gen-mesh": {
        "help": "write a parametric scene mesh as OBJ",
        "required": [("kind", str, "mesh kind", {"choices": ["box", "hopper", "drum"]}),
                     ("out", str, "output OBJ path", {"flags": ["-o", "--out"]})],
        "opts": [
            ("size", float, [0.1, 0.1, 0.1], "box extents (m)", {"nargs": 3}),
            ("angle", float, 135.0, "hopper wall inclination (deg)", {}),
            ("hole_radius", float, 0.01, "hopper slot half-width (m)", {}),
            ("height", float, 0.08, "hopper height (m)", {}),
            ("depth", float, 0.04, "hopper depth (m)", {}),
            ("radius", float, 0.05, "drum radius (m)", {}),
            ("length", float, 0.04, "drum length (m)", {}),
            ("facets", int, 32, "drum facets", {}),
        ],
    },
    "gen-data": {
        "help": "simulate trajectories with the synthetic oracle",
        "required": [("out", str, "output dataset directory", {"flags": ["-o", "--out"]})],
        "opts": [
            ("preset", str, "box", "scene preset", {"choices": sorted(PRESETS)}),
            ("n_trajectories", int, 10, "trajectories to simulate", {}),
            ("steps", int, 500, "stored steps per trajectory", {}),
            ("stride", int, 1, "simulation steps per stored step", {}),
            ("n_particles", int, None, "override the preset particle count", {}),
            ("particle_radius", float, None, "override the preset particle radius (m)", {}),
            ("dt", float, None, "override the preset time step (s)", {}),
            ("restitution", float, None, "override the preset wall restitution", {}),
            ("omega", float, None, "override the drum angular rate (rad/s)", {}),
            ("val_fraction", float, 0.1, "fraction of trajectories in the val split", {}),
            ("test_fraction", float, 0.1, "fraction of trajectories in the test split", {}),
        ],
    },
    "train": {
        "help": "fit the model to one-step accelerations",
        "required": [("data", str, "dataset directory (with manifest.json)", {}),
                     ("out", str, "output directory", {"flags": ["-o", "--out"]})],
        "opts": GRAPH_OPTS + NET_OPTS + TRAIN_OPTS,
    },
    "rollout": {
        "help": "closed-loop prediction from a stored trajectory's initial window",
        "required": [("checkpoint", str, "checkpoint JSON", {}),
                     ("trajectory", str, "trajectory directory providing the initial window and mesh", {}),
                     ("out", str, "output trajectory directory", {"flags": ["-o", "--out"]})],
        "opts": [
            ("steps", int, 100, "steps to predict (>= 1)", {}),
            ("start", int, None, "frame index of the window's current frame; defaults to the history length", {}),
        ],
    },
    "eval": {
        "help": "physical metrics of a trajectory and edge growth statistics",
        "required": [("trajectory", str, "trajectory directory to evaluate", {}),
                     ("out", str, "output directory", {"flags": ["-o", "--out"]})],
        "opts": [
            ("reference", str, None, "ground-truth trajectory for EMD", {}),
            ("data", str, None, "dataset directory (or trajectory directories, comma separated) for edge statistics", {}),
            ("checkpoint", str, None, "take graph settings from this checkpoint", {}),
            ("entropy_cells", int, [10, 10, 10], "entropy grid cells per axis", {"nargs": 3}),
            ("entropy_axis", int, 2, "axis of the initial median split", {}),
            ("emd_cap", int, analytics.EMD_CAP, "largest point set for exact EMD", {}),
        ] + GRAPH_OPTS,
    },
    "reflect": {
        "help": "wall-reflection toy experiment over normal encodings",
        "required": [("out", str, "output directory", {"flags": ["-o", "--out"]})],
        "opts": [
            ("variants", str, list(REFLECTION_VARIANTS), "encodings to run", {"nargs": "+", "choices": list(REFLECTION_VARIANTS)}),
            ("hidden", int, 64, "hidden width", {}),
            ("depth", int, 2, "hidden layers", {}),
            ("n_train", int, 2048, "training samples", {}),
            ("n_test", int, 1024, "test samples per orientation", {}),
            ("steps", int, 3000, "full-batch Adam steps", {}),
            ("learning_rate", float, 1e-3, "Adam step size", {}),
        ],
    },
}


def _add_option(p, key, typ, default, help_, extra):
    extra = dict(extra)
    flags = extra.pop("flags", ["--" + key.replace("_", "-")])
    if typ is bool:
        p.add_argument(*flags, dest=key, action="store_true", default=argparse.SUPPRESS,
                       help=f"{help_} (default: {default})")
        return
    p.add_argument(*flags, dest=key, type=typ, default=argparse.SUPPRESS,
                   help=f"{help_} (default: {default})", **extra)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgnn", description=__doc__.split("\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parser.subcommands = {}
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"], description=spec["help"])
        parser.subcommands[name] = p
        for key, typ, help_, extra in spec["required"]:
            extra = dict(extra)
            flags = extra.pop("flags", ["--" + key.replace("_", "-")])
            p.add_argument(*flags, dest=key, type=typ, default=argparse.SUPPRESS,
                           help=f"{help_} (required)", **extra)
        for key, typ, default, help_, extra in COMMON + spec["opts"]:
            _add_option(p, key, typ, default, help_, extra)
    return parser


def resolve_options(command: str, given: dict) -> dict:
    """Merge defaults < config file < flags and check required keys."""
    spec = COMMANDS[command]
    table = {k: (t, d) for k, t, d, _, _ in COMMON + spec["opts"]}
    required = {k: t for k, t, _, _ in spec["required"]}
    opts = {k: d for k, (t, d) in table.items()}
    if given.get("config"):
        path = Path(given["config"])
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            file_opts = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_opts, dict):
            raise ConfigError("config file must hold a JSON object")
        for k, v in file_opts.items():
            if k not in table and k not in required:
                raise ConfigError(f"unknown config key {k!r} for {command}")
            opts[k] = v
    opts.update({k: v for k, v in given.items() if k != "command"})
    missing = [k for k in required if opts.get(k) is None]
    if missing:
        raise ConfigError(f"{command}: missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return opts


def graph_config(o) -> GraphConfig:
    return _build(GraphConfig, r_cutoff=o["r_cutoff"], r_tilde_cutoff=o["r_tilde_cutoff"], history=o["history"],
                  edge_feature_law=o["edge_feature_law"], boundary_mode=o["boundary_mode"],
                  sample_spacing=o["sample_spacing"], bidirectional_boundary=bool(o["bidirectional_boundary"]))


def _existing(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {p} does not exist")
    return p


# --------------------------------------------------------------- commands

def cmd_gen_mesh(o) -> int:
    kind = o["kind"]
    try:
        spec = SceneSpec(kind=kind, size=tuple(o["size"]), hopper_angle=o["angle"], hopper_hole_radius=o["hole_radius"],
                         hopper_height=o["height"], hopper_depth=o["depth"], drum_radius=o["radius"],
                         drum_length=o["length"], drum_facets=o["facets"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    mesh = gen_mesh(spec)
    out = Path(o["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_obj(mesh, out)
    emit(event="mesh", kind=kind, vertices=len(mesh.vertices), faces=len(mesh.faces), path=out)
    return 0


def scene_from_options(o) -> SceneSpec:
    spec = PRESETS[o["preset"]]
    overrides = {"n_particles": o["n_particles"], "radius": o["particle_radius"], "dt": o["dt"],
                 "restitution": o["restitution"], "drum_omega": o["omega"]}
    try:
        return replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def assign_splits(n: int, val_fraction: float, test_fraction: float, seed: int) -> list[str]:
    if not (0 <= val_fraction < 1 and 0 <= test_fraction < 1 and val_fraction + test_fraction < 1):
        raise ConfigError("split fractions must be in [0, 1) and sum below 1")
    n_val = int(round(val_fraction * n))
    n_test = int(round(test_fraction * n))
    if n_val + n_test >= n:
        n_val, n_test = (0, 0) if n < 3 else (n_val, n_test)
    order = np.random.default_rng(seed).permutation(n)
    split = ["train"] * n
    for i in order[:n_val]:
        split[i] = "val"
    for i in order[n_val:n_val + n_test]:
        split[i] = "test"
    return split


def cmd_gen_data(o) -> int:
    spec = scene_from_options(o)
    n, steps, stride = o["n_trajectories"], o["steps"], o["stride"]
    if n < 1 or steps < 1 or stride < 1:
        raise ConfigError("n_trajectories, steps and stride must be >= 1")
    splits = assign_splits(n, o["val_fraction"], o["test_fraction"], derive_seed(o["seed"], "split"))
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k in range(n):
        scene = replace(spec, seed=derive_seed(o["seed"], f"scene/{k}"))
        traj = oracle_simulate(scene, steps * stride)
        if stride > 1:
            traj = traj.stride(stride)
        name = f"traj_{k:03d}"
        save_trajectory(traj, out / name)
        entries.append({"path": name, "split": splits[k], "seed": scene.seed})
        emit(event="trajectory", index=k, split=splits[k], frames=traj.n_frames, particles=traj.n_particles)
    manifest = {"preset": o["preset"], "scene": spec.to_dict(), "steps": steps, "stride": stride,
                "root_seed": o["seed"], "trajectories": entries}
    _write_json(out / MANIFEST, manifest)
    emit(event="done", manifest=out / MANIFEST)
    return 0


def load_dataset(path) -> dict:
    """``{split: [Trajectory, ...]}`` from a dataset directory."""
    d = _existing(path, "dataset")
    mf = d / MANIFEST
    if not mf.is_file():
        raise ConfigError(f"{d} has no {MANIFEST}")
    manifest = json.loads(mf.read_text())
    out = {}
    for e in manifest["trajectories"]:
        out.setdefault(e["split"], []).append(load_trajectory(d / e["path"]))
    return out


def cmd_train(o) -> int:
    gcfg = graph_config(o)
    ncfg = _build(NetConfig, layers=o["layers"], node_width=o["node_width"], edge_width=o["edge_width"],
                  boundary_feature_boost=o["boundary_feature_boost"], layer_norm_eps=o["layer_norm_eps"],
                  readout_gain=o["readout_gain"],
                  seed=derive_seed(o["seed"], "init"))
    if not o["learning_rate"] >= 0:
        raise ConfigError("learning_rate must be non-negative")
    tcfg = _build(TrainConfig, learning_rate=o["learning_rate"], betas=(o["beta1"], o["beta2"]),
                  adam_eps=o["adam_eps"], batch_frames=o["batch_frames"], epochs=o["epochs"],
                  max_steps=o["max_steps"], noise_std=o["noise_std"], seed=derive_seed(o["seed"], "train"),
                  validation_fraction=o["validation_fraction"])
    data = load_dataset(o["data"])
    trn = data.get("train", [])
    if not trn:
        raise ConfigError(f"dataset {o['data']} has no training trajectories")
    val = data.get("val")
    if not val:
        trn, val = split_dataset(trn, tcfg.validation_fraction, tcfg.seed)
    short = [t.n_frames for t in trn + val if t.n_frames < gcfg.history + 2]
    if short:
        raise ConfigError(f"trajectories need >= {gcfg.history + 2} frames for history {gcfg.history}")
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    deterministic = bool(o["deterministic"])
    clock = (lambda: 0.0) if deterministic else time.perf_counter

    def on_epoch(row):
        emit(event="epoch", **row)

    res = train(trn, ncfg, gcfg, tcfg, val_dataset=val or [], on_epoch=on_epoch, clock=clock)
    write_metrics_csv(res.log, out / "metrics.csv")
    save_checkpoint(out / "checkpoint.json", res.params, res.stats, gcfg.to_dict(),
                    extra={"best_val_loss": res.best_val, "train": _train_dict(tcfg)})
    _write_json(out / "run_config.json", {k: v for k, v in o.items()})
    emit(event="done", best_val_loss=res.best_val, checkpoint=out / "checkpoint.json")
    return 0


def _train_dict(t: TrainConfig) -> dict:
    return {f.name: getattr(t, f.name) for f in fields(t)}


def _load_model(path):
    params, env = load_checkpoint(_existing(path, "checkpoint"))
    if env.get("normalization_stats") is None or env.get("graph_config") is None:
        raise ConfigError(f"checkpoint {path} lacks normalization statistics or graph settings")
    stats = NormStats.from_dict(env["normalization_stats"])
    gcfg = _build(GraphConfig, **env["graph_config"])
    return params, stats, gcfg


def cmd_rollout(o) -> int:
    try:
        rcfg_steps = RolloutConfig(steps=o["steps"]).steps
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    params, stats, gcfg = _load_model(o["checkpoint"])
    traj = load_trajectory(_existing(o["trajectory"], "trajectory"))
    if traj.mesh is None:
        raise ConfigError(f"trajectory {o['trajectory']} has no mesh")
    start = gcfg.history if o["start"] is None else o["start"]
    if not gcfg.history <= start < traj.n_frames:
        raise ConfigError(f"start frame must lie in [{gcfg.history}, {traj.n_frames - 1}]")
    rcfg = RolloutConfig(steps=rcfg_steps, schedule=traj.schedule)
    model = LearnedSimulator(params, stats, exact=True)
    every = max(1, rcfg.steps // 10)

    def progress(k):
        if k % every == 0 or k == rcfg.steps:
            emit(event="step", step=k, of=rcfg.steps)

    pred = rollout(model, traj.window(start, gcfg.history), traj.mesh, rcfg, gcfg, start_step=start, progress=progress)
    pred.metadata.update({"source": str(o["trajectory"]), "start_frame": start,
                          "checkpoint": str(o["checkpoint"])})
    save_trajectory(pred, o["out"], history=gcfg.history)
    emit(event="done", frames=pred.n_frames, out=o["out"])
    return 0


def _edge_trajectories(spec):
    if spec is None:
        return None
    parts = [p for p in str(spec).split(",") if p]
    out = []
    for p in parts:
        d = _existing(p, "data path")
        if (d / MANIFEST).is_file():
            for trs in load_dataset(d).values():
                out.extend(trs)
        else:
            out.append(load_trajectory(d))
    return out


def cmd_eval(o) -> int:
    gcfg = _load_model(o["checkpoint"])[2] if o["checkpoint"] else graph_config(o)
    traj = load_trajectory(_existing(o["trajectory"], "trajectory"))
    ref = load_trajectory(_existing(o["reference"], "reference trajectory")) if o["reference"] else None
    edge_set = _edge_trajectories(o["data"]) or [traj]
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    summary = {"trajectory": str(o["trajectory"]), "graph_config": gcfg.to_dict(), "n_frames": traj.n_frames}

    if traj.mesh is not None and traj.mesh.is_watertight():
        cont = analytics.containment_series(traj)
        analytics.write_scalar_csv(enumerate(cont), out / "containment.csv")
        summary["containment"] = {"min": float(cont.min()), "final": float(cont[-1])}
    else:
        summary["containment"] = None
    emit(event="metric", name="containment", value=None if summary["containment"] is None else summary["containment"]["min"])

    lo, hi = traj.mesh.bounds() if traj.mesh is not None else (traj.positions.min((0, 1)), traj.positions.max((0, 1)))
    grid = analytics.EntropyGrid.from_initial_frame(traj.positions[0], lo, hi, o["entropy_cells"], o["entropy_axis"])
    ent = analytics.entropy_series(traj.positions, grid)
    analytics.write_scalar_csv(enumerate(ent), out / "entropy.csv")
    summary["entropy"] = {"initial": float(ent[0]), "final": float(ent[-1])}
    emit(event="metric", name="entropy", final=float(ent[-1]))

    flow = analytics.flow_profile(traj.positions, traj.dt)
    analytics.write_vector_csv(flow.mean_position, out / "mean_position.csv")
    analytics.write_vector_csv(flow.mean_velocity, out / "mean_velocity.csv")

    if ref is not None:
        if ref.n_particles != traj.n_particles:
            raise ConfigError("reference and trajectory differ in particle count")
        offset = int(traj.metadata.get("start_frame", 0)) if ref.n_frames > traj.n_frames else 0
        truth = ref.positions[offset:offset + traj.n_frames]
        series = analytics.emd_series(traj.positions[:len(truth)], truth, cap=o["emd_cap"], seed=derive_seed(o["seed"], "emd"))
        analytics.write_scalar_csv(series, out / "emd.csv")
        summary["emd"] = {"frames": [t for t, _ in series], "values": [v for _, v in series], "reference_offset": offset}
        emit(event="metric", name="emd", last=series[-1][1] if series else math.nan)

    stats = analytics.edge_growth_stats(edge_set, gcfg)
    summary["edge_growth"] = stats
    emit(event="metric", name="edge_growth", n_real=stats["n_real"]["mean"],
         n_boundary_edges=stats["n_boundary_edges"]["mean"], percent_increase=stats["percent_increase"]["mean"])
    _write_json(out / "summary.json", summary)
    emit(event="done", summary=out / "summary.json")
    return 0


def cmd_reflect(o) -> int:
    cfg = _build(ReflectionConfig, hidden=o["hidden"], depth=o["depth"], n_train=o["n_train"], n_test=o["n_test"],
                 steps=o["steps"], learning_rate=o["learning_rate"], seed=derive_seed(o["seed"], "reflect"),
                 variants=tuple(o["variants"]))
    if min(cfg.hidden, cfg.depth, cfg.n_train, cfg.n_test, cfg.steps) < 1:
        raise ConfigError("reflection sizes and steps must be >= 1")
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)

    def progress(r):
        emit(event="variant", variant=r.variant, train_mse=r.train_mse, same_mse=r.test_same_mse,
             inverted_mse=r.test_inverted_mse)

    result = run_experiment(cfg, progress)
    _write_json(out / "summary.json", result)
    emit(event="done", summary=out / "summary.json")
    return 0


HANDLERS = {"gen-mesh": cmd_gen_mesh, "gen-data": cmd_gen_data, "train": cmd_train,
            "rollout": cmd_rollout, "eval": cmd_eval, "reflect": cmd_reflect}


def _thread_limit(deterministic: bool):
    if deterministic:
        return 1
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return None
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        opts = resolve_options(command, vars(args))
        limit = _thread_limit(bool(opts["deterministic"]))
        with threadpool_limits(limits=limit):
            return HANDLERS[command](opts)
    except ConfigError as exc:
        print(parser.subcommands[command].format_usage().rstrip(), file=sys.stderr)
        print(f"bgnn {command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: report and exit 1
        print(f"bgnn {command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
