"""Wall-reflection toy experiment: does the normal encoding survive a sign flip?

Identical ReLU networks learn ``v -> reflect(v, n)`` from walls whose normals
point into a cube, once per normal encoding (R1..R4), and are then tested on
the same walls with the same and with inverted normals.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .datagen import REFLECTION_VARIANTS, gen_reflection_dataset
from .net import ModelParams, NetConfig, dense_backward, dense_forward, he_init
from .train import adam_step, AdamState


@dataclass(frozen=True)
class ReflectionConfig:
    hidden: int = 64
    depth: int = 2  # hidden layers
    n_train: int = 2048
    n_test: int = 1024
    steps: int = 3000
    learning_rate: float = 1e-3
    seed: int = 0
    variants: tuple = REFLECTION_VARIANTS

    def to_dict(self):
        return asdict(self)


def _shapes(n_in, hidden, depth, n_out=3):
    widths = [n_in] + [hidden] * depth + [n_out]
    shapes = {}
    for k in range(len(widths) - 1):
        shapes[f"w{k}"] = (widths[k], widths[k + 1])
        shapes[f"b{k}"] = (widths[k + 1],)
    return shapes


def mlp_apply(arrays, x):
    """Plain ReLU network; returns output and per-layer inputs for backprop."""
    n_layers = len(arrays) // 2
    acts = [x]
    pre = []
    h = x
    for k in range(n_layers):
        z = dense_forward(h, arrays[f"w{k}"], arrays[f"b{k}"])
        pre.append(z)
        h = np.maximum(z, 0.0) if k < n_layers - 1 else z
        acts.append(h)
    return h, (acts, pre)


def mlp_grads(arrays, cache, dy):
    acts, pre = cache
    n_layers = len(pre)
    grads = {}
    for k in reversed(range(n_layers)):
        if k < n_layers - 1:
            dy = dy * (pre[k] > 0)
        dy, grads[f"w{k}"], grads[f"b{k}"] = dense_backward(dy, acts[k], arrays[f"w{k}"])
    return grads


@dataclass
class VariantResult:
    variant: str
    train_mse: float
    test_same_mse: float
    test_inverted_mse: float


def run_variant(variant: str, cfg: ReflectionConfig) -> VariantResult:
    """Train one network on ``variant`` and report normalized-target MSEs."""
    train = gen_reflection_dataset(cfg.n_train, variant, "same", cfg.seed)
    same = gen_reflection_dataset(cfg.n_test, variant, "same", cfg.seed + 1)
    inverted = gen_reflection_dataset(cfg.n_test, variant, "inverted", cfg.seed + 1)
    mean = train.targets.mean(axis=0)
    std = train.targets.std(axis=0)
    norm = lambda t: (t - mean) / std  # noqa: E731

    rng = np.random.default_rng(cfg.seed)
    arrays = he_init(_shapes(train.features.shape[1], cfg.hidden, cfg.depth), rng)
    params = ModelParams(NetConfig(), train.features.shape[1], 0, arrays)
    state = AdamState()
    x, y = train.features, norm(train.targets)
    for _ in range(cfg.steps):
        out, cache = mlp_apply(params.arrays, x)
        grads = mlp_grads(params.arrays, cache, 2.0 * (out - y) / y.size)
        adam_step(params, grads, state, cfg.learning_rate)

    def mse(samples):
        out, _ = mlp_apply(params.arrays, samples.features)
        return float(((out - norm(samples.targets)) ** 2).mean())

    return VariantResult(variant, mse(train), mse(same), mse(inverted))


def run_experiment(cfg: ReflectionConfig = ReflectionConfig(), progress=None) -> dict:
    """Per-variant results plus a flat ``mse`` map with 2 entries per variant."""
    results = []
    for v in cfg.variants:
        r = run_variant(v, cfg)
        results.append(r)
        if progress is not None:
            progress(r)
    flat = {}
    for r in results:
        flat[f"{r.variant}_same"] = r.test_same_mse
        flat[f"{r.variant}_inverted"] = r.test_inverted_mse
    return {"config": cfg.to_dict(), "variants": [asdict(r) for r in results], "mse": flat}
