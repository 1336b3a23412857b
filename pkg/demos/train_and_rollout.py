"""Train a small model on box trajectories, then roll it out.

Takes about half a minute on one core.  Run: python3 demos/train_and_rollout.py
"""
from bgnn.analytics import containment_series
from bgnn.datagen import PRESETS, oracle_simulate, with_seed
from bgnn.dynamics import RolloutConfig, rollout
from bgnn.graph import GraphConfig
from bgnn.net import NetConfig
from bgnn.train import LearnedSimulator, TrainConfig, train

graph = GraphConfig()
data = [oracle_simulate(with_seed(PRESETS["box"], s), 120) for s in range(4)]
held = oracle_simulate(with_seed(PRESETS["box"], 99), 120)

res = train(data[:3], NetConfig(layers=2, node_width=32, edge_width=32), graph,
            TrainConfig(epochs=15, batch_frames=8), val_dataset=data[3:],
            on_epoch=lambda row: print(f"step {row['step']}: train {row['train_loss']:.3f} val {row['val_loss']:.3f}"))

sim = LearnedSimulator(res.params, res.stats)
pred = rollout(sim, held.window(graph.history, graph.history), held.mesh, RolloutConfig(steps=100), graph)
frac = containment_series(pred)
print(f"rollout: {pred.n_frames} frames, worst containment {frac.min():.2f}")
