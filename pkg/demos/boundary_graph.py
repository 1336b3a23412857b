"""Simulate a few box steps with the oracle and look at the boundary graph.

Run: python3 demos/boundary_graph.py
"""
from bgnn.datagen import PRESETS, oracle_simulate
from bgnn.graph import GraphConfig, build_graph, edge_growth

traj = oracle_simulate(PRESETS["box"], 60)
cfg = GraphConfig()
for t in (10, 30, 59):
    g = build_graph(traj.window(t, cfg.history), traj.mesh, cfg)
    counts = edge_growth(g)
    print(f"t={t:3d} nodes={g.node_features.shape[0]:4d} "
          f"virtual={int(g.is_virtual.sum()):3d} edges={counts}")
