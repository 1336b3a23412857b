"""Small builders shared by several test modules."""
import numpy as np

from bgnn.graph import BoundaryGraph


def random_graph(rng, n_real=10, n_virtual=4, node_in=22, edge_in=4, p_edge=0.3):
    """Random boundary graph: bidirectional real edges plus one edge per virtual node."""
    pairs = [(i, j) for i in range(n_real) for j in range(i + 1, n_real) if rng.random() < p_edge]
    snd = [i for i, j in pairs] + [j for i, j in pairs]
    rcv = [j for i, j in pairs] + [i for i, j in pairs]
    targets = rng.integers(0, n_real, n_virtual)
    snd += list(range(n_real, n_real + n_virtual))
    rcv += targets.tolist()
    n_edges = len(snd)
    is_virtual = np.r_[np.zeros(n_real, bool), np.ones(n_virtual, bool)]
    feats = rng.normal(size=(n_real + n_virtual, node_in))
    return BoundaryGraph(
        positions=rng.normal(size=(n_real + n_virtual, 3)),
        is_virtual=is_virtual,
        node_features=feats,
        senders=np.array(snd, dtype=np.int64),
        receivers=np.array(rcv, dtype=np.int64),
        edge_is_virtual=np.r_[np.zeros(2 * len(pairs), bool), np.ones(n_virtual, bool)],
        edge_features=rng.normal(size=(n_edges, edge_in)),
        source_triangle=np.r_[np.full(n_real, -1), np.arange(n_virtual)],
        target_particle=np.r_[np.full(n_real, -1), targets],
    )
