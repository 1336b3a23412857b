"""Graph networks for granular particle flows with triangulated wall boundaries.

Boundary contacts enter the graph as virtual nodes placed at the closest point
of each nearby wall triangle.  The package covers geometry, graph
construction, a numpy message-passing network with hand-written gradients,
integration and rollout, training, evaluation metrics and a synthetic data
generator.
"""

__version__ = "0.1.0"
