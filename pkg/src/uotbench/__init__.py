"""uotbench: image measures, W2/Hellinger-Kantorovich distances, neighbor
embeddings, and a statistical benchmark harness over the three metrics."""

__version__ = "0.1.0"
