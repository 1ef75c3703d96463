"""Direct gradient surgery for hypersphere metric-learning embeddings."""

__version__ = "0.1.0"
