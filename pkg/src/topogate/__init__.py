"""Topological feature engine: cubical persistence, diagram vectorization,
and gated fusion of topological features into a small vision model."""

__version__ = "0.1.0"
