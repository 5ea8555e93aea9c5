# src/maschine/__init__.py
"""Schema-derived protograph pre-training for knowledge graph embeddings."""

__version__ = "0.1.0"
