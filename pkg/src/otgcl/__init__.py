"""Graph self-supervised learning with Gaussian subgraph embeddings and
optimal-transport contrastive losses."""

__version__ = "0.1.0"
