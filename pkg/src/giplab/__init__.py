"""Self-supervised graph representation learning with inter-graph augmentation."""

__version__ = "0.1.0"
