"""Interactive advice protocols for blocks-world coordinate prediction."""

__version__ = "0.1.0"
