"""Fisher information, protocol design and estimation for statistically polarized nano-NMR."""

__version__ = "0.1.0"
