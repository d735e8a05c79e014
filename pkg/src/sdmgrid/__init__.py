"""Software-defined control of a single-bus DC microgrid."""

__version__ = "0.1.0"
