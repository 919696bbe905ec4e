"""fecim: behavioral simulator for subthreshold-FeFET compute-in-memory arrays."""

__version__ = "0.1.0"
