"""Cookie synchronization detection and privacy measurement over HTTP weblogs."""

__version__ = "0.1.0"
