"""Detection of ship-to-ship transfer events from AIS data, satellite scene
cross-referencing into labeled tiles, and dark-STS auditing."""

__version__ = "0.1.0"
