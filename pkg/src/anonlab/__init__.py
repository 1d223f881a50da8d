"""anonlab: simulation workbench for onion routing, mix cascades and DC-nets."""

__version__ = "0.1.0"
