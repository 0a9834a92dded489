"""Joint multi-intent detection and slot filling with label-semantic injection
and a dynamic intent-slot interaction graph."""

__version__ = "0.1.0"
