"""Deterministic value-stream-map simulation, a progressive-discovery
analysis agent, and an evaluation harness with automated judging."""

__version__ = "0.1.0"
