"""Agentic testbench generation and simulation-backed verification."""

__version__ = "0.1.0"
