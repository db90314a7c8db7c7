"""Coarse-grained wave equation toolkit for nanoassembly envelopes."""
__version__ = "0.1.0"
