"""Curation pipeline for Verilog source corpora."""

__version__ = "0.1.0"
