"""Simulation and verification toolkit for scalar conservation laws driven by jump noise."""

from __future__ import annotations

__version__ = "0.1.0"
