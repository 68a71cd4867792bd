"""Gradient-boosted PV inverter setpoint models with a portable
tree-ensemble format and a float32 edge inference path."""

__version__ = "0.1.0"
