"""Numerical laboratory for steady planar ideal flows.

Builds stream-function solutions of semilinear elliptic problems on strips,
half planes, and quadrants, derives the corresponding velocity and pressure
fields, and measures the direction-set and curvature diagnostics that
classify such flows.
"""

__version__ = "0.1.0"
