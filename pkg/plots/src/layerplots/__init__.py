"""Offline figure generation from layerlab CSV/JSON outputs.

The plotters consume the documented file schemas only and never recompute
physics; figures regenerate byte-stably for fixed inputs and styling.
"""

__version__ = "0.1.0"
