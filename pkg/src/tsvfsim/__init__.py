"""Pre- and post-selected single-photon interferometry.

Forward and backward evolution through optical circuits, weak values,
ABL probabilities and Gaussian-pointer weak measurements.
"""
__version__ = "0.1.0"
