"""NOMA-VLC downlink analysis under ambient-light distortion.

Modules: specfun (special functions and quadrature), noise (distortion law),
channel (Lambertian gains and mobility), rates, allocation, cli.
"""

__version__ = "0.1.0"
