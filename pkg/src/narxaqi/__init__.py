"""Air-quality estimation with NARX networks trained by Levenberg-Marquardt."""

__version__ = "0.1.0"
