"""Two-stage egocentric body estimation: hybrid head pose, then conditional diffusion."""

__version__ = "0.1.0"
