"""Sub/supersolution solver for singular cooperative p-Laplacian systems."""

__version__ = "0.1.0"
