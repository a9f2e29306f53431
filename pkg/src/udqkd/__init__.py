"""Secret key rates for unidimensional CV-QKD with coherent or squeezed states."""

__version__ = "0.1.0"
