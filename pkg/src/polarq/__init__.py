"""polarq: quantized polar-code decoding workbench."""

__version__ = "0.1.0"
