"""Compression of fixed-connectivity mesh animations with eigen-trajectory dictionaries."""

from .codec import EncoderConfig, decode, encode
from .mesh import MeshSequence

__all__ = ["EncoderConfig", "MeshSequence", "decode", "encode"]
__version__ = "0.1.0"
