"""Contrastive patch embeddings from sparse anchor annotations, nearest-prototype
terrain segmentation and bird's-eye semantic grid mapping."""

from .errors import DataError, NumericError, TerragrainError

__version__ = "0.1.0"
