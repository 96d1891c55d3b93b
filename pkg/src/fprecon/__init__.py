"""Fingerprint reconstruction from minutiae templates, masquerade-attack
evaluation, and a fingerprint attendance registry."""

from .imaging import GrayImage, ForegroundMask, read_pgm, write_pgm, segment, equalize_histogram
from .minutiae import Kind, Minutia, Template, extract_minutiae, read_template, write_template
from .matching import match, decide, attack_eval
from .phase import reconstruct

__all__ = [
    "GrayImage",
    "ForegroundMask",
    "read_pgm",
    "write_pgm",
    "segment",
    "equalize_histogram",
    "Kind",
    "Minutia",
    "Template",
    "extract_minutiae",
    "read_template",
    "write_template",
    "match",
    "decide",
    "attack_eval",
    "reconstruct",
]

__version__ = "0.1.0"
