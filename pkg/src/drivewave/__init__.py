"""Reaction-diffusion laboratory for gene-drive traveling waves."""

__version__ = "0.1.0"
