"""Patched-style GAN for realistic scene-text replacement."""

__version__ = "0.1.0"
