"""Handlers package for TIFTI."""
