"""Models package for TIFTI."""
