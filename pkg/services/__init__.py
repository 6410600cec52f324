"""Services package for TIFTI."""
