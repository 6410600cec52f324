"""Utils package for TIFTI."""
