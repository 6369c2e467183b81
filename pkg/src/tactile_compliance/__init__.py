"""Young's modulus estimation from vision-based tactile grasps."""

__version__ = "0.1.0"
