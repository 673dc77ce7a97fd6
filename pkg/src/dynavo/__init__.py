"""Dynamic-environment RGB-D visual odometry and semantic octree mapping."""

__version__ = "0.1.0"
