"""Gripper type and parameter selection for assembly tasks from component meshes."""

__version__ = "0.1.0"
