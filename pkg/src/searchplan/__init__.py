"""Two-stage mixed-integer search planning for an autonomous 3D agent."""

__version__ = "0.1.0"
