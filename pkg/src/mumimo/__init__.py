"""Joint RBG allocation, rank selection and power allocation for MU-MIMO."""

__version__ = "0.1.0"
