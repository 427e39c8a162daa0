"""Offline handwritten text-line recognition: page cleanup, projection-profile
line segmentation, and a from-scratch BLSTM trained with CTC."""

__version__ = "0.1.0"
