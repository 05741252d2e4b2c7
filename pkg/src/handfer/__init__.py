"""Hand-assisted facial expression recognition on small grayscale crops."""

__version__ = "0.1.0"
