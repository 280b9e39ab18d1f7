"""Dataset preparation: archive converters and canonical-format verification."""

__version__ = "0.1.0"
