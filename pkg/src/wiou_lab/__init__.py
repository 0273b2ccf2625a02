"""IoU-family bounding-box regression losses, focusing mechanisms and a
gradient-descent regression simulator."""

__version__ = "0.1.0"
