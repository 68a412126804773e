"""Turning movement counts from roadside LiDAR bounding-box detections."""

__version__ = "0.1.0"
