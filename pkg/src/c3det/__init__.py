"""Interactive multi-class tiny-object detection toolkit."""

__version__ = "0.1.0"
