"""Lower-bound search for online bin stretching, with an independent certificate checker."""

__version__ = "0.1.0"
