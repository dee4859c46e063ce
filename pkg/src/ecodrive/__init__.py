"""Data-driven eco-driving MPC under bounded localization uncertainty."""

__version__ = "0.1.0"
