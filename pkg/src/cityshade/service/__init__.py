"""HTTP service exposing scenes, accumulation jobs, and measures."""

from .app import create_app

__all__ = ["create_app"]
