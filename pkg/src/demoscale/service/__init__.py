"""HTTP service exposing the pipeline stages and the review workflow."""

from .app import create_app

__all__ = ["create_app"]
