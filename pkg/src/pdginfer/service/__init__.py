"""FastAPI service layer: schemas, handlers, and the app factory."""

from .app import app

__all__ = ["app"]
