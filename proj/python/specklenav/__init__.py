"""Speckle-camera surgical navigation simulation."""

from ._core import *  # noqa: F401,F403
from ._core import SnavError, __version__

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
