"""Figure rendering for quasishadow experiment artifacts."""

__version__ = "0.1.0"

from .render import KINDS, FigureSpec, render  # noqa: F401
