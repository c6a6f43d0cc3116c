"""Differentiable ultrasound neural rendering."""

from ._ulre import *  # noqa: F401,F403
from ._ulre import __doc__  # noqa: F401
