"""Python bindings for the conmo motion recomposition library."""

from ._core import *  # noqa: F401,F403
from ._core import ConmoError, __doc__  # noqa: F401
