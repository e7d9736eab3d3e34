"""Python interface to the remtkd C++ core."""

from ._remtkd import *  # noqa: F401,F403
from ._remtkd import __doc__  # noqa: F401
