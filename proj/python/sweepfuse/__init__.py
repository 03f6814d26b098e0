from sweepfuse._core import *  # noqa: F401,F403
from sweepfuse._core import __doc__  # noqa: F401

__version__ = "0.1.0"
