"""Groupwise multi-modal diffeomorphic registration."""

import os
import sys

try:
    from groupreg._core import *  # noqa: F401,F403
    from groupreg import _core  # noqa: F401
except ImportError:
    # in-tree layout: the extension lives in the build directory
    _dir = os.environ.get("GROUPREG_CORE_DIR")
    if not _dir:
        raise
    sys.path.insert(0, _dir)
    from _core import *  # noqa: F401,F403
    import _core  # noqa: F401

__version__ = "0.1.0"
