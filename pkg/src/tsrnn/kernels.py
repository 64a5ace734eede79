"""Tree-building kernel selection.

The compiled Cython kernel is used when it was built; otherwise the
pure-Python twin.  Set ``TSRNN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _treekernel_py

if os.environ.get("TSRNN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _treekernel_py
else:
    try:
        from . import _treekernel as _impl
    except ImportError:
        _impl = _treekernel_py

BACKEND = "cython" if _impl is not _treekernel_py else "python"
build_tree = _impl.build_tree
apply_tree = _impl.apply_tree
