"""Backend selection for the RK4 kernels.

The compiled extension is preferred.  Set ``CONVMATCH_PURE_PYTHON=1`` to force
the pure-Python twin, e.g. to cross-check results or on a machine without a
C compiler.
"""

import os

if os.environ.get("CONVMATCH_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernel_py as _impl
else:
    try:
        from . import _kernel as _impl
    except ImportError:  # extension not built
        from . import _kernel_py as _impl

BACKEND = _impl.BACKEND
run_converter = _impl.run_converter
run_network = _impl.run_network
run_linear = _impl.run_linear
