"""Backend selection for the hot p-Laplacian kernels.

The compiled extension ``plapsys._kernels`` is used when it imports; otherwise
the numpy implementation in ``plapsys._kernels_py`` takes over. Setting the
environment variable ``PLAPSYS_PURE=1`` forces the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PLAPSYS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

weighted_operator = _impl.weighted_operator
operator_and_conductance = _impl.operator_and_conductance
gradient_energy = _impl.gradient_energy
solve_tridiag = _impl.solve_tridiag


def backends():
    """Return the importable backend modules keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
