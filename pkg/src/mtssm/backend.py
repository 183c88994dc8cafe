"""Select the compiled kernel extension, falling back to pure NumPy.

Set MTSSM_PURE=1 to force the fallback (useful for benchmarking and for
debugging numerical issues against readable code).
"""

import os

if os.environ.get("MTSSM_PURE", "0") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels_c as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels


def backend_name() -> str:
    """Either "compiled" or "python"."""
    return kernels.BACKEND
