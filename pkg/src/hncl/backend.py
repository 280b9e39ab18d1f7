"""Kernel backend selection.

The convolution forward/backward pair dominates training time, so it has a
numba-compiled implementation plus a pure-numpy fallback. The environment
variable ``HNCL_BACKEND`` picks the path:

* ``auto`` (default) - numba when importable, numpy otherwise
* ``numba``          - require numba, fail loudly if unavailable
* ``numpy``          - force the pure-numpy kernels

Both paths compute the same quantities; they are not bitwise identical to
each other (different summation order), but each is deterministic on its own.
"""

from __future__ import annotations

import os

from . import _kernels_numpy
from .errors import ConfigError

_CHOICE = os.environ.get("HNCL_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ConfigError(f"HNCL_BACKEND must be auto|numba|numpy, got {_CHOICE!r}")

if _CHOICE == "numpy":
    _impl = _kernels_numpy
    _ACTIVE = "numpy"
else:
    try:
        from . import _kernels_numba as _impl  # noqa: F401

        _ACTIVE = "numba"
    except ImportError:
        if _CHOICE == "numba":
            raise ConfigError("HNCL_BACKEND=numba but numba is not importable")
        _impl = _kernels_numpy
        _ACTIVE = "numpy"

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward


def active_backend() -> str:
    """Name of the kernel set actually in use ('numba' or 'numpy')."""
    return _ACTIVE
