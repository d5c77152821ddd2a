"""Backend selection for the hot numerical kernels.

Every performance-critical inner loop in this package exists twice: a
numba ``@njit`` version and a pure-numpy version.  Which one is used is
decided once, at import time, from the environment variable
``DYN_NN_LAB_BACKEND``:

* ``auto`` (default) -- numba if it imports, numpy otherwise
* ``numba``          -- force numba, raise if unavailable
* ``numpy``          -- force the pure-numpy path

Both paths compute the same quantities; ``benchmarks/bench_kernels.py``
compares their speed and ``tests/test_kernels.py`` their agreement.
"""

import os

_ENV_VAR = "DYN_NN_LAB_BACKEND"


def _resolve():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        if choice == "numba":
            raise RuntimeError(
                f"{_ENV_VAR}=numba requested but numba is not installed"
            )
        return "numpy"


ACTIVE = _resolve()
HAS_NUMBA = ACTIVE == "numba"
