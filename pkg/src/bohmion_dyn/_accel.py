"""Numba dispatch.

Hot kernels are written twice: an ``@njit`` loop version and a vectorised
numpy version. Set ``BOHMION_DYN_NO_NUMBA=1`` to force the numpy path (also
used automatically when numba cannot be imported).
"""
import os

# The parallel kernels split work into fixed chunks, so the result does not
# depend on the threading layer; workqueue is always available and quiet.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

_DISABLED = os.environ.get("BOHMION_DYN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


if numba is not None:
    prange = numba.prange
else:  # pragma: no cover
    prange = range

_threads = 1


def set_threads(n: int) -> None:
    """Set the worker count for data-parallel kernels (1 = verification mode)."""
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)
    # one thread means the serial kernels; do not start a threading layer
    if numba is not None and USE_NUMBA and _threads > 1:
        numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))


def get_threads() -> int:
    return _threads


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
