"""Backend selection for the compiled kernels.

Set ``HAMMOCK_DISABLE_NUMBA=1`` (or run without numba installed) to force the
pure-numpy code paths.  The flag is read once at import time.
"""
import functools
import os

_FLAG = os.environ.get("HAMMOCK_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

USE_NUMBA = nb is not None and _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA:
    # TBB in this image is too old for numba; workqueue is always available
    nb.config.THREADING_LAYER = "workqueue"
    njit = functools.partial(nb.njit, cache=True, nogil=True)
else:

    def njit(*args, **kwargs):
        # bare @njit or @njit(...) both become no-ops
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int) -> None:
    """Apply a thread count to numba (no-op on the numpy backend)."""
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if USE_NUMBA:
        nb.set_num_threads(min(n, nb.config.NUMBA_NUM_THREADS))


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("HAMMOCK_THREADS")
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"HAMMOCK_THREADS must be an integer, got {raw!r}") from None
