"""numba switch.

Hot kernels are compiled with numba when it is importable and the
``TWEETPOLL_NUMBA`` environment variable is not set to ``0``.  Otherwise the
pure-numpy twins in :mod:`tweetpoll.kernels` are used.
"""
import os

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the system TBB is too old for numba; avoid the warning on first prange
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


def _flag_enabled():
    value = os.environ.get("TWEETPOLL_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and _flag_enabled()


def set_threads(n):
    """Bound numba's thread pool; a no-op on the numpy path."""
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
