"""Optional numba acceleration.

Hot kernels are plain python functions over numpy arrays; with numba available
(and not disabled) they get compiled with ``@njit``.  Because every random
variate is produced from ``Generator.random()`` uniforms and numba's Generator
support taps the same PCG64 bit stream as numpy, both backends consume the
stream identically and produce byte-identical results.

Set ``GJNEXACT_NO_JIT=1`` to force the pure-python path.
"""

import os


def _noop_jit(*args, **kwargs):
    """Decorator that compiles nothing."""
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _numba_available()
JIT_DISABLED = os.environ.get("GJNEXACT_NO_JIT", "").strip() not in ("", "0")
JIT_ENABLED = HAVE_NUMBA and not JIT_DISABLED

if JIT_ENABLED:
    from numba import njit
else:
    njit = _noop_jit

#: Human-readable backend tag, surfaced by the CLI.
BACKEND = "numba" if JIT_ENABLED else "python"
