"""Thread/process caps taken from the ``GFK_THREADS`` environment variable."""
import os

ENV_VAR = "GFK_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "BLIS_NUM_THREADS")


def thread_cap():
    """Worker count allowed by ``GFK_THREADS`` (default: all CPUs)."""
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


def cap_blas_threads():
    """Export ``GFK_THREADS`` to the BLAS thread variables (unless already set).

    Only effective before numpy is first imported, which is why the package
    calls it on import.
    """
    raw = os.environ.get(ENV_VAR, "").strip()
    if raw.isdigit() and int(raw) > 0:
        for var in _BLAS_VARS:
            os.environ.setdefault(var, raw)
