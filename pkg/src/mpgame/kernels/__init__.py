"""Hot loops: Monte Carlo trial scoring and batched ML reconstruction.

Two interchangeable backends share one contract. The numba backend is used
when numba imports and ``MPGAME_DISABLE_NUMBA`` is unset (or "0"); otherwise
the vectorized numpy backend is used. Both backends can be loaded
explicitly with :func:`get_backend` for cross-checks and benchmarks.
"""
import importlib
import os

_FLAG = "MPGAME_DISABLE_NUMBA"


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _wanted() -> str:
    if os.environ.get(_FLAG, "0").strip().lower() not in ("", "0", "false", "no"):
        return "numpy"
    return "numba" if _numba_available() else "numpy"


def get_backend(name: str):
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    return importlib.import_module(f"._{name}", __name__)


BACKEND = _wanted()
_impl = get_backend(BACKEND)

outcome_weights = _impl.outcome_weights
score_trials = _impl.score_trials
apg_mle_batch = _impl.apg_mle_batch

__all__ = ["BACKEND", "get_backend", "outcome_weights", "score_trials", "apg_mle_batch"]
