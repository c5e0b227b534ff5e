"""Backend selection for the inner loops.

The compiled extension is used when it imports; setting the environment
variable ``MJPGIBBS_KERNELS=python`` forces the NumPy fallback.
"""
import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if os.environ.get("MJPGIBBS_KERNELS", "").lower() == "python" or compiled_backend is None:
    active = _pykernels
else:
    active = compiled_backend


def available():
    """Names of the importable backends."""
    names = ["python"]
    if compiled_backend is not None:
        names.insert(0, "cython")
    return names


def get(name=None):
    if name is None:
        return active
    if name == "python":
        return _pykernels
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown kernel backend {name!r}")


def use(name):
    """Switch the process-wide backend (mainly for benchmarks and tests)."""
    global active
    active = get(name)
    return active
