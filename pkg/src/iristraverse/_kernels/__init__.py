"""Hot kernels: compiled Cython core with a pure-numpy fallback.

The compiled module is picked at import when it was built; otherwise the
numpy versions are used. :func:`use_backend` switches explicitly (tests and
the benchmark exercise both).
"""
from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = (
    "conv2d_forward",
    "conv2d_grad_input",
    "conv2d_grad_kernel",
    "bilinear_forward",
    "bilinear_backward",
    "shifted_disagreement",
    "harmonic_forward",
    "harmonic_backward",
)

_active = _ckernels if _ckernels is not None else _pykernels


def available_backends():
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def backend():
    return _active.BACKEND


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels; returns the previous name."""
    global _active
    previous = _active.BACKEND
    if name == "python":
        _active = _pykernels
    elif name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return previous


def __getattr__(name):
    if name in _NAMES:
        return getattr(_active, name)
    raise AttributeError(name)
