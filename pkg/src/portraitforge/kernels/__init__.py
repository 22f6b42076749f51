"""Hot per-pixel kernels with a compiled core and a pure numpy fallback.

The compiled extension is preferred when importable; set EP_KERNELS to
``python`` or ``compiled`` to force one side (``compiled`` raises if the
extension is missing). Both backends are bit-for-bit interchangeable.
"""

from __future__ import annotations

import os

from . import _pure


def _load_backend():
    choice = os.environ.get("EP_KERNELS", "auto").strip().lower()
    if choice in ("python", "py", "pure"):
        return _pure
    try:
        from . import _core
    except ImportError:
        if choice in ("compiled", "cy", "c"):
            raise ImportError(
                "EP_KERNELS=compiled but the portraitforge.kernels._core "
                "extension is not built; run `pip install -e .` with Cython "
                "and a C compiler available"
            )
        return _pure
    return _core


def get_backend(name: str):
    """Return a specific kernel module by name, for tests and benchmarks."""
    if name == "python":
        return _pure
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = _load_backend()

warp_bilinear = _impl.warp_bilinear
box_blur = _impl.box_blur
disc_dilate = _impl.disc_dilate
noise_field = _impl.noise_field


def backend_name() -> str:
    return _impl.BACKEND


def compiled_available() -> bool:
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return False
    return True
