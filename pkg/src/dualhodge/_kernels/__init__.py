"""Numeric kernel backend selection.

Two interchangeable implementations of the hot kernels exist: a compiled
Cython extension (``_cyk``) and a pure-numpy fallback (``pyk``).  The
compiled one is used when importable; set ``DUALHODGE_KERNELS=python``
or ``=cython`` to force a choice.  ``backend_name()`` reports the active
one, and :mod:`dualhodge.cli`'s ``bench`` subcommand compares the two.
"""

import os

from . import pyk

_choice = os.environ.get("DUALHODGE_KERNELS", "").lower()

if _choice == "python":
    _impl = pyk
else:
    try:
        from . import _cyk as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "DUALHODGE_KERNELS=cython but the compiled extension is "
                "not available; reinstall with a C compiler present")
        _impl = pyk


def backend_name() -> str:
    return "cython" if _impl is not pyk else "python"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (active backend if None)."""
    if name in (None, ""):
        return _impl
    if name == "python":
        return pyk
    if name == "cython":
        from . import _cyk  # noqa: F811
        return _cyk
    raise ValueError(f"unknown kernel backend {name!r}")


coo_to_csr = _impl.coo_to_csr
csr_matvec = _impl.csr_matvec
csr_matmat = _impl.csr_matmat
dual_cell_blocks = _impl.dual_cell_blocks
