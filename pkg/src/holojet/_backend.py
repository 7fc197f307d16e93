"""Kernel selection.

The Cython kernel is used when it has been built; setting the environment
variable ``HOLOJET_PURE_PYTHON=1`` forces the generated-Python fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

NAME = "python"
_compiled = None

if os.environ.get("HOLOJET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined, no-redef]

        NAME = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None


def make_runner(prog, backend: str | None = None):
    """Return ``runner(X, Y) -> bad_row`` for a lowered program."""
    which = backend or NAME
    if which == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not built")
        k = _compiled
        args = (prog.op, prog.a1, prog.a2, prog.par, prog.consts, prog.n_in, prog.outs)

        def runner(X, Y) -> int:
            return k.run(*args, X, Y)

        return runner
    return _kernels_py.make_runner(prog)


def available() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])
