"""Backend selection for the numeric kernels.

``msk._core`` is written once and loaded twice:

- ``core_py``: the plain interpreted module. Slow, dependency-free, and the
  only instance that accepts object arrays of dual numbers (sensitivities).
- a compiled twin, loaded with the module global ``_MSK_JIT`` set so every
  kernel is wrapped in ``numba.njit(cache=True)``.

``active`` is what the public API dispatches to. Set ``MSK_PURE_NUMPY=1`` to
force the interpreted fallback (or it is chosen automatically when numba is
missing). Both instances execute identical source, so results are
bitwise-equal across backends.
"""

import importlib.util
import os
import pathlib
import sys

_CORE_PATH = pathlib.Path(__file__).with_name("_core.py")


def _load(name, jit):
    spec = importlib.util.spec_from_file_location(name, _CORE_PATH)
    mod = importlib.util.module_from_spec(spec)
    mod._MSK_JIT = jit
    sys.modules[name] = mod
    spec.loader.exec_module(mod)
    return mod


core_py = _load("msk._core_py", False)

PURE = os.environ.get("MSK_PURE_NUMPY", "").strip() not in ("", "0")

HAS_NUMBA = False
if not PURE:
    try:
        import numba  # noqa: F401
        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False

_core_nb = None
if HAS_NUMBA:
    _core_nb = _load("msk._core_nb", True)

active = _core_nb if _core_nb is not None else core_py


def compiled():
    """The numba-compiled core, loading it on demand (benchmarks)."""
    global _core_nb
    if _core_nb is None:
        import numba  # noqa: F401
        _core_nb = _load("msk._core_nb", True)
    return _core_nb


def backend_name():
    return "numba" if active is not core_py else "numpy"
