"""Selects the compiled (numba) or pure-numpy simulation path.

Set ``AOI_STARVE_NUMBA=0`` to force the numpy fallback.  Both paths consume
the same counter-based random streams and produce bit-identical results.
"""

import importlib.util
import os

_OFF = {"0", "false", "no", "off"}


def numba_available() -> bool:
    return importlib.util.find_spec("numba") is not None


def use_numba() -> bool:
    flag = os.environ.get("AOI_STARVE_NUMBA", "1").strip().lower()
    return flag not in _OFF and numba_available()


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"
