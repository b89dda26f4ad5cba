"""Formula evaluation kernel: compiled core with pure-Python fallback.

``eval_program`` comes from the Cython extension when it was built, otherwise
from the pure interpreter; ``BACKEND`` names the active one.  Both consume
the representation produced by :mod:`cutoffcert.kernel.compile`.
"""

from .compile import (  # noqa: F401
    INT_SORT_ID, KernelUnsupported, Program, StructBuf, SymTable,
    compile_formula,
)

try:
    from cutoffcert._evalcore import BACKEND, eval_program  # type: ignore
except ImportError:  # extension not built; interpret in Python
    from .pure import BACKEND, eval_program  # noqa: F401

from . import pure  # noqa: F401  (always importable, for benchmarks/tests)
