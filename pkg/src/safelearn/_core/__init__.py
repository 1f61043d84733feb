"""Kernel backend selection.

The hot per-step kernels exist twice: a compiled Cython extension
(``_ckernels``) and a pure-numpy fallback (``py_kernels``). The compiled
backend is preferred when importable; set ``SAFELEARN_BACKEND=python`` or
``SAFELEARN_BACKEND=cython`` to force one (forcing cython raises if the
extension was not built).
"""

import os

_requested = os.environ.get("SAFELEARN_BACKEND", "auto").strip().lower()

if _requested in ("auto", "", "cython", "c"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested in ("cython", "c"):
            raise ImportError(
                "SAFELEARN_BACKEND=cython requested but the compiled kernel "
                "extension is not available; build it with "
                "`pip install -e .` or `python setup.py build_ext --inplace`"
            )
        from . import py_kernels as _impl
        BACKEND = "python"
elif _requested in ("python", "py", "numpy"):
    from . import py_kernels as _impl
    BACKEND = "python"
else:
    raise ValueError(
        f"unrecognized SAFELEARN_BACKEND={_requested!r}; "
        "expected 'auto', 'cython' or 'python'"
    )

QP_FEASIBLE = 0
QP_INFEASIBLE = 1
QP_ITER_LIMIT = 2

chol_rank1_update = _impl.chol_rank1_update
chol_solve = _impl.chol_solve
lower_solve = _impl.lower_solve
estimator_absorb = _impl.estimator_absorb
zeta_max = _impl.zeta_max
nnls = _impl.nnls
qp_project = _impl.qp_project
