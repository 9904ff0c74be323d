"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when present; set DMLM_PURE_PYTHON=1
to force the fallback. `BACKEND` records which one is active.
"""

import os

BACKEND = "python"

if os.environ.get("DMLM_PURE_PYTHON", "") != "1":
    try:
        from ._ckernels import bincount_rows, levenshtein, nearest_centroids

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._pykernels import bincount_rows, levenshtein, nearest_centroids

__all__ = ["BACKEND", "bincount_rows", "levenshtein", "nearest_centroids"]
