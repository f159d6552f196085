"""Backend selection for the hot loops.

The compiled extension is used when it imports; ``INFLUENCE_LAB_PURE=1``
forces the numpy fallback.  ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("INFLUENCE_LAB_PURE", "") not in ("", "0"):
    impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        impl = _pykernels
        BACKEND = "python"

cholesky_factor = impl.cholesky_factor
cholesky_solve_factored = impl.cholesky_solve_factored
jacobi_eigen = impl.jacobi_eigen
sgd_rank1 = impl.sgd_rank1
sgd_dense = impl.sgd_dense
svrg_epoch_rank1 = impl.svrg_epoch_rank1
svrg_epoch_dense = impl.svrg_epoch_dense
