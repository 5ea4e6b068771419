"""Select the per-gene fitting kernel: compiled extension or numpy fallback.

Set ``RUVGAMMA_FORCE_PYTHON=1`` to force the fallback (useful for timing
comparisons and for debugging). ``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import os

from . import _gammafit_py

if os.environ.get("RUVGAMMA_FORCE_PYTHON", "") == "1":
    _impl = _gammafit_py
else:
    try:
        from . import _gammafit as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _gammafit_py

fit_genes = _impl.fit_genes
BACKEND: str = _impl.BACKEND
