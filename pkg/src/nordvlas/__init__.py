"""Particle simulator and verification suite for the Nordström-Vlasov system."""

__version__ = "0.1.0"

import os as _os

# the bundled TBB is too old for numba; workqueue is always available
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
