"""Dynamic-network edge partition models with Gibbs samplers (HSEPM and G-HSEPM)."""
from __future__ import annotations

from hsepm._backend import backend_name
from hsepm.distributions import RngStream

__version__ = "0.1.0"

__all__ = ["RngStream", "backend_name", "__version__"]
