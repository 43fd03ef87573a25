"""Simulator and analysis tools for a two-node trapped-ion quantum network."""

__version__ = "0.1.0"

from . import device, fitstats, kernels, netsim, proc, qcore, tomo  # noqa: E402

__all__ = ["__version__", "device", "fitstats", "kernels", "netsim", "proc", "qcore", "tomo"]
