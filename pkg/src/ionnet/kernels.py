"""Hot-loop backend, compiled when available.

Set ``IONNET_KERNELS=python`` to force the numpy fallback.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("IONNET_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def effect_probabilities(effects, rho):
    return _impl.effect_probabilities(np.ascontiguousarray(effects, dtype=complex),
                                      np.ascontiguousarray(rho, dtype=complex))


def weighted_effect_sum(effects, weights):
    return _impl.weighted_effect_sum(np.ascontiguousarray(effects, dtype=complex),
                                     np.ascontiguousarray(weights, dtype=float))


def log_likelihood(counts, probs, floor=1e-12):
    return _impl.log_likelihood(np.ascontiguousarray(counts, dtype=float),
                                np.ascontiguousarray(probs, dtype=float), float(floor))


def tally(setting_ids, outcome_ids, n_settings, n_outcomes):
    return _impl.tally(np.ascontiguousarray(setting_ids, dtype=np.int64),
                       np.ascontiguousarray(outcome_ids, dtype=np.int64),
                       int(n_settings), int(n_outcomes))


def parity_products(bits):
    bits = np.ascontiguousarray(np.atleast_2d(bits), dtype=np.int64)
    return _impl.parity_products(bits)
