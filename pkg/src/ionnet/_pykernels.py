"""Pure-numpy implementations of the hot loops (fallback backend)."""

import numpy as np


def effect_probabilities(effects, rho):
    """``p[k] = Re tr(E_k rho)`` for a stack of Hermitian effects."""
    return np.einsum("kab,ba->k", effects, rho, optimize=True).real.copy()


def weighted_effect_sum(effects, weights):
    """``sum_k w_k E_k``."""
    return np.tensordot(np.asarray(weights, dtype=float), effects, axes=1)


def log_likelihood(counts, probs, floor):
    p = np.maximum(probs, floor)
    mask = counts > 0
    return float(np.dot(counts[mask], np.log(p[mask])))


def tally(setting_ids, outcome_ids, n_settings, n_outcomes):
    flat = np.asarray(setting_ids, dtype=np.int64) * n_outcomes + np.asarray(outcome_ids, dtype=np.int64)
    return np.bincount(flat, minlength=n_settings * n_outcomes).reshape(n_settings, n_outcomes)


def parity_products(bits):
    """Product of ``(-1)**b`` along each row of a 0/1 array."""
    bits = np.asarray(bits, dtype=np.int64)
    return (1 - 2 * (bits.sum(axis=1) % 2)).astype(np.int64)
