"""Synthetic tomography data shared by the test modules."""

import numpy as np

from ionnet import tomo


def simulate_counts(rho, readout, n_shots, rng):
    """Random-setting tomography counts for a known state."""
    n = len(readout)
    settings = tomo.generate_settings(n, n_shots, rng)
    per = {}
    for s in settings:
        per[s.indices] = per.get(s.indices, 0) + 1
    keys = sorted(per)
    stack = tomo._povm_stack(keys, readout)
    counts = {}
    for k, m in zip(keys, stack):
        p = np.clip(np.real(np.einsum("jab,ba->j", m, rho)), 0, None)
        counts[k] = rng.multinomial(per[k], p / p.sum())
    return tomo.TomographyDataset(counts, list(readout))


def werner(f_mix):
    from ionnet import qcore
    bell = qcore.make_target_state(2).projector()
    return (1 - f_mix) * bell + f_mix * np.eye(4) / 4
