"""Full and partial state tomography.

Full tomography draws, for every shot, one of six single-qubit pre-rotations
per qubit (identity listed twice so each axis gets equal weight), measures
in the computational basis and reconstructs the state by diluted iterative
maximum likelihood with readout-error-dressed POVMs.

Partial tomography estimates populations ``P`` and the parity fringe
contrast ``C`` and reports ``F = (P + C) / 2``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import fitstats, kernels, qcore
from .device import ReadoutErrorModel, rotation
from .qcore import DensityMatrix

log = logging.getLogger(__name__)

ROTATION_NAMES = ("I", "I", "X+", "Y+", "X-", "Y-")
ROTATIONS = (
    qcore.I2,
    qcore.I2,
    rotation(0.0, np.pi / 2),
    rotation(np.pi / 2, np.pi / 2),
    rotation(0.0, -np.pi / 2),
    rotation(np.pi / 2, -np.pi / 2),
)
PROB_FLOOR = 1e-12


class IncompleteDataError(ValueError):
    """Measurement settings do not determine the state."""


def parity_rotation(phi: float) -> np.ndarray:
    """Pre-rotation after which outcome 0 is the +1 eigenstate of ``cos(phi) X + sin(phi) Y``."""
    return rotation(phi - np.pi / 2, np.pi / 2)


@dataclass(frozen=True)
class MeasurementSetting:
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 or i >= len(ROTATIONS) for i in idx):
            raise ValueError(f"rotation index out of range in {idx}")
        object.__setattr__(self, "indices", idx)

    def unitaries(self) -> list[np.ndarray]:
        return [ROTATIONS[i] for i in self.indices]

    @property
    def canonical(self) -> tuple:
        """Indices with the duplicate identity folded onto index 0."""
        return tuple(0 if i == 1 else i for i in self.indices)


def generate_settings(n_qubits: int, n_shots: int, rng) -> list[MeasurementSetting]:
    if n_shots <= 0:
        raise ValueError("n_shots must be positive")
    draws = rng.integers(0, len(ROTATIONS), size=(n_shots, n_qubits))
    return [MeasurementSetting(tuple(row)) for row in draws]


def _single_povm(u: np.ndarray, ro: ReadoutErrorModel) -> tuple[np.ndarray, np.ndarray]:
    p0 = u.conj().T @ np.diag([1, 0]).astype(complex) @ u
    p1 = u.conj().T @ np.diag([0, 1]).astype(complex) @ u
    m0 = (1 - ro.eps0) * p0 + ro.eps1 * p1
    m1 = (1 - ro.eps1) * p1 + ro.eps0 * p0
    return m0, m1


def build_povm_from_unitaries(unitaries: Sequence[np.ndarray],
                              readout: Sequence[ReadoutErrorModel]) -> list[tuple[int, np.ndarray]]:
    singles = [_single_povm(u, ro) for u, ro in zip(unitaries, readout)]
    out = []
    for j, bits in enumerate(itertools.product((0, 1), repeat=len(singles))):
        out.append((j, qcore.tensor(*[s[b] for s, b in zip(singles, bits)])))
    return out


def build_povm(setting: MeasurementSetting, readout: Sequence[ReadoutErrorModel]) -> list[tuple[int, np.ndarray]]:
    """Readout-dressed POVM ``[(outcome, M_ij)]``; outcome bits are qubit-0-first."""
    if len(readout) != len(setting.indices):
        raise ValueError("one readout model per qubit required")
    return build_povm_from_unitaries(setting.unitaries(), readout)


def _povm_stack(settings: Sequence[tuple], readout) -> np.ndarray:
    """Effects for many settings at once, shape (S, 2^n, d, d)."""
    n = len(readout)
    d = 2**n
    conf = np.ones((1, 1))
    for ro in readout:
        conf = np.kron(conf, ro.confusion())  # [reported, true]
    out = np.empty((len(settings), d, d, d), dtype=complex)
    for s, idx in enumerate(settings):
        u = qcore.tensor(*[ROTATIONS[i] for i in idx])
        # E_j = U^dag diag(conf[j, :]) U
        out[s] = np.einsum("ta,jt,tb->jab", u.conj(), conf, u)
    return out


@dataclass
class TomographyDataset:
    """Outcome counts keyed by setting (tuple of rotation indices)."""

    counts: dict
    readout: list

    def __post_init__(self):
        n = len(self.readout)
        for k, v in self.counts.items():
            v = np.asarray(v, dtype=np.int64)
            if v.shape != (2**n,) or (v < 0).any():
                raise ValueError(f"bad counts for setting {k}")
            if len(k) != n:
                raise ValueError(f"setting {k} does not match {n} qubits")
            self.counts[k] = v

    @property
    def n_qubits(self) -> int:
        return len(self.readout)

    @property
    def total_shots(self) -> int:
        return int(sum(v.sum() for v in self.counts.values()))

    @classmethod
    def from_shots(cls, settings, outcomes, readout) -> "TomographyDataset":
        n = len(readout)
        counts: dict = {}
        for s, bits in zip(settings, outcomes):
            key = s.indices if isinstance(s, MeasurementSetting) else tuple(s)
            j = int("".join(str(int(b)) for b in bits), 2) if n else 0
            counts.setdefault(key, np.zeros(2**n, dtype=np.int64))[j] += 1
        return cls(counts, list(readout))

    def merged(self) -> dict:
        """Counts with duplicate-identity settings combined."""
        out: dict = {}
        for k, v in self.counts.items():
            key = MeasurementSetting(k).canonical
            out[key] = out.get(key, 0) + v
        return out

    def effects_and_counts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        merged = self.merged()
        keys = sorted(merged)
        stack = _povm_stack(keys, self.readout)
        counts = np.array([merged[k] for k in keys], dtype=float)
        return stack, counts, np.array(keys)

    def resample(self, rng) -> "TomographyDataset":
        """Multinomial resample of each setting's outcomes (shot-level bootstrap)."""
        new = {}
        for k, v in self.counts.items():
            n = int(v.sum())
            new[k] = rng.multinomial(n, v / n) if n else v.copy()
        return TomographyDataset(new, list(self.readout))


@dataclass
class ReconstructionResult:
    rho_hat: DensityMatrix
    log_likelihood: list
    iterations: int
    converged: bool
    clamped: int = 0
    fidelities: dict = field(default_factory=dict)
    bootstrap_ci: dict = field(default_factory=dict)


def _check_complete(effects: np.ndarray, dim: int) -> None:
    flat = effects.reshape(-1, dim * dim)
    if np.linalg.matrix_rank(flat, tol=1e-8) < dim * dim:
        raise IncompleteDataError("measurement settings are not informationally complete")


def diluted_mle(effects: np.ndarray, counts: np.ndarray, rho0: np.ndarray, *,
                lam: float = 1.0, tol: float = 1e-10, max_iter: int = 2000,
                tp_input_dim: int | None = None, check_monotone: bool = True):
    """Diluted iterative likelihood maximisation over a stack of effects.

    Returns ``(rho, loglik_trace, iterations, converged, clamped)``.

    ``tp_input_dim`` switches to the trace-preserving Choi-matrix update
    (partial trace over the output factor normalised to the identity).
    """
    dim = rho0.shape[0]
    keep = counts > 0
    e = np.ascontiguousarray(effects[keep])
    n = np.ascontiguousarray(counts[keep], dtype=float)
    n_total = n.sum()
    f = n / n_total
    eye = np.eye(dim)

    def loglik(r):
        p = kernels.effect_probabilities(e, r)
        return kernels.log_likelihood(n, p, PROB_FLOOR), p

    def normalise(m):
        m = (m + m.conj().T) / 2
        if tp_input_dim is None:
            return m / np.trace(m).real
        d_in = tp_input_dim
        d_out = dim // d_in
        red = np.einsum("iaja->ij", m.reshape(d_in, d_out, d_in, d_out))
        w, v = np.linalg.eigh((red + red.conj().T) / 2)
        inv_sqrt = (v / np.sqrt(np.maximum(w, 1e-300))) @ v.conj().T
        lam_inv = np.kron(inv_sqrt, np.eye(d_out))
        m = lam_inv @ m @ lam_inv.conj().T
        return (m + m.conj().T) / 2

    rho = rho0.astype(complex)
    ll, p = loglik(rho)
    trace = [ll]
    clamped = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        clamped += int(np.count_nonzero(p < PROB_FLOOR))
        r = kernels.weighted_effect_sum(e, f / np.maximum(p, PROB_FLOOR))
        step = lam
        while True:
            a = eye + step * r
            cand = normalise(a @ rho @ a.conj().T)
            ll_new, p_new = loglik(cand)
            if ll_new >= ll or step < 1e-8:
                break
            step /= 2
        if ll_new < ll:
            # no ascent direction left at machine precision
            converged = True
            break
        gain = ll_new - ll
        rho, ll, p = cand, ll_new, p_new
        trace.append(ll)
        if check_monotone and trace[-1] < trace[-2]:
            raise AssertionError("log-likelihood decreased")
        if gain < tol:
            converged = True
            break
    if clamped:
        log.warning("%d zero-probability outcomes with nonzero counts were regularised", clamped)
    return rho, trace, it, converged, clamped


def mle_reconstruct(data: TomographyDataset, *, lam: float = 1.0, tol: float = 1e-10,
                    max_iter: int = 2000, labels: Sequence = ()) -> ReconstructionResult:
    effects, counts, _ = data.effects_and_counts()
    n = data.n_qubits
    d = 2**n
    flat_e = effects.reshape(-1, d, d)
    flat_n = counts.reshape(-1)
    _check_complete(flat_e, d)
    rho, trace, it, conv, clamped = diluted_mle(flat_e, flat_n, np.eye(d) / d, lam=lam, tol=tol, max_iter=max_iter)
    w, v = np.linalg.eigh(rho)
    rho = (v * np.maximum(w, 0)) @ v.conj().T
    rho /= np.trace(rho).real
    return ReconstructionResult(DensityMatrix(rho, tuple(labels)), trace, it, conv, clamped)


# -- fidelities ---------------------------------------------------------------


def _euler(a, b, c) -> np.ndarray:
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    ry = np.array([[np.cos(b / 2), -np.sin(b / 2)], [np.sin(b / 2), np.cos(b / 2)]])
    return rz(a) @ ry @ rz(c)


def bipartite_entanglement_fidelity(rho, restarts: int = 20, seed: int = 0) -> tuple[float, bool]:
    """Max over local unitaries of the fidelity to ``|Phi+>``; returns (value, converged)."""
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if m.shape != (4, 4):
        raise qcore.DimensionError("bipartite fidelity needs a two-qubit state")
    phi = qcore.make_target_state(2).amplitudes

    def neg_f(x):
        u = np.kron(_euler(*x[:3]), _euler(*x[3:]))
        v = u.conj().T @ phi
        return -np.real(v.conj() @ m @ v)

    rng = np.random.default_rng(seed)
    best, ok = np.inf, False
    starts = [np.zeros(6)] + [rng.uniform(-np.pi, np.pi, 6) for _ in range(restarts - 1)]
    for x0 in starts:
        res = minimize(neg_f, x0, method="BFGS")
        if res.fun < best:
            best, ok = res.fun, bool(res.success)
    return float(-best), ok


def ghz_entanglement_fidelity(rho) -> float:
    """Fidelity to the GHZ state maximised over local Z rotations (closed form)."""
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    last = m.shape[0] - 1
    return float(np.real(m[0, 0] + m[last, last]) / 2 + abs(m[0, last]))


def entanglement_fidelity(rho, kind: str = "auto") -> float:
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    n = qcore.n_qubits_of(m.shape[0])
    if kind == "auto":
        kind = "bipartite" if n == 2 else "ghz"
    if kind == "bipartite":
        return bipartite_entanglement_fidelity(m)[0]
    if kind == "ghz":
        return ghz_entanglement_fidelity(m)
    raise ValueError(f"unknown fidelity kind {kind!r}")


def fully_entangled_fraction_bell_diagonal(rho) -> float:
    """Largest Bell-state weight; equals the entanglement fidelity for Bell-diagonal states."""
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    s = 1 / np.sqrt(2)
    bells = np.array([[s, 0, 0, s], [s, 0, 0, -s], [0, s, s, 0], [0, s, -s, 0]], dtype=complex)
    return float(max(np.real(b.conj() @ m @ b) for b in bells))


# -- partial tomography -------------------------------------------------------


@dataclass
class ParityPopulationEstimate:
    P: float
    P_err: float
    C: float
    C_err: float
    varphi: float
    F: float
    F_err: float
    phases: np.ndarray
    expectations: np.ndarray
    errors: np.ndarray
    fringe: fitstats.FringeFit | None = None


def population_from_bits(bits: np.ndarray) -> tuple[float, float]:
    bits = np.atleast_2d(bits)
    same = np.all(bits == bits[:, :1], axis=1)
    n = len(same)
    p = float(same.mean())
    return p, float(np.sqrt(max(p * (1 - p), 1.0 / n) / n))


def parity_expectations(phases, bits) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    phases = np.asarray(phases, dtype=float)
    par = kernels.parity_products(bits)
    grid = np.unique(phases)
    means = np.empty(len(grid))
    errs = np.empty(len(grid))
    for k, ph in enumerate(grid):
        sel = par[phases == ph]
        m = sel.mean()
        means[k] = m
        errs[k] = np.sqrt(max(1 - m * m, 1.0 / len(sel)) / len(sel))
    return grid, means, errs


def estimate_parity_population(pop_bits, parity_phases, parity_bits, n_qubits: int | None = None) -> ParityPopulationEstimate:
    """Population/parity estimate from raw outcome bits.

    ``pop_bits`` are computational-basis shots; ``parity_phases[k]`` is the
    analysis phase of parity shot ``parity_bits[k]``.
    """
    pop_bits = np.atleast_2d(np.asarray(pop_bits))
    parity_bits = np.atleast_2d(np.asarray(parity_bits))
    n = n_qubits or parity_bits.shape[1]
    grid, means, errs = parity_expectations(parity_phases, parity_bits)
    if len(grid) < 2 * n + 1:
        raise ValueError(f"parity scan needs at least {2 * n + 1} distinct phases, got {len(grid)}")
    fit = fitstats.fit_parity_fringe(grid, means, errs, n)
    P, P_err = population_from_bits(pop_bits)
    F = (P + fit.C) / 2
    F_err = 0.5 * np.hypot(P_err, fit.C_err)
    return ParityPopulationEstimate(P, P_err, fit.C, fit.C_err, fit.varphi, F, F_err,
                                    grid, means, errs, fit)


def pst_from_records(records) -> ParityPopulationEstimate:
    """Partial-tomography estimate from shot records (``phase`` None = population shot)."""
    pop = [r.outcomes for r in records if r.phase is None]
    par = [r for r in records if r.phase is not None]
    if not pop or not par:
        raise ValueError("records need both population and parity shots")
    return estimate_parity_population(np.array(pop), [r.phase for r in par],
                                      np.array([r.outcomes for r in par]))


def dataset_from_records(records, readout: Sequence[ReadoutErrorModel]) -> TomographyDataset:
    rows = [r for r in records if r.phase is None and r.setting is not None]
    return TomographyDataset.from_shots([tuple(r.setting) for r in rows],
                                        [r.outcomes for r in rows], readout)


def bootstrap_fidelity(data: TomographyDataset, rng, n_resamples: int = 200, kind: str = "auto",
                       max_iter: int = 500) -> tuple[float, tuple[float, float]]:
    vals = []
    for k in range(n_resamples):
        res = mle_reconstruct(data.resample(rng), max_iter=max_iter, tol=1e-8)
        vals.append(entanglement_fidelity(res.rho_hat, kind))
    vals = np.array(vals)
    return float(vals.std(ddof=1)), (float(np.percentile(vals, 2.5)), float(np.percentile(vals, 97.5)))
