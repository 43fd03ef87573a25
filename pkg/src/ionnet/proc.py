"""Process tomography and network-to-auxiliary transfer metrics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels, qcore, tomo
from .device import TRANSFER_CORRECTION, PrepErrorModel, ReadoutErrorModel
from .qcore import Superoperator

TRANSFER_DIM = 2


def avg_gate_fidelity(s: Superoperator, u_ideal: np.ndarray) -> float:
    """Average gate fidelity of ``s`` to the unitary ``u_ideal``.

    ``F = (d + tr S_rel) / (d (d + 1))`` with ``S_rel = S_U^dag S``.
    """
    u_ideal = np.asarray(u_ideal, dtype=complex)
    d = u_ideal.shape[0]
    if s.dim_in != d or s.dim_out != d:
        raise qcore.DimensionError("superoperator and unitary dimensions differ")
    s_rel = qcore.unitary_superop(u_ideal).matrix.conj().T @ s.matrix
    return float(np.real(d + np.trace(s_rel)) / (d * (d + 1)))


@dataclass(frozen=True)
class TransferAnalysis:
    S_transfer: Superoperator
    F: float
    error_detected: bool
    p_detect: float = float("nan")
    mc_samples: int = 0
    F_bar: float = float("nan")
    F_bar_err: float = float("nan")
    p_bar: float = float("nan")
    p_bar_err: float = float("nan")
    ci: dict = field(default_factory=dict)


def _contract_transfer(s_iswap: Superoperator, tau0: np.ndarray, m_net: np.ndarray) -> np.ndarray:
    """Feed ``tau0`` into the auxiliary input, contract the network output with ``m_net``.

    ``s_iswap`` acts on (network, auxiliary) in that order. The result maps a
    vectorised network-qubit input to a vectorised auxiliary-qubit output.
    """
    # column-stacked 2-qubit superop, C-order axes:
    # (out bra N, out bra X, out ket N, out ket X, in bra N, in bra X, in ket N, in ket X)
    t = s_iswap.matrix.reshape([2] * 8)
    out = np.einsum("ijklmnop,ik,pn->jlmo", t, m_net, tau0)
    return out.reshape(4, 4)


def build_transfer_superop(s_iswap: Superoperator, prep: PrepErrorModel,
                           detect: ReadoutErrorModel | None = None) -> TransferAnalysis:
    """Network-to-auxiliary transfer process from a 2-qubit iSWAP superoperator.

    With ``detect`` given, the network output is contracted with the POVM
    element for reading ``|0>``, which yields the (non-trace-preserving)
    process conditioned on passing the error check.
    """
    if s_iswap.dim_in != 4 or s_iswap.dim_out != 4:
        raise qcore.DimensionError("iSWAP superoperator must act on two qubits")
    tau0 = prep.state()
    m_net = np.eye(2, dtype=complex) if detect is None else detect.povm()[0]
    core = _contract_transfer(s_iswap, tau0, m_net)
    s_corr = qcore.unitary_superop(TRANSFER_CORRECTION).matrix
    s_tr = Superoperator(s_corr @ core, TRANSFER_DIM, TRANSFER_DIM)
    d = TRANSFER_DIM
    f = float(np.real(d + np.trace(s_tr.matrix)) / (d * (d + 1)))
    p = float("nan")
    if detect is not None:
        # detection probability for the maximally mixed input (= Haar average)
        p = 1 - np.real(np.trace(qcore.superop_apply(s_tr, np.eye(2) / 2)))
    return TransferAnalysis(s_tr, f, detect is not None, p_detect=float(p))


def transfer_superop_by_action(channel: qcore.QuantumChannel, prep: PrepErrorModel,
                               detect: ReadoutErrorModel | None = None) -> Superoperator:
    """Same process built by acting on basis operators with Kraus operators.

    Independent of the vectorisation algebra in :func:`build_transfer_superop`.
    """
    m_net = np.eye(2) if detect is None else detect.povm()[0]
    cols = []
    for j in range(2):
        for i in range(2):
            e = np.zeros((2, 2), dtype=complex)
            e[i, j] = 1
            big = np.kron(e, prep.state())
            out = sum(k @ big @ k.conj().T for k in channel.kraus_ops)
            red = np.einsum("ab,bxay->xy", m_net, out.reshape(2, 2, 2, 2))
            red = TRANSFER_CORRECTION @ red @ TRANSFER_CORRECTION.conj().T
            cols.append(qcore.vectorize(red))
    return Superoperator(np.array(cols).T, 2, 2)


def monte_carlo_ed_metrics(analysis: TransferAnalysis, n_samples: int, rng) -> TransferAnalysis:
    """Haar-averaged fidelity and detection probability of an error-detected transfer.

    Each sample's fidelity is renormalised by its own acceptance probability
    before averaging.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 Haar samples")
    if not analysis.error_detected:
        raise ValueError("analysis was not built in error-detected mode")
    g = rng.standard_normal((n_samples, 2)) + 1j * rng.standard_normal((n_samples, 2))
    psi = g / np.linalg.norm(g, axis=1, keepdims=True)
    rho = np.einsum("ki,kj->kij", psi, psi.conj())
    vec = rho.transpose(0, 2, 1).reshape(n_samples, 4)  # column stacking
    out = (analysis.S_transfer.matrix @ vec.T).T.reshape(n_samples, 2, 2).transpose(0, 2, 1)
    tr = np.real(np.trace(out, axis1=1, axis2=2))
    overlap = np.real(np.einsum("ki,kij,kj->k", psi.conj(), out, psi))
    f = overlap / tr
    fbar, fbar_err = f.mean(), f.std(ddof=1) / np.sqrt(n_samples)
    pbar, pbar_err = 1 - tr.mean(), tr.std(ddof=1) / np.sqrt(n_samples)
    ci = {"F_bar": (fbar - 1.96 * fbar_err, fbar + 1.96 * fbar_err),
          "p_bar": (pbar - 1.96 * pbar_err, pbar + 1.96 * pbar_err)}
    return TransferAnalysis(analysis.S_transfer, analysis.F, True, analysis.p_detect, n_samples,
                            float(fbar), float(fbar_err), float(pbar), float(pbar_err), ci)


# -- process tomography -------------------------------------------------------

SHOTS_PER_PAIR = 25


def input_states(n_qubits: int) -> list[tuple[tuple, np.ndarray]]:
    """Input set induced by the tomographic rotations, ``U_i^dag |0>`` on each qubit."""
    singles = []
    for u in tomo.ROTATIONS:
        v = u.conj().T[:, 0]
        singles.append(np.outer(v, v.conj()))
    out = []
    for idx in itertools.product(range(len(singles)), repeat=n_qubits):
        out.append((idx, qcore.tensor(*[singles[i] for i in idx])))
    return out


@dataclass
class ProcessDataset:
    """Counts keyed by (input index tuple, setting index tuple)."""

    counts: dict
    readout: list

    def __post_init__(self):
        n = len(self.readout)
        for key, v in self.counts.items():
            v = np.asarray(v, dtype=np.int64)
            if v.shape != (2**n,) or (v < 0).any():
                raise ValueError(f"bad counts for {key}")
            self.counts[key] = v

    @property
    def n_qubits(self) -> int:
        return len(self.readout)

    @property
    def total_shots(self) -> int:
        return int(sum(v.sum() for v in self.counts.values()))

    def merged(self) -> dict:
        """Counts with the duplicate identity folded on both inputs and settings."""
        out: dict = {}
        for (inp, st), v in self.counts.items():
            key = (tomo.MeasurementSetting(inp).canonical, tomo.MeasurementSetting(st).canonical)
            out[key] = out.get(key, 0) + v
        return out

    def effects_and_counts(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_qubits
        singles = {idx: rho for idx, rho in input_states(n)}
        merged = self.merged()
        keys = sorted(merged)
        meas = tomo._povm_stack([k[1] for k in keys], self.readout)
        effects = np.empty((len(keys), 2**n, 4**n, 4**n), dtype=complex)
        for k, ((inp, _), m) in enumerate(zip(keys, meas)):
            rho_t = singles[tuple(inp)].T
            effects[k] = np.einsum("ab,jcd->jacbd", rho_t, m).reshape(len(m), 4**n, 4**n)
        counts = np.array([merged[k] for k in keys], dtype=float)
        return effects, counts


def simulate_process_data(channel: qcore.QuantumChannel, readout, rng,
                          shots_per_pair: int = SHOTS_PER_PAIR) -> ProcessDataset:
    """Sample the full input-by-setting layout for a few-qubit channel."""
    n = len(readout)
    ins = input_states(n)
    settings = list(itertools.product(range(len(tomo.ROTATIONS)), repeat=n))
    meas = tomo._povm_stack(settings, readout)
    counts = {}
    for idx, rho in ins:
        out = sum(k @ rho @ k.conj().T for k in channel.kraus_ops)
        for s, m in zip(settings, meas):
            p = np.clip(np.real(np.einsum("jab,ba->j", m, out)), 0, None)
            counts[(idx, s)] = rng.multinomial(shots_per_pair, p / p.sum())
    return ProcessDataset(counts, list(readout))


def reconstruct_process(data: ProcessDataset, *, trace_preserving: bool = True,
                        lam: float = 10.0, tol: float = 1e-6, max_iter: int = 3000) -> Superoperator:
    """Maximum-likelihood process estimate through its Choi matrix.

    The Choi matrix is treated as a state with effects ``rho_in^T (x) M``.
    With ``trace_preserving`` the update renormalises the partial trace over
    the output to the identity. Otherwise only complete positivity is imposed,
    plus unit outcome probability averaged over the recorded inputs.
    """
    n = data.n_qubits
    d = 2**n
    effects, counts = data.effects_and_counts()
    flat_e = effects.reshape(-1, d * d, d * d)
    flat_n = counts.reshape(-1)
    tomo._check_complete(flat_e, d * d)
    if trace_preserving:
        j, *_ = tomo.diluted_mle(flat_e, flat_n, np.eye(d * d) / d, lam=lam, tol=tol,
                                 max_iter=max_iter, tp_input_dim=d)
    else:
        # whiten by the shot-weighted effect sum so the effects resolve the identity
        pair_shots = np.repeat(counts.sum(axis=1), counts.shape[1])
        g = kernels.weighted_effect_sum(flat_e, pair_shots / flat_n.sum())
        w, v = np.linalg.eigh((g + g.conj().T) / 2)
        g_mhalf = (v / np.sqrt(w)) @ v.conj().T
        white = np.einsum("ab,kbc,cd->kad", g_mhalf, flat_e, g_mhalf)
        rho, *_ = tomo.diluted_mle(white, flat_n, np.eye(d * d) / d**2, lam=lam, tol=tol,
                                   max_iter=max_iter)
        j = g_mhalf @ rho @ g_mhalf
    return qcore.choi_to_superop(j, d)


def choi_distance(a: Superoperator, b: Superoperator) -> float:
    """Trace distance between normalised Choi matrices (a diamond-norm proxy)."""
    ja = qcore.superop_to_choi(a) / a.dim_in
    jb = qcore.superop_to_choi(b) / b.dim_in
    return float(0.5 * np.abs(np.linalg.eigvalsh(ja - jb)).sum())


def haar_quadrature_ed_metrics(analysis: TransferAnalysis, n_theta: int = 48, n_phi: int = 48) -> tuple[float, float]:
    """Deterministic Bloch-sphere quadrature of the Haar averages ``(F_bar, p_bar)``.

    Gauss-Legendre nodes in ``cos(theta)`` and a uniform grid in ``phi``; for
    smooth integrands this converges far faster than sampling.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    th = np.arccos(x)
    psi = np.stack([np.repeat(np.cos(th / 2), n_phi).astype(complex),
                    np.outer(np.sin(th / 2), np.exp(1j * phi)).ravel()], axis=1)
    wts = np.repeat(w / 2, n_phi) / n_phi
    rho = np.einsum("ki,kj->kij", psi, psi.conj())
    vec = rho.transpose(0, 2, 1).reshape(len(psi), 4)
    out = (analysis.S_transfer.matrix @ vec.T).T.reshape(len(psi), 2, 2).transpose(0, 2, 1)
    tr = np.real(np.trace(out, axis1=1, axis2=2))
    overlap = np.real(np.einsum("ki,kij,kj->k", psi.conj(), out, psi))
    return float(np.sum(wts * overlap / tr)), float(1 - np.sum(wts * tr))
