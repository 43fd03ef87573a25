"""Dense linear algebra for few-qubit states and channels.

Conventions
-----------
Qubit 0 is the most significant bit of a basis index, so ``tensor(a, b)``
places ``a``'s qubits before ``b``'s. Superoperators act on column-stacked
vectorised operators, ``vec(A)[i + d*j] = A[i, j]``, under which
``vec(K rho K^dag) = (conj(K) kron K) vec(rho)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = -1e-9
TP_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)


class DimensionError(ValueError):
    pass


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, DensityMatrix):
        return a.data
    return np.asarray(a, dtype=complex)


def n_qubits_of(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace positive semidefinite operator over labelled qubits.

    ``normalized=False`` marks the sub-normalised output of a
    non-trace-preserving channel; the trace check is skipped for those.
    """

    data: np.ndarray
    qubit_labels: tuple = ()
    normalized: bool = True
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DimensionError("density matrix must be square")
        n = n_qubits_of(data.shape[0])
        labels = tuple(self.qubit_labels) if self.qubit_labels else tuple(range(n))
        if len(labels) != n:
            raise DimensionError(f"{len(labels)} labels for {n} qubits")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "qubit_labels", labels)
        if self.check:
            self.validate()

    def validate(self) -> None:
        d = self.data
        if np.max(np.abs(d - d.conj().T)) > HERM_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(d).real
        if self.normalized and abs(tr - 1) > TRACE_TOL:
            raise ValueError(f"trace {tr!r} differs from 1")
        if np.linalg.eigvalsh(d).min() < PSD_TOL:
            raise ValueError("density matrix has negative eigenvalues")

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_qubits(self) -> int:
        return len(self.qubit_labels)

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def index_of(self, label) -> int:
        return self.qubit_labels.index(label)

    @classmethod
    def from_pure(cls, psi: "PureState | np.ndarray", labels: Sequence = ()) -> "DensityMatrix":
        v = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
        return cls(np.outer(v, v.conj()), tuple(labels))

    @classmethod
    def maximally_mixed(cls, n: int, labels: Sequence = ()) -> "DensityMatrix":
        d = 2**n
        return cls(np.eye(d) / d, tuple(labels))

    def relabel(self, mapping: dict) -> "DensityMatrix":
        labels = tuple(mapping.get(q, q) for q in self.qubit_labels)
        return DensityMatrix(self.data, labels, self.normalized, check=False)

    def renormalized(self) -> "DensityMatrix":
        return DensityMatrix(self.data / self.trace(), self.qubit_labels, True, check=False)


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).ravel()
        if abs(np.linalg.norm(v) - 1) > 1e-12:
            raise ValueError("pure state amplitudes must have unit norm")
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True)
class QuantumChannel:
    """Completely positive map in operator-sum form."""

    kraus_ops: tuple
    trace_preserving: bool = True

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise DimensionError("Kraus operators differ in shape")
        object.__setattr__(self, "kraus_ops", ops)
        gram = sum(k.conj().T @ k for k in ops)
        eye = np.eye(shape[1])
        if self.trace_preserving:
            if np.max(np.abs(gram - eye)) > TP_TOL:
                raise ValueError("Kraus operators are not trace preserving")
        elif np.linalg.eigvalsh(eye - gram).min() < -TP_TOL:
            raise ValueError("Kraus operators are trace increasing")

    @property
    def dim_in(self) -> int:
        return self.kraus_ops[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.kraus_ops[0].shape[0]

    def then(self, other: "QuantumChannel") -> "QuantumChannel":
        """Channel applying ``self`` first, then ``other``."""
        ops = [b @ a for a in self.kraus_ops for b in other.kraus_ops]
        return QuantumChannel(tuple(ops), self.trace_preserving and other.trace_preserving)


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray
    dim_in: int = 0
    dim_out: int = 0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        din = self.dim_in or int(round(np.sqrt(m.shape[1])))
        dout = self.dim_out or int(round(np.sqrt(m.shape[0])))
        if m.shape != (dout * dout, din * din):
            raise DimensionError(f"superoperator shape {m.shape} inconsistent with dims")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim_in", din)
        object.__setattr__(self, "dim_out", dout)

    @property
    def dim(self) -> int:
        return self.dim_in

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        vec_i = vectorize(np.eye(self.dim_out))
        return bool(np.max(np.abs(vec_i.conj() @ self.matrix - vectorize(np.eye(self.dim_in)))) < tol)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix @ other.matrix, other.dim_in, self.dim_out)


def vectorize(a) -> np.ndarray:
    return np.asarray(_as_matrix(a)).reshape(-1, order="F")


def unvectorize(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    d = dim or int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


def tensor(*ops) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, _as_matrix(op))
    return out


def tensor_states(*states: DensityMatrix) -> DensityMatrix:
    labels = tuple(q for s in states for q in s.qubit_labels)
    return DensityMatrix(tensor(*states), labels, check=False)


def _targets(rho: DensityMatrix, targets) -> list[int]:
    idx = []
    for t in targets:
        if isinstance(t, (int, np.integer)) and t not in rho.qubit_labels:
            idx.append(int(t))
        else:
            idx.append(rho.index_of(t))
    if len(set(idx)) != len(idx) or any(i < 0 or i >= rho.n_qubits for i in idx):
        raise DimensionError(f"bad target list {targets!r}")
    return idx


def partial_trace(rho: DensityMatrix, keep: Iterable) -> DensityMatrix:
    keep_idx = sorted(_targets(rho, keep))
    if not keep_idx:
        raise ValueError("keep set must be non-empty")
    n = rho.n_qubits
    t = rho.data.reshape([2] * (2 * n))
    drop = [q for q in range(n) if q not in keep_idx]
    # contract bra/ket axes of each dropped qubit, highest first so indices stay valid
    for k, q in enumerate(sorted(drop, reverse=True)):
        m = n - k
        t = np.trace(t, axis1=q, axis2=q + m)
    dk = 2 ** len(keep_idx)
    labels = tuple(rho.qubit_labels[i] for i in keep_idx)
    return DensityMatrix(t.reshape(dk, dk), labels, rho.normalized, check=False)


def _apply_ops(data: np.ndarray, n: int, ops: Sequence[np.ndarray], idx: list[int]) -> np.ndarray:
    """Sum_k K rho K^dag with each K acting on qubits ``idx``."""
    k = len(idx)
    rest = [q for q in range(n) if q not in idx]
    perm = idx + rest
    t = data.reshape([2] * (2 * n)).transpose(perm + [p + n for p in perm])
    t = t.reshape(2**k, 2 ** (n - k), 2**k, 2 ** (n - k))
    out = np.zeros_like(t)
    for op in ops:
        out += np.einsum("ab,bjcl,dc->ajdl", op, t, op.conj(), optimize=True)
    inv = np.argsort(perm)
    out = out.reshape([2] * (2 * n)).transpose(list(inv) + [p + n for p in inv])
    return out.reshape(2**n, 2**n)


def apply_unitary(rho: DensityMatrix, u: np.ndarray, targets: Sequence) -> DensityMatrix:
    idx = _targets(rho, targets)
    u = np.asarray(u, dtype=complex)
    if u.shape != (2 ** len(idx),) * 2:
        raise DimensionError("unitary does not match target count")
    data = _apply_ops(rho.data, rho.n_qubits, [u], idx)
    return DensityMatrix(data, rho.qubit_labels, rho.normalized, check=False)


def apply_channel(rho: DensityMatrix, ch: QuantumChannel, targets: Sequence) -> DensityMatrix:
    idx = _targets(rho, targets)
    if ch.dim_in != 2 ** len(idx) or ch.dim_out != ch.dim_in:
        raise DimensionError(
            f"channel of dim {ch.dim_in}->{ch.dim_out} on {len(idx)} qubit(s)"
        )
    data = _apply_ops(rho.data, rho.n_qubits, ch.kraus_ops, idx)
    data = (data + data.conj().T) / 2
    return DensityMatrix(data, rho.qubit_labels, rho.normalized and ch.trace_preserving, check=False)


def kraus_to_superop(ch: QuantumChannel) -> Superoperator:
    m = sum(np.kron(k.conj(), k) for k in ch.kraus_ops)
    return Superoperator(m, ch.dim_in, ch.dim_out)


def unitary_superop(u: np.ndarray) -> Superoperator:
    u = np.asarray(u, dtype=complex)
    return Superoperator(np.kron(u.conj(), u))


def superop_apply(s: Superoperator, rho) -> np.ndarray:
    return unvectorize(s.matrix @ vectorize(rho), s.dim_out)


def superop_to_choi(s: Superoperator) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) E(|i><j|)`` (input factor first)."""
    d = s.dim_in
    dout = s.dim_out
    choi = np.zeros((d * dout, d * dout), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1
            choi += np.kron(e, superop_apply(s, e))
    return choi


def choi_to_superop(choi: np.ndarray, dim_in: int) -> Superoperator:
    dout = choi.shape[0] // dim_in
    t = choi.reshape(dim_in, dout, dim_in, dout)
    m = np.zeros((dout * dout, dim_in * dim_in), dtype=complex)
    for i in range(dim_in):
        for j in range(dim_in):
            m[:, i + dim_in * j] = vectorize(t[i, :, j, :])
    return Superoperator(m, dim_in, dout)


def choi_to_kraus(choi: np.ndarray, dim_in: int, tol: float = 1e-12) -> QuantumChannel:
    w, v = np.linalg.eigh((choi + choi.conj().T) / 2)
    dout = choi.shape[0] // dim_in
    ops = []
    for val, vec in zip(w, v.T):
        if val > tol:
            # vec indexes (in, out); K[out, in]
            ops.append(np.sqrt(val) * vec.reshape(dim_in, dout).T)
    gram = sum(k.conj().T @ k for k in ops)
    tp = bool(np.max(np.abs(gram - np.eye(dim_in))) < TP_TOL)
    return QuantumChannel(tuple(ops), trace_preserving=tp)


def fidelity_to_pure(rho, psi: PureState | np.ndarray) -> float:
    v = psi.amplitudes if isinstance(psi, PureState) else np.asarray(psi, dtype=complex)
    m = _as_matrix(rho)
    if m.shape[0] != v.shape[0]:
        raise DimensionError("state and target dimensions differ")
    f = float(np.real(v.conj() @ m @ v))
    return min(max(f, 0.0), 1.0)


def make_target_state(n: int, phi: float = 0.0) -> PureState:
    if n < 2:
        raise ValueError("target states need at least two qubits")
    v = np.zeros(2**n, dtype=complex)
    v[0] = 1 / np.sqrt(2)
    v[-1] = np.exp(1j * phi) / np.sqrt(2)
    return PureState(v)


# -- channels -----------------------------------------------------------------


def identity_channel(n_qubits: int = 1) -> QuantumChannel:
    return QuantumChannel((np.eye(2**n_qubits),))


def unitary_channel(u: np.ndarray) -> QuantumChannel:
    return QuantumChannel((np.asarray(u, dtype=complex),))


def pauli_basis(n_qubits: int) -> list[np.ndarray]:
    ops = [np.eye(1, dtype=complex)]
    for _ in range(n_qubits):
        ops = [np.kron(a, p) for a in ops for p in PAULIS]
    return ops


def depolarizing_channel(p: float, n_qubits: int = 1) -> QuantumChannel:
    """``rho -> (1-p) rho + p I/d``; ``p`` is the full-mixing probability."""
    d = 2**n_qubits
    if not 0 <= p <= d * d / (d * d - 1):
        raise ValueError(f"depolarizing probability {p} out of range")
    paulis = pauli_basis(n_qubits)
    w_id = 1 - p * (d * d - 1) / (d * d)
    ops = [np.sqrt(w_id) * paulis[0]] + [np.sqrt(p / (d * d)) * q for q in paulis[1:]]
    return QuantumChannel(tuple(o for o in ops if np.any(o)))


def pauli_channel(px: float, py: float, pz: float) -> QuantumChannel:
    p0 = 1 - px - py - pz
    if min(px, py, pz, p0) < 0:
        raise ValueError("Pauli probabilities out of range")
    ops = [np.sqrt(w) * P for w, P in zip((p0, px, py, pz), PAULIS) if w > 0]
    return QuantumChannel(tuple(ops))


def dephasing_channel(coherence: float) -> QuantumChannel:
    """Single-qubit phase damping scaling off-diagonals by ``coherence``."""
    if not 0 <= coherence <= 1:
        raise ValueError("coherence factor must lie in [0, 1]")
    pz = (1 - coherence) / 2
    return pauli_channel(0.0, 0.0, pz)


def amplitude_damping_channel(gamma: float) -> QuantumChannel:
    if not 0 <= gamma <= 1:
        raise ValueError("damping probability must lie in [0, 1]")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return QuantumChannel((k0, k1))


def depolarizing_prob_from_fidelity(f_avg: float, d: int) -> float:
    """Full-mixing probability whose channel has average fidelity ``f_avg``.

    For ``(1-p) rho + p I/d`` the average gate fidelity is
    ``1 - p (d-1)/d``.
    """
    return (1 - f_avg) * d / (d - 1)


# -- random sampling ----------------------------------------------------------


class RngStream:
    """Named, seeded, splittable random stream (Philox counter generator).

    Children are derived from the parent's seed material and the child's
    name only, so ``split("shot-7")`` is the same stream no matter how many
    draws the parent has made.
    """

    def __init__(self, seed: int | Sequence[int] = 0, name: str = "root", _key: tuple = ()):
        self.seed = seed
        self.name = name
        self._key = tuple(_key)
        entropy = seed if isinstance(seed, int) else list(seed)
        ss = np.random.SeedSequence(entropy, spawn_key=self._key)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def split(self, name) -> "RngStream":
        digest = hashlib.sha256(str(name).encode()).digest()
        word = int.from_bytes(digest[:4], "little")
        return RngStream(self.seed, f"{self.name}/{name}", self._key + (word,))

    def __getattr__(self, item):
        return getattr(self.generator, item)

    def __repr__(self):
        return f"RngStream(seed={self.seed!r}, name={self.name!r})"


def haar_sample(dim: int, rng: RngStream | np.random.Generator) -> PureState:
    if dim < 2:
        raise ValueError("Haar sampling needs dim >= 2")
    g = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState(g / np.linalg.norm(g))


def random_density_matrix(n_qubits: int, rng, rank: int | None = None) -> DensityMatrix:
    d = 2**n_qubits
    r = rank or d
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_unitary(dim: int, rng) -> np.ndarray:
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(n_qubits: int, rng, n_kraus: int = 3) -> QuantumChannel:
    d = 2**n_qubits
    g = rng.standard_normal((n_kraus * d, d)) + 1j * rng.standard_normal((n_kraus * d, d))
    q, _ = np.linalg.qr(g)
    return QuantumChannel(tuple(q[k * d:(k + 1) * d] for k in range(n_kraus)))
