"""Calibrated noise model of one two-ion module.

Each module hosts a network qubit (``N``), a circuit memory qubit (``C``)
and an auxiliary qubit (``X``). Register qubits are labelled
``"<module>.<role>"``, e.g. ``"Alice.N"``.

Gate noise is the ideal unitary, then optional per-target Pauli errors,
then a depolarizing (or dephasing) channel whose strength is solved so
the whole gate has the configured average gate fidelity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from . import qcore
from .qcore import DensityMatrix, QuantumChannel


class QubitRole(str, enum.Enum):
    NETWORK = "N"
    CIRCUIT = "C"
    AUXILIARY = "X"


def label(module: str, role: QubitRole | str) -> str:
    return f"{module}.{QubitRole(role).value}"


def split_label(lbl: str) -> tuple[str, QubitRole]:
    module, role = lbl.rsplit(".", 1)
    return module, QubitRole(role)


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
# diag(1, i): the standard phase gate
S_GATE = np.diag([1, 1j]).astype(complex)
# ISWAP leaves the transferred state as S|psi>; this undoes it
TRANSFER_CORRECTION = S_GATE.conj().T


def rotation(axis_angle: float, theta: float) -> np.ndarray:
    """Rotation by ``theta`` about the equatorial axis at angle ``axis_angle`` from X."""
    n_dot_sigma = np.cos(axis_angle) * qcore.X + np.sin(axis_angle) * qcore.Y
    return np.cos(theta / 2) * qcore.I2 - 1j * np.sin(theta / 2) * n_dot_sigma


@dataclass(frozen=True)
class ReadoutErrorModel:
    eps0: float = 0.0  # P(read 1 | |0>)
    eps1: float = 0.0  # P(read 0 | |1>)

    def __post_init__(self):
        for e in (self.eps0, self.eps1):
            if not 0 <= e < 0.5:
                raise ValueError(f"readout error {e} outside [0, 0.5)")

    def confusion(self) -> np.ndarray:
        """``C[reported, true]``."""
        return np.array([[1 - self.eps0, self.eps1], [self.eps0, 1 - self.eps1]])

    def povm(self) -> tuple[np.ndarray, np.ndarray]:
        m0 = np.diag([1 - self.eps0, self.eps1]).astype(complex)
        m1 = np.diag([self.eps0, 1 - self.eps1]).astype(complex)
        return m0, m1


@dataclass(frozen=True)
class PrepErrorModel:
    eps: float = 0.0

    def __post_init__(self):
        if not 0 <= self.eps < 0.5:
            raise ValueError(f"preparation error {self.eps} outside [0, 0.5)")

    def state(self) -> np.ndarray:
        return np.diag([1 - self.eps, self.eps]).astype(complex)


class NoiseKind(str, enum.Enum):
    DEPOLARIZING_AFTER = "depolarizing"
    DEPHASING_AFTER = "dephasing"


@dataclass(frozen=True)
class GateSpec:
    name: str
    ideal_unitary: np.ndarray
    duration: float  # us
    avg_fidelity: float = 1.0
    noise_kind: NoiseKind = NoiseKind.DEPOLARIZING_AFTER
    # (px, py, pz) applied to each target before the calibrated channel
    local_errors: tuple = ()

    def __post_init__(self):
        u = np.asarray(self.ideal_unitary, dtype=complex)
        object.__setattr__(self, "ideal_unitary", u)
        if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > 1e-10:
            raise ValueError(f"gate {self.name} is not unitary")
        if not 0.5 < self.avg_fidelity <= 1:
            raise ValueError(f"gate {self.name}: average fidelity {self.avg_fidelity} out of range")
        object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))
        if self.local_errors and len(self.local_errors) != self.n_qubits:
            raise ValueError("local_errors needs one (px, py, pz) per target")

    @property
    def n_qubits(self) -> int:
        return qcore.n_qubits_of(self.ideal_unitary.shape[0])

    def _local_channel(self) -> QuantumChannel:
        ops = [np.eye(1, dtype=complex)]
        for errs in self.local_errors or [(0.0, 0.0, 0.0)] * self.n_qubits:
            single = qcore.pauli_channel(*errs).kraus_ops
            ops = [np.kron(a, b) for a in ops for b in single]
        return QuantumChannel(tuple(ops))

    def _calibrated_channel(self, strength: float) -> QuantumChannel:
        n = self.n_qubits
        if self.noise_kind is NoiseKind.DEPOLARIZING_AFTER:
            return qcore.depolarizing_channel(strength, n)
        ops = [np.eye(1, dtype=complex)]
        for _ in range(n):
            single = qcore.dephasing_channel(1 - strength).kraus_ops
            ops = [np.kron(a, b) for a in ops for b in single]
        return QuantumChannel(tuple(ops))

    def _noise(self, strength: float) -> QuantumChannel:
        return self._local_channel().then(self._calibrated_channel(strength))

    @cached_property
    def noise_strength(self) -> float:
        """Strength of the calibrated channel matching ``avg_fidelity``."""
        d = 2**self.n_qubits
        f_local = noise_avg_fidelity(self._noise(0.0), d)
        if self.avg_fidelity >= f_local - 1e-15:
            if self.avg_fidelity > f_local + 1e-12:
                raise ValueError(
                    f"gate {self.name}: local errors alone give fidelity {f_local:.5f} "
                    f"below the configured {self.avg_fidelity}"
                )
            return 0.0
        hi = 1.0
        return brentq(lambda s: noise_avg_fidelity(self._noise(s), d) - self.avg_fidelity, 0.0, hi, xtol=1e-15)

    @cached_property
    def channel(self) -> QuantumChannel:
        """Full noisy gate as a channel (unitary first)."""
        return qcore.unitary_channel(self.ideal_unitary).then(self._noise(self.noise_strength))

    def with_extra_depolarizing(self, p: float) -> QuantumChannel:
        if p == 0:
            return self.channel
        return self.channel.then(qcore.depolarizing_channel(p, self.n_qubits))


def noise_avg_fidelity(ch: QuantumChannel, d: int) -> float:
    """Average fidelity of a channel to the identity: ``(d F_e + 1)/(d + 1)``."""
    f_e = sum(abs(np.trace(k)) ** 2 for k in ch.kraus_ops) / d**2
    return float((d * f_e + 1) / (d + 1))


def channel_avg_fidelity(ch: QuantumChannel, u_ideal: np.ndarray) -> float:
    d = u_ideal.shape[0]
    f_e = sum(abs(np.trace(u_ideal.conj().T @ k)) ** 2 for k in ch.kraus_ops) / d**2
    return float((d * f_e + 1) / (d + 1))


@dataclass(frozen=True)
class StorageModel:
    """Phenomenological storage decoherence.

    ``pair_T`` holds the 1/e decay time (ms) of a stored pair's coherence for
    each role. Each qubit dephases with ``T_single = 2 * pair_T``; for the
    network role the amplitude-damping share of the coherence decay is
    removed from the dephasing rate so the pair coherence still decays with
    ``pair_T`` overall.
    """

    pair_T: dict = field(default_factory=lambda: {"N": 44.0, "C": 14000.0, "X": 14000.0})
    amp_damping_T1: float = 390.0  # ms, network role only
    dd_schedule: tuple = ()  # ((max_duration_ms, n_pulses), ...) metadata only

    def __post_init__(self):
        pair_T = {QubitRole(k).value: float(v) for k, v in dict(self.pair_T).items()}
        object.__setattr__(self, "pair_T", pair_T)
        if any(v <= 0 for v in pair_T.values()) or self.amp_damping_T1 <= 0:
            raise ValueError("storage time constants must be positive")
        if 1 / pair_T.get("N", np.inf) < 1 / self.amp_damping_T1:
            raise ValueError("network pair coherence time exceeds the damping limit")

    def dephasing_rate(self, role: QubitRole) -> float:
        """Per-qubit pure-dephasing rate (1/ms)."""
        role = QubitRole(role)
        rate = 1 / (2 * self.pair_T[role.value])
        if role is QubitRole.NETWORK:
            rate -= 1 / (2 * self.amp_damping_T1)
        return rate

    def dd_pulses(self, duration_ms: float) -> int:
        for max_t, n in self.dd_schedule:
            if duration_ms <= max_t:
                return int(n)
        return int(self.dd_schedule[-1][1]) if self.dd_schedule else 0


@dataclass(frozen=True)
class Timing:
    readout: float = 500.0  # us, mid-circuit and final readout
    prep: float = 20.0  # us
    single_qubit: float = 5.0  # us
    hyperfine_transfer: float = 30.0  # us


@dataclass(frozen=True)
class ModuleModel:
    name: str
    readout: dict  # role -> ReadoutErrorModel
    prep: dict  # role -> PrepErrorModel
    gates: dict  # name -> GateSpec
    storage: StorageModel = field(default_factory=StorageModel)
    hyperfine_transfer_error: float = 0.0
    single_qubit_error_per_clifford: dict = field(default_factory=dict)
    timing: Timing = field(default_factory=Timing)
    # extra two-qubit depolarizing on the iSWAP when run inside the network sequence
    iswap_insitu_excess: float = 0.0

    def __post_init__(self):
        for attr in ("readout", "prep", "single_qubit_error_per_clifford"):
            d = {QubitRole(k): v for k, v in dict(getattr(self, attr)).items()}
            object.__setattr__(self, attr, d)
        missing = [r for r in QubitRole if r not in self.readout or r not in self.prep]
        if missing:
            raise ValueError(f"module {self.name}: SPAM parameters missing for {missing}")
        if not 0 <= self.hyperfine_transfer_error < 0.5:
            raise ValueError("hyperfine transfer error out of range")

    def qubit(self, role) -> str:
        return label(self.name, role)

    def gate(self, name: str) -> GateSpec:
        try:
            return self.gates[name]
        except KeyError:
            raise KeyError(f"module {self.name} has no gate {name!r}") from None


class ModuleClock:
    """Per-module wall clock in microseconds."""

    def __init__(self, names=("Alice", "Bob")):
        self.t = {n: 0.0 for n in names}

    def advance(self, module: str, dt: float) -> None:
        self.t[module] += dt

    def sync(self, modules=None) -> float:
        names = list(modules or self.t)
        now = max(self.t[n] for n in names)
        for n in names:
            self.t[n] = now
        return now

    @property
    def elapsed(self) -> float:
        return max(self.t.values())


def _tick(clock, module, dt):
    if clock is not None:
        clock.advance(module, dt)


def prepare(model: ModuleModel, role, clock: ModuleClock | None = None) -> DensityMatrix:
    role = QubitRole(role)
    _tick(clock, model.name, model.timing.prep)
    return DensityMatrix(model.prep[role].state(), (model.qubit(role),))


def add_qubit(state: DensityMatrix, model: ModuleModel, role, clock=None) -> DensityMatrix:
    return qcore.tensor_states(state, prepare(model, role, clock))


def apply_gate(state: DensityMatrix, model: ModuleModel, gate_name: str, targets,
               clock: ModuleClock | None = None, insitu: bool = False) -> DensityMatrix:
    gate = model.gate(gate_name)
    if len(targets) != gate.n_qubits:
        raise ValueError(f"gate {gate_name} acts on {gate.n_qubits} qubit(s), got {len(targets)}")
    ch = gate.with_extra_depolarizing(model.iswap_insitu_excess) if (insitu and gate_name == "iSWAP") else gate.channel
    _tick(clock, model.name, gate.duration)
    return qcore.apply_channel(state, ch, targets)


def single_qubit_gate(state: DensityMatrix, model: ModuleModel, target, u: np.ndarray,
                      clock: ModuleClock | None = None) -> DensityMatrix:
    """Arbitrary rotation with the role's randomized-benchmarking error per Clifford."""
    _, role = split_label(target)
    r = model.single_qubit_error_per_clifford.get(role, 0.0)
    ch = qcore.unitary_channel(u)
    if r > 0:
        ch = ch.then(qcore.depolarizing_channel(qcore.depolarizing_prob_from_fidelity(1 - r, 2)))
    _tick(clock, model.name, model.timing.single_qubit)
    return qcore.apply_channel(state, ch, [target])


def outcome_probability(state: DensityMatrix, model: ModuleModel, target) -> float:
    """Probability of reporting 0 when reading out ``target``."""
    _, role = split_label(target)
    p_true0 = _population(state, state.index_of(target)) / state.trace()
    ro = model.readout[role]
    return float((1 - ro.eps0) * p_true0 + ro.eps1 * (1 - p_true0))


def _population(state: DensityMatrix, idx: int) -> float:
    n = state.n_qubits
    diag = np.real(np.diag(state.data)).reshape([2] * n)
    return float(np.moveaxis(diag, idx, 0)[0].sum())


def project(state: DensityMatrix, target, bit: int) -> DensityMatrix:
    idx = state.index_of(target)
    proj = np.diag([1.0 - bit, float(bit)]).astype(complex)
    out = qcore.apply_channel(state, QuantumChannel((proj,), trace_preserving=False), [idx])
    return out.renormalized()


def measure(state: DensityMatrix, model: ModuleModel, target, rng,
            clock: ModuleClock | None = None) -> tuple[int, DensityMatrix]:
    """Read out ``target``; returns (reported bit, state collapsed on the true branch)."""
    _, role = split_label(target)
    idx = state.index_of(target)
    p_true0 = _population(state, idx) / state.trace()
    true_bit = int(rng.random() >= p_true0)
    ro = model.readout[role]
    flip = ro.eps0 if true_bit == 0 else ro.eps1
    bit = true_bit ^ int(rng.random() < flip)
    _tick(clock, model.name, model.timing.readout)
    return bit, project(state, target, true_bit)


def hyperfine_channel(error: float) -> QuantumChannel:
    """Depolarizing channel with average infidelity ``error``."""
    return qcore.depolarizing_channel(qcore.depolarizing_prob_from_fidelity(1 - error, 2))


def hyperfine_transfer(state: DensityMatrix, model: ModuleModel, direction: str = "X->C",
                       clock: ModuleClock | None = None) -> DensityMatrix:
    """Map the auxiliary qubit into the circuit qubit (or back), with error."""
    src, dst = {"X->C": ("X", "C"), "C->X": ("C", "X")}[direction.replace("→", "->")]
    src_lbl, dst_lbl = model.qubit(src), model.qubit(dst)
    if src_lbl not in state.qubit_labels:
        raise ValueError(f"{src_lbl} not in register")
    if dst_lbl in state.qubit_labels:
        raise ValueError(f"{dst_lbl} already occupied")
    out = qcore.apply_channel(state, hyperfine_channel(model.hyperfine_transfer_error), [src_lbl])
    _tick(clock, model.name, model.timing.hyperfine_transfer)
    return out.relabel({src_lbl: dst_lbl})


def idle_channel(model: ModuleModel, role, duration_ms: float) -> QuantumChannel:
    if duration_ms < 0:
        raise ValueError("idle duration must be non-negative")
    role = QubitRole(role)
    st = model.storage
    coherence = np.exp(-st.dephasing_rate(role) * duration_ms)
    ch = qcore.dephasing_channel(coherence)
    if role is QubitRole.NETWORK:
        gamma = 1 - np.exp(-duration_ms / st.amp_damping_T1)
        ch = ch.then(qcore.amplitude_damping_channel(gamma))
    return ch


def idle(state: DensityMatrix, model: ModuleModel, target, duration_ms: float,
         dd: int | None = None, clock: ModuleClock | None = None) -> DensityMatrix:
    """Store ``target`` for ``duration_ms``; ``dd`` (UR-n pulse count) is recorded only."""
    _, role = split_label(target)
    out = qcore.apply_channel(state, idle_channel(model, role, duration_ms), [target])
    _tick(clock, model.name, duration_ms * 1e3)
    return out
