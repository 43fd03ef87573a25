"""Shot-level simulation of the two-module network.

Each shot runs heralded pair generation (geometric number of attempts laid
out on the interleaved attempt/cooling schedule), the local circuit for the
requested experiment (error-detected transfers, CNOT extensions, storage),
then the analysis rotations and readout.

The quantum state after the local circuit depends only on the true
outcomes of the mid-circuit measurements, so states and final outcome
distributions are cached per outcome path; the randomness per shot is the
attempt count, the mid-circuit branches and the final readout sample.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import device, qcore, tomo
from .device import CNOT, TRANSFER_CORRECTION, ModuleClock, ModuleModel, QubitRole
from .qcore import DensityMatrix

log = logging.getLogger(__name__)

MODULES = ("Alice", "Bob")


class ExperimentKind(str, enum.Enum):
    SRSR = "srsr"
    SRCA = "srca"
    CACA = "caca"
    GHZ3 = "ghz3"
    GHZ4 = "ghz4"
    STORAGE_NET = "storage_net"
    STORAGE_CIR = "storage_cir"


@dataclass(frozen=True)
class ScheduleConfig:
    """Interleaved attempt/cooling schedule; all times in microseconds.

    ``extra_window`` is dead time per cycle on top of the two cooling
    windows (unattributed overhead in the mixed-species sequence).
    """

    attempt_window: float
    doppler_window: float
    eit_window: float
    attempt_period: float
    success_prob: float
    extra_window: float = 0.0

    def __post_init__(self):
        for name in ("attempt_window", "doppler_window", "eit_window", "attempt_period"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.success_prob <= 1:
            raise ValueError("success_prob must lie in (0, 1]")
        if self.extra_window < 0:
            raise ValueError("extra_window must be non-negative")
        if self.attempt_period > self.attempt_window:
            raise ValueError("attempt_period longer than the attempt window")

    @property
    def attempts_per_window(self) -> float:
        return self.attempt_window / self.attempt_period

    @property
    def dead_time(self) -> float:
        return self.doppler_window + self.eit_window + self.extra_window

    @property
    def cycle(self) -> float:
        return self.attempt_window + self.dead_time

    @property
    def duty_cycle(self) -> float:
        return self.attempt_window / self.cycle

    def elapsed_for(self, attempts) -> np.ndarray:
        """Wall time until attempt number ``attempts`` completes.

        Attempts accumulate attempt time ``k * attempt_period``; every
        completed attempt window is followed by the cooling dead time.
        """
        k = np.asarray(attempts, dtype=np.int64)
        busy = k * self.attempt_period
        windows_done = np.ceil(busy / self.attempt_window - 1e-12).astype(np.int64) - 1
        return busy + np.maximum(windows_done, 0) * self.dead_time

    def mean_elapsed(self) -> float:
        """Expected generation time for one heralded pair."""
        p = self.success_prob
        # E[#completed windows] = sum_m P(k * period > m * window)
        n_terms = int(60 * self.attempt_period / (p * self.attempt_window)) + 10
        m = np.arange(1, n_terms + 1)
        thresh = np.floor(m * self.attempt_window / self.attempt_period + 1e-9)
        tail = np.exp(thresh * np.log1p(-p)) if p < 1 else np.zeros_like(thresh)
        return self.attempt_period / p + self.dead_time * float(tail.sum())

    def with_(self, **kw) -> "ScheduleConfig":
        return ScheduleConfig(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class RawLinkModel:
    """Heralded pair = ``|Phi+>`` with population and coherence errors.

    ``population_error`` moves weight to the odd-parity subspace;
    ``coherence_error`` shrinks the even-parity coherence. The pair
    fidelity is ``(1 - pe)(2 - ce)/2``.
    """

    population_error: float = 0.0
    coherence_error: float = 0.0

    def __post_init__(self):
        if not (0 <= self.population_error <= 1 and 0 <= self.coherence_error <= 1):
            raise ValueError("link errors must be probabilities")
        if self.fidelity <= 0.5:
            raise ValueError("raw pair fidelity must exceed 0.5")

    @property
    def fidelity(self) -> float:
        return (1 - self.population_error) * (2 - self.coherence_error) / 2

    def state(self, labels=("Alice.N", "Bob.N")) -> DensityMatrix:
        pe, ce = self.population_error, self.coherence_error
        m = np.zeros((4, 4), dtype=complex)
        m[0, 0] = m[3, 3] = (1 - pe) / 2
        m[1, 1] = m[2, 2] = pe / 2
        m[0, 3] = m[3, 0] = (1 - pe) * (1 - ce) / 2
        return DensityMatrix(m, tuple(labels))


class ClassicalLink:
    """In-order message channel between the two control systems."""

    def __init__(self, latency: float = 0.0):
        if latency < 0:
            raise ValueError("latency must be non-negative")
        self.latency = float(latency)
        self.log: list[tuple[float, str, str, object]] = []

    def send(self, clock: ModuleClock, sender: str, receiver: str, payload) -> float:
        t = clock.t[sender]
        last = max((m[0] for m in self.log if m[1] == sender), default=-np.inf)
        if t < last:
            raise RuntimeError("message sent out of order")
        self.log.append((t, sender, receiver, payload))
        arrival = t + self.latency
        clock.t[receiver] = max(clock.t[receiver], arrival)
        return arrival

    def exchange(self, clock: ModuleClock, payloads: dict) -> dict:
        """Both modules send simultaneously and wait for each other's message."""
        sent = {m: clock.t[m] for m in payloads}
        for m, v in payloads.items():
            self.log.append((sent[m], m, _other(m), v))
        for m in payloads:
            clock.t[m] = max(clock.t[m], sent[_other(m)] + self.latency)
        return {_other(m): v for m, v in payloads.items()}


def _other(m: str) -> str:
    return MODULES[1 - MODULES.index(m)]


class TransferAborted(Exception):
    """An error-detection measurement reported 1; generation restarts."""


@dataclass
class NetworkConfig:
    modules: dict  # name -> ModuleModel
    link: RawLinkModel
    schedules: dict  # ExperimentKind value -> ScheduleConfig
    latency: float = 0.0

    def schedule(self, kind) -> ScheduleConfig:
        kind = ExperimentKind(kind)
        key = {ExperimentKind.STORAGE_NET: "srsr", ExperimentKind.STORAGE_CIR: "caca"}.get(kind, kind.value)
        return self.schedules[key]


@dataclass(frozen=True)
class ShotRecord:
    shot: int
    attempts: int
    elapsed_us: float
    aborts: int
    setting: tuple | None
    phase: float | None
    outcomes: tuple

    def to_dict(self) -> dict:
        return {"shot": self.shot, "attempts": self.attempts, "elapsed_us": self.elapsed_us,
                "aborts": self.aborts, "setting": list(self.setting) if self.setting is not None else None,
                "phase": self.phase, "outcomes": list(self.outcomes)}

    @classmethod
    def from_dict(cls, d: dict) -> "ShotRecord":
        st = d.get("setting")
        return cls(int(d["shot"]), int(d["attempts"]), float(d["elapsed_us"]), int(d["aborts"]),
                   tuple(st) if st is not None else None, d.get("phase"), tuple(d["outcomes"]))


@dataclass
class RateStats:
    mean_success_prob: float
    mean_time_to_entanglement: float  # ms
    rate: float  # 1/s
    abort_fraction: float
    n_shots: int
    n_attempts: int
    n_aborts: int


# -- per-shot protocol --------------------------------------------------------


def register_of(kind) -> tuple:
    kind = ExperimentKind(kind)
    return {
        ExperimentKind.SRSR: ("Alice.N", "Bob.N"),
        ExperimentKind.SRCA: ("Alice.N", "Bob.X"),
        ExperimentKind.CACA: ("Alice.X", "Bob.X"),
        ExperimentKind.GHZ3: ("Alice.N", "Bob.N", "Bob.X"),
        ExperimentKind.GHZ4: ("Alice.N", "Alice.X", "Bob.N", "Bob.X"),
        ExperimentKind.STORAGE_NET: ("Alice.N", "Bob.N"),
        ExperimentKind.STORAGE_CIR: ("Alice.C", "Bob.C"),
    }[kind]


def transfer_modules(kind) -> tuple:
    kind = ExperimentKind(kind)
    if kind is ExperimentKind.SRCA:
        return ("Bob",)
    if kind in (ExperimentKind.CACA, ExperimentKind.STORAGE_CIR):
        return MODULES
    return ()


def generate_raw_pair(link: RawLinkModel, schedule: ScheduleConfig, rng, clock: ModuleClock | None = None):
    """Heralded pair after a geometric number of attempts.

    Returns ``(state, attempts, elapsed_us)``; both module clocks advance.
    """
    attempts = int(rng.geometric(schedule.success_prob))
    dt = float(schedule.elapsed_for(attempts))
    if clock is not None:
        for m in clock.t:
            clock.advance(m, dt)
        clock.sync()
    return link.state(), attempts, dt


def _iswap_stage(state: DensityMatrix, model: ModuleModel, clock) -> DensityMatrix:
    n, x = model.qubit("N"), model.qubit("X")
    state = device.add_qubit(state, model, "X", clock)
    state = device.apply_gate(state, model, "iSWAP", [n, x], clock, insitu=True)
    return device.single_qubit_gate(state, model, x, TRANSFER_CORRECTION, clock)


def error_detected_iswap(state: DensityMatrix, model: ModuleModel, rng, link: ClassicalLink,
                         clock: ModuleClock, notify: bool = True) -> tuple[int, int, DensityMatrix]:
    """Transfer the network half of a pair into the auxiliary qubit of ``model``.

    Returns ``(reported_bit, true_bit, state)`` with the network qubit traced
    out. When ``notify`` is set the reported bit is sent to the other module
    and a reported 1 raises :class:`TransferAborted`.
    """
    state = _iswap_stage(state, model, clock)
    n = model.qubit("N")
    bit, collapsed = device.measure(state, model, n, rng, clock)
    true_bit = int(round(device._population(collapsed, collapsed.index_of(n)) < 0.5))
    keep = [lbl for lbl in collapsed.qubit_labels if lbl != n]
    out = qcore.partial_trace(collapsed, keep)
    if notify:
        link.send(clock, model.name, _other(model.name), bit)
        if bit:
            raise TransferAborted(model.name)
    return bit, true_bit, out


class ShotEngine:
    """Runs shots of one experiment kind with cached branch states."""

    def __init__(self, config: NetworkConfig, kind, storage_ms: float = 0.0):
        self.config = config
        self.kind = ExperimentKind(kind)
        self.storage_ms = float(storage_ms)
        if self.storage_ms < 0:
            raise ValueError("storage duration must be non-negative")
        self.schedule = config.schedule(self.kind)
        self.register = register_of(self.kind)
        self._branch_cache: dict = {}
        self._dist_cache: dict = {}
        self._local_time = self._protocol_time()

    # branch states ----------------------------------------------------------

    def _post_transfer_branches(self):
        """Transfer branches: list of (path, probability, reported-0 flags, state)."""
        if "transfer" in self._branch_cache:
            return self._branch_cache["transfer"]
        pair = self.config.link.state()
        movers = transfer_modules(self.kind)
        branches = [((), 1.0, pair)]
        for name in movers:
            model = self.config.modules[name]
            nxt = []
            for path, prob, st in branches:
                st = _iswap_stage(st, model, None)
                n = model.qubit("N")
                p0 = device._population(st, st.index_of(n))
                for bit, pb in ((0, p0), (1, 1 - p0)):
                    if pb <= 0:
                        continue
                    proj = device.project(st, n, bit)
                    keep = [lbl for lbl in proj.qubit_labels if lbl != n]
                    nxt.append((path + (bit,), prob * pb, qcore.partial_trace(proj, keep)))
            branches = nxt
        self._branch_cache["transfer"] = branches
        return branches

    def _final_state(self, path: tuple) -> DensityMatrix:
        key = ("final", path)
        if key in self._branch_cache:
            return self._branch_cache[key]
        st = dict((b[0], b[2]) for b in self._post_transfer_branches())[path]
        mods = self.config.modules
        k = self.kind
        if k in (ExperimentKind.GHZ3, ExperimentKind.GHZ4):
            for name in (("Bob",) if k is ExperimentKind.GHZ3 else MODULES):
                m = mods[name]
                st = device.add_qubit(st, m, "X")
                st = device.apply_gate(st, m, "CNOT", [m.qubit("N"), m.qubit("X")])
        elif k is ExperimentKind.STORAGE_NET:
            for name in MODULES:
                st = device.idle(st, mods[name], mods[name].qubit("N"), self.storage_ms)
        elif k is ExperimentKind.STORAGE_CIR:
            for name in MODULES:
                st = device.hyperfine_transfer(st, mods[name], "X->C")
            for name in MODULES:
                st = device.idle(st, mods[name], mods[name].qubit("C"), self.storage_ms)
        st = _reorder(st, self.register)
        self._branch_cache[key] = st
        return st

    def _protocol_time(self) -> dict:
        """Local-operation time per module after a herald (us), excluding final analysis."""
        mods = self.config.modules
        t = {m: 0.0 for m in MODULES}
        for name in transfer_modules(self.kind):
            m = mods[name]
            t[name] += m.timing.prep + m.gate("iSWAP").duration + m.timing.single_qubit + m.timing.readout
        if self.kind in (ExperimentKind.GHZ3, ExperimentKind.GHZ4):
            for name in (("Bob",) if self.kind is ExperimentKind.GHZ3 else MODULES):
                t[name] += mods[name].timing.prep + mods[name].gate("CNOT").duration
        if self.kind is ExperimentKind.STORAGE_CIR:
            for name in MODULES:
                t[name] += mods[name].timing.hyperfine_transfer
        return t

    # final readout ----------------------------------------------------------

    def outcome_distribution(self, path: tuple, setting) -> np.ndarray:
        """Reported-outcome distribution for a branch and an analysis setting.

        ``setting`` is a tuple of rotation indices or a float parity phase.
        """
        key = (path, setting)
        if key in self._dist_cache:
            return self._dist_cache[key]
        st = self._final_state(path)
        mods = self.config.modules
        if isinstance(setting, tuple):
            us = [tomo.ROTATIONS[i] for i in setting]
        else:
            us = [tomo.parity_rotation(float(setting))] * len(self.register)
        conf = np.ones((1, 1))
        for lbl, u in zip(self.register, us):
            name, role = device.split_label(lbl)
            if not np.allclose(u, np.eye(2)):
                st = device.single_qubit_gate(st, mods[name], lbl, u)
            conf = np.kron(conf, mods[name].readout[role].confusion())
        p_true = np.clip(np.real(np.diag(st.data)), 0, None)
        p = conf @ (p_true / p_true.sum())
        p = p / p.sum()
        self._dist_cache[key] = p
        return p

    # one shot ---------------------------------------------------------------

    def run_shot(self, shot_id: int, rng, setting=None, phase=None) -> ShotRecord:
        clock = ModuleClock(MODULES)
        link = ClassicalLink(self.config.latency)
        attempts = aborts = 0
        movers = transfer_modules(self.kind)
        branches = self._post_transfer_branches() if movers else None
        while True:
            _, k, _ = generate_raw_pair(self.config.link, self.schedule, rng, clock)
            attempts += k
            if not movers:
                path = ()
                for name in MODULES:
                    clock.advance(name, self._local_time[name])
                break
            path, reported = self._sample_transfer(rng, branches, movers)
            for name in MODULES:
                clock.advance(name, self._local_time[name])
            if len(movers) == 2:
                link.exchange(clock, dict(zip(movers, reported)))
            else:
                link.send(clock, movers[0], _other(movers[0]), reported[0])
            clock.sync()
            if any(reported):
                aborts += 1
                continue
            break
        if self.kind is ExperimentKind.STORAGE_CIR or self.kind is ExperimentKind.STORAGE_NET:
            for name in MODULES:
                clock.advance(name, self.storage_ms * 1e3)
        elapsed = clock.sync()
        key = tuple(setting) if setting is not None else float(phase)
        p = self.outcome_distribution(path, key)
        j = int(rng.choice(len(p), p=p))
        n = len(self.register)
        bits = tuple((j >> (n - 1 - q)) & 1 for q in range(n))
        return ShotRecord(shot_id, attempts, float(elapsed), aborts,
                          tuple(setting) if setting is not None else None, phase, bits)

    def _sample_transfer(self, rng, branches, movers):
        """Sample true mid-circuit outcomes, then each module's reported bit."""
        probs = np.array([b[1] for b in branches])
        idx = int(rng.choice(len(branches), p=probs / probs.sum()))
        path = branches[idx][0]
        reported = []
        for name, true_bit in zip(movers, path):
            ro = self.config.modules[name].readout[QubitRole.NETWORK]
            flip = ro.eps0 if true_bit == 0 else ro.eps1
            reported.append(true_bit ^ int(rng.random() < flip))
        return path, tuple(reported)

    def abort_probability(self) -> float:
        """Exact probability that at least one module reports an error."""
        movers = transfer_modules(self.kind)
        if not movers:
            return 0.0
        ok = 0.0
        for path, prob, _ in self._post_transfer_branches():
            pass_prob = prob
            for name, b in zip(movers, path):
                ro = self.config.modules[name].readout[QubitRole.NETWORK]
                pass_prob *= (1 - ro.eps0) if b == 0 else ro.eps1
            ok += pass_prob
        return 1 - ok

    def accepted_state(self) -> DensityMatrix:
        """Mixture of branch states weighted by the probability of passing detection."""
        movers = transfer_modules(self.kind)
        if not movers:
            return self._final_state(())
        acc = 0
        tot = 0.0
        for path, prob, _ in self._post_transfer_branches():
            w = prob
            for name, b in zip(movers, path):
                ro = self.config.modules[name].readout[QubitRole.NETWORK]
                w *= (1 - ro.eps0) if b == 0 else ro.eps1
            acc = acc + w * self._final_state(path).data
            tot += w
        return DensityMatrix(acc / tot, self.register)


    def _accepted_branches(self) -> list[tuple[tuple, float]]:
        movers = transfer_modules(self.kind)
        if not movers:
            return [((), 1.0)]
        out = []
        for path, prob, _ in self._post_transfer_branches():
            w = prob
            for name, b in zip(movers, path):
                ro = self.config.modules[name].readout[QubitRole.NETWORK]
                w *= (1 - ro.eps0) if b == 0 else ro.eps1
            out.append((path, w))
        tot = sum(w for _, w in out)
        return [(p, w / tot) for p, w in out]

    def accepted_distribution(self, setting) -> np.ndarray:
        """Reported-outcome distribution of an accepted shot (exact, no sampling)."""
        return sum(w * self.outcome_distribution(p, setting) for p, w in self._accepted_branches())

    def expected_pst(self) -> tuple[float, float, float]:
        """Exact ``(P, C, F)`` that partial tomography converges to."""
        from .fitstats import fit_parity_fringe, phase_grid

        n = len(self.register)
        d0 = self.accepted_distribution((0,) * n)
        pop = float(d0[0] + d0[-1])
        sign = np.array([1 - 2 * (bin(j).count("1") % 2) for j in range(2**n)])
        grid = phase_grid(n)
        par = np.array([sign @ self.accepted_distribution(float(ph)) for ph in grid])
        fit = fit_parity_fringe(grid, par, np.ones(len(grid)), n)
        c = float(fit.C_raw)
        return pop, c, (pop + c) / 2


def expected_storage_curve(config: NetworkConfig, kind, durations) -> np.ndarray:
    """Exact partial-tomography fidelity after each storage duration (ms)."""
    return np.array([ShotEngine(config, kind, t).expected_pst()[2] for t in durations])


def _reorder(state: DensityMatrix, order: Sequence[str]) -> DensityMatrix:
    labels = state.qubit_labels
    if tuple(labels) == tuple(order):
        return state
    perm = [labels.index(lbl) for lbl in order]
    n = len(labels)
    t = state.data.reshape([2] * (2 * n)).transpose(perm + [p + n for p in perm])
    return DensityMatrix(t.reshape(2**n, 2**n), tuple(order))


# -- experiments --------------------------------------------------------------


def settings_plan(kind, n_shots: int, mode: str, rng) -> list[tuple]:
    """Per-shot (setting, phase) pairs.

    ``mode="fst"``: random tomographic settings. ``mode="pst"``: half
    computational-basis shots, half parity shots over the default phase grid.
    """
    n = len(register_of(kind))
    if n_shots == 0:
        return []
    if mode == "fst":
        return [(s.indices, None) for s in tomo.generate_settings(n, n_shots, rng)]
    if mode == "pst":
        from .fitstats import phase_grid

        grid = phase_grid(n)
        n_pop = n_shots // 2
        plan = [((0,) * n, None)] * n_pop
        plan += [(None, float(grid[k % len(grid)])) for k in range(n_shots - n_pop)]
        return plan
    raise ValueError(f"unknown settings mode {mode!r}")


def _run_chunk(args):
    config, kind, storage_ms, plan, start, seed = args
    engine = ShotEngine(config, kind, storage_ms)
    root = qcore.RngStream(seed, "shots")
    out = []
    for i, (setting, phase) in enumerate(plan):
        sid = start + i
        out.append(engine.run_shot(sid, root.split(sid), setting, phase))
    return out


def run_experiment(kind, plan, config: NetworkConfig, seed: int, storage_ms: float = 0.0,
                   workers: int = 1) -> list[ShotRecord]:
    """Simulate one record per plan entry.

    Every shot draws from its own stream split off ``seed`` by shot index, so
    results do not depend on ``workers``.
    """
    kind = ExperimentKind(kind)
    if workers <= 1 or len(plan) < 2 * workers:
        return _run_chunk((config, kind, storage_ms, list(plan), 0, seed))
    size = math.ceil(len(plan) / workers)
    jobs = [(config, kind, storage_ms, list(plan[i:i + size]), i, seed) for i in range(0, len(plan), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    return [r for part in parts for r in part]


def rate_report(records: Sequence[ShotRecord]) -> RateStats:
    if not records:
        raise ValueError("no records")
    n = len(records)
    att = sum(r.attempts for r in records)
    ab = sum(r.aborts for r in records)
    total_us = sum(r.elapsed_us for r in records)
    return RateStats(n / att, total_us / n / 1e3, n / (total_us * 1e-6), ab / (ab + n), n, att, ab)


def expected_rate(engine: ShotEngine) -> float:
    """Analytic mean rate (1/s) for the engine's schedule and abort probability."""
    pa = engine.abort_probability()
    local = max(engine._local_time.values())
    per_try = engine.schedule.mean_elapsed() + local
    per_success = per_try / (1 - pa)
    if engine.kind in (ExperimentKind.STORAGE_NET, ExperimentKind.STORAGE_CIR):
        per_success += engine.storage_ms * 1e3
    return 1e6 / per_success
