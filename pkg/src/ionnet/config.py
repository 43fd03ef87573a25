"""Calibration file loading and validation.

The file is INI-style with one section per module plus link, schedule,
herald, storage and reference sections. Every value carries a provenance
tag in its inline comment::

    readout_N = 0.534e-3  ; measured | network qubit readout, average of both states

Tags: ``measured`` (published number), ``derived`` (arithmetic on published
numbers), ``fitted`` (solved with :mod:`ionnet.calibrate`), ``uncalibrated``
(placeholder, no published value).
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import device, netsim
from .device import CNOT, ISWAP, GateSpec, PrepErrorModel, ReadoutErrorModel, StorageModel, Timing

log = logging.getLogger(__name__)

TAGS = ("measured", "derived", "fitted", "uncalibrated")
ROLES = ("N", "C", "X")
KINDS = ("srsr", "srca", "caca", "ghz3", "ghz4")

# key -> (lower, upper, inclusive upper)
_PROB = (0.0, 0.5, False)
_UNIT = (0.0, 1.0, True)
_POS = (0.0, float("inf"), False)
_NONNEG = (0.0, float("inf"), True)

MODULE_KEYS = {
    **{f"readout_{r}": _PROB for r in ROLES},
    **{f"prep_{r}": _PROB for r in ROLES},
    **{f"rb_{r}": _PROB for r in ROLES},
    "cnot_fidelity": (0.5, 1.0, True),
    "cnot_duration": _POS,
    "iswap_fidelity": (0.5, 1.0, True),
    "iswap_duration": _POS,
    "iswap_px_N": _PROB,
    "iswap_pz_N": _PROB,
    "iswap_pz_X": _PROB,
    "iswap_insitu_excess": _PROB,
    "hyperfine_error": _PROB,
}
MODULE_OPTIONAL = {
    **{f"readout_{r}_eps1": _PROB for r in ROLES},
    "readout_duration": _POS,
    "prep_duration": _POS,
    "single_qubit_duration": _POS,
    "hyperfine_duration": _POS,
}
SECTION_KEYS = {
    "link": ({"population_error": _UNIT, "coherence_error": _UNIT}, {"latency": _NONNEG}),
    "schedule.srsr": ({"attempt_window": _POS, "doppler_window": _POS, "eit_window": _POS},
                      {"attempt_period": _POS, "extra_window": _NONNEG}),
    "schedule.mixed": ({"attempt_window": _POS, "doppler_window": _POS, "eit_window": _POS},
                       {"attempt_period": _POS, "extra_window": _NONNEG}),
    "herald": ({k: (0.0, 1.0, True) for k in KINDS}, {}),
    "storage": ({"coherence_T_N": _POS, "coherence_T_C": _POS, "amp_damping_T1": _POS,
                 "sweep_N": None, "sweep_C": None}, {"dd_schedule": None}),
    "reference": ({}, None),  # free-form published numbers for reports
}

# fallbacks for optional keys; each use is logged as an uncalibrated default
DEFAULTS = {
    "readout_duration": 500.0,
    "prep_duration": 20.0,
    "single_qubit_duration": 5.0,
    "hyperfine_duration": 30.0,
    "latency": 0.0,
    "attempt_period": 1.21,
    "extra_window": 0.0,
    "dd_schedule": "",
}


class ConfigError(ValueError):
    """Schema or range violation; message carries the file line."""


@dataclass
class Entry:
    value: object
    tag: str
    note: str
    line: int


@dataclass
class Calibration:
    network: netsim.NetworkConfig
    entries: dict
    reference: dict
    sweeps: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    digest: str = ""

    def provenance(self, section: str, key: str) -> str:
        return self.entries[(section, key)].tag


def default_path() -> Path:
    return Path(str(resources.files("ionnet") / "data" / "calibration.ini"))


def _line_index(text: str) -> dict:
    idx = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            section = m.group(1).strip()
            idx[(section, None)] = n
            continue
        if section and "=" in s and not s.startswith((";", "#")):
            idx[(section, s.split("=", 1)[0].strip())] = n
    return idx


def _parse_value(raw: str):
    try:
        return float(raw)
    except ValueError:
        return raw.strip()


def _check_range(val, rng, where):
    if rng is None:
        return
    lo, hi, incl = rng
    if not isinstance(val, float):
        raise ConfigError(f"{where}: expected a number, got {val!r}")
    ok = lo <= val <= hi if incl else lo <= val < hi
    if not ok:
        raise ConfigError(f"{where}: value {val} outside [{lo}, {hi}{']' if incl else ')'}")


def load_config(path=None) -> Calibration:
    """Read and validate a calibration file; unknown or missing keys are errors."""
    path = Path(path) if path is not None else default_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    lines = _line_index(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    raw_comments = {}
    for (sec, key), n in lines.items():
        if key is None:
            continue
        body = text.splitlines()[n - 1]
        raw_comments[(sec, key)] = body.split(";", 1)[1].strip() if ";" in body else ""

    entries: dict = {}
    warnings: list = []

    def where(sec, key=None):
        return f"{path.name}:{lines.get((sec, key), lines.get((sec, None), '?'))} [{sec}] {key or ''}".rstrip()

    def take(sec, schema, optional):
        have = set(cp[sec]) if cp.has_section(sec) else set()
        if optional is not None:
            extra = have - set(schema) - set(optional)
            if extra:
                raise ConfigError(f"{where(sec, sorted(extra)[0])}: unknown key")
        for key, rng in list(schema.items()) + list((optional or {}).items()):
            if key not in have:
                if key in schema:
                    raise ConfigError(f"{where(sec)}: missing required key {key!r}")
                if key.endswith("_eps1"):
                    continue
                val = DEFAULTS[key]
                warnings.append(f"[{sec}] {key}: uncalibrated default {val!r}")
                entries[(sec, key)] = Entry(val, "uncalibrated", "default", 0)
                continue
            val = _parse_value(cp[sec][key])
            _check_range(val, rng, where(sec, key))
            comment = raw_comments.get((sec, key), "")
            tag, _, note = comment.partition("|")
            tag = tag.strip()
            if tag not in TAGS:
                raise ConfigError(f"{where(sec, key)}: provenance tag must be one of {TAGS}, got {tag!r}")
            entries[(sec, key)] = Entry(val, tag, note.strip(), lines[(sec, key)])
        if optional is None:
            for key in have:
                val = _parse_value(cp[sec][key])
                comment = raw_comments.get((sec, key), "")
                tag, _, note = comment.partition("|")
                entries[(sec, key)] = Entry(val, tag.strip(), note.strip(), lines[(sec, key)])

    expected = {"Alice", "Bob", *SECTION_KEYS}
    for sec in cp.sections():
        if sec not in expected:
            raise ConfigError(f"{where(sec)}: unknown section")
    for sec in expected:
        if not cp.has_section(sec):
            raise ConfigError(f"{path.name}: missing section [{sec}]")
    for name in ("Alice", "Bob"):
        take(name, MODULE_KEYS, MODULE_OPTIONAL)
    for sec, (req, opt) in SECTION_KEYS.items():
        take(sec, req, opt)
    for w in warnings:
        log.warning(w)

    g = lambda sec, key: entries[(sec, key)].value  # noqa: E731
    network = _build_network(g, entries)
    reference = {k: e.value for (s, k), e in entries.items() if s == "reference"}
    digest = hashlib.sha256(text.encode()).hexdigest()
    sweeps = {r: parse_floats(g("storage", f"sweep_{r}")) for r in ("N", "C")}
    return Calibration(network, entries, reference, sweeps, warnings, digest)


def parse_floats(text) -> list:
    if isinstance(text, float):
        return [text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _build_module(name, g, entries) -> device.ModuleModel:
    readout, prep, rb = {}, {}, {}
    for r in ROLES:
        avg = g(name, f"readout_{r}")
        if (name, f"readout_{r}_eps1") in entries:
            e1 = g(name, f"readout_{r}_eps1")
            readout[r] = ReadoutErrorModel(2 * avg - e1, e1)
        else:
            readout[r] = ReadoutErrorModel(avg, avg)
        prep[r] = PrepErrorModel(g(name, f"prep_{r}"))
        rb[r] = g(name, f"rb_{r}")
    gates = {
        "CNOT": GateSpec("CNOT", CNOT, g(name, "cnot_duration"), g(name, "cnot_fidelity")),
        "iSWAP": GateSpec("iSWAP", ISWAP, g(name, "iswap_duration"), g(name, "iswap_fidelity"),
                          local_errors=((g(name, "iswap_px_N"), 0.0, g(name, "iswap_pz_N")),
                                        (0.0, 0.0, g(name, "iswap_pz_X")))),
    }
    storage = StorageModel({"N": g("storage", "coherence_T_N"), "C": g("storage", "coherence_T_C"),
                            "X": g("storage", "coherence_T_C")},
                           g("storage", "amp_damping_T1"), _parse_dd(g("storage", "dd_schedule")))
    timing = Timing(g(name, "readout_duration"), g(name, "prep_duration"),
                    g(name, "single_qubit_duration"), g(name, "hyperfine_duration"))
    return device.ModuleModel(name, readout, prep, gates, storage, g(name, "hyperfine_error"), rb,
                              timing, g(name, "iswap_insitu_excess"))


def _parse_dd(text) -> tuple:
    if not text:
        return ()
    out = []
    for part in str(text).split(","):
        t, n = part.split(":")
        out.append((float(t), int(n)))
    return tuple(out)


def _build_network(g, entries) -> netsim.NetworkConfig:
    modules = {n: _build_module(n, g, entries) for n in ("Alice", "Bob")}
    link = netsim.RawLinkModel(g("link", "population_error"), g("link", "coherence_error"))
    scheds = {}
    for kind in KINDS:
        sec = "schedule.srsr" if kind == "srsr" else "schedule.mixed"
        scheds[kind] = netsim.ScheduleConfig(g(sec, "attempt_window"), g(sec, "doppler_window"),
                                             g(sec, "eit_window"), g(sec, "attempt_period"),
                                             g("herald", kind), g(sec, "extra_window"))
    return netsim.NetworkConfig(modules, link, scheds, g("link", "latency"))
