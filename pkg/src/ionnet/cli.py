"""Command-line entry point.

Every subcommand loads a calibration file, runs with a fixed seed and writes
its outputs (records, matrix dumps, ``.txt`` and ``.json`` reports) into the
output directory together with a run manifest. Reports contain no timestamps,
so two runs with the same config and seed produce byte-identical files; only
the manifest records wall-clock times.

Exit codes: 0 success, 2 bad configuration, 3 infeasible request.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, calibrate, device, fitstats, netsim, proc, qcore, records, tomo
from .config import ConfigError, load_config

log = logging.getLogger("ionnet")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
OUT_ENV = "IONNET_OUT"
DEFAULT_OUT = "ionnet-out"
TABLE_KINDS = ("srsr", "srca", "caca", "ghz3", "ghz4")
SIM, REF, MODEL = "simulated", "reference", "model"


class InfeasibleRequest(RuntimeError):
    pass


@dataclass
class RunManifest:
    command: str
    config_path: str
    config_sha256: str
    seed: int
    kinds: list
    shots: dict
    outputs: list = field(default_factory=list)
    started: str = ""
    finished: str = ""
    version: str = __version__

    def write(self, out: Path) -> Path:
        path = out / f"{self.command}.manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


# -- helpers ------------------------------------------------------------------


def tagged(value, source: str) -> dict:
    return {"value": None if value is None else float(value), "source": source}


def _check_tagged(obj, path="") -> None:
    """Every number below a report row must sit inside a ``{value, source}`` cell."""
    if isinstance(obj, dict):
        if set(obj) == {"value", "source"}:
            if obj["source"] not in (SIM, REF, MODEL):
                raise AssertionError(f"{path}: unknown source {obj['source']!r}")
            return
        for k, v in obj.items():
            _check_tagged(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_tagged(v, f"{path}[{i}]")
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        raise AssertionError(f"{path}: untagged number {obj}")


def _fmt(cell) -> str:
    if cell is None or cell["value"] is None:
        return "-"
    tag = {SIM: "sim", REF: "ref", MODEL: "mdl"}[cell["source"]]
    return f"{cell['value']:.4g}[{tag}]"


def write_report(out: Path, stem: str, payload: dict, text: str) -> list[Path]:
    j = out / f"{stem}.json"
    t = out / f"{stem}.txt"
    j.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    t.write_text(text)
    return [j, t]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def readout_for(config: netsim.NetworkConfig, register) -> list:
    out = []
    for lbl in register:
        name, role = device.split_label(lbl)
        out.append(config.modules[name].readout[role])
    return out


def output_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_shots(n: int, minimum: int = 0) -> None:
    if n < minimum:
        raise InfeasibleRequest(f"--shots must be at least {minimum}, got {n}")


def _pst_minimum(kind) -> int:
    n = len(netsim.register_of(kind))
    return 2 * (2 * n + 2)


def simulate_records(cal, kind, shots, mode, seed, workers, storage_ms=0.0):
    plan_rng = qcore.RngStream(seed, "plan").split(str(kind))
    plan = netsim.settings_plan(kind, shots, mode, plan_rng)
    return netsim.run_experiment(kind, plan, cal.network, seed, storage_ms, workers)


def records_header(cal, kind, mode, seed, shots, storage_ms=0.0) -> dict:
    return {"kind": str(netsim.ExperimentKind(kind).value), "mode": mode, "seed": seed,
            "n_shots": shots, "storage_ms": storage_ms, "config_sha256": cal.digest,
            "qubits": list(netsim.register_of(kind))}


def _load_or_simulate(args, cal, mode):
    """Records from ``--records`` or a fresh simulation of ``--kind``."""
    if args.records:
        try:
            head, recs = records.read_records(args.records)
        except (OSError, records.RecordFormatError, ValueError) as exc:
            raise InfeasibleRequest(f"cannot read records: {exc}") from exc
        return head, recs
    if not args.kind:
        raise InfeasibleRequest("give --records or --kind")
    if mode == "pst":
        _need_shots(args.shots, _pst_minimum(args.kind))
    else:
        _need_shots(args.shots, 1)
    recs = simulate_records(cal, args.kind, args.shots, mode, args.seed, args.workers)
    return records_header(cal, args.kind, mode, args.seed, args.shots), recs


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args, cal, out, manifest):
    _need_shots(args.shots)
    if args.storage_ms < 0:
        raise InfeasibleRequest("--storage-ms must be non-negative")
    if args.mode == "pst" and args.shots:
        _need_shots(args.shots, _pst_minimum(args.kind))
    recs = simulate_records(cal, args.kind, args.shots, args.mode, args.seed, args.workers, args.storage_ms)
    path = out / f"{args.kind}_{args.mode}.records.jsonl"
    records.write_records(path, recs, records_header(cal, args.kind, args.mode, args.seed, args.shots,
                                                     args.storage_ms))
    manifest.kinds, manifest.shots = [args.kind], {args.kind: args.shots}
    manifest.outputs.append(str(path))
    print(f"wrote {len(recs)} records to {path}")


def cmd_reconstruct(args, cal, out, manifest):
    head, recs = _load_or_simulate(args, cal, "fst")
    kind = head["kind"]
    register = head["qubits"]
    readout = readout_for(cal.network, register)
    try:
        data = tomo.dataset_from_records(recs, readout)
        res = tomo.mle_reconstruct(data, labels=register)
    except (tomo.IncompleteDataError, ValueError) as exc:
        raise InfeasibleRequest(f"reconstruction failed: {exc}") from exc
    fid = tomo.entanglement_fidelity(res.rho_hat)
    engine = netsim.ShotEngine(cal.network, kind, head.get("storage_ms", 0.0))
    exact = tomo.entanglement_fidelity(netsim._reorder(engine.accepted_state(), register))
    payload = {"kind": kind, "qubits": register, "n_shots": len(recs),
               "iterations": res.iterations, "converged": res.converged,
               "fidelity": tagged(fid, SIM), "model_fidelity": tagged(exact, MODEL)}
    if kind in ("srsr", "srca", "caca"):
        payload["reference_fst"] = tagged(cal.reference.get(f"{kind}_fst"), REF)
    text = (f"full tomography  kind={kind}  shots={len(recs)}  iterations={res.iterations}\n"
            f"fidelity        {_fmt(payload['fidelity'])}\n"
            f"model fidelity  {_fmt(payload['model_fidelity'])}\n")
    rho_path = records.write_matrix(out / f"{kind}_rho.txt", res.rho_hat.data, "density",
                                    {"qubits": register})
    files = write_report(out, f"{kind}_reconstruct", payload, text)
    manifest.kinds, manifest.shots = [kind], {kind: len(recs)}
    manifest.outputs += [str(p) for p in [rho_path, *files]]
    print(text, end="")


def _pst_payload(kind, recs):
    try:
        est = tomo.pst_from_records(recs)
    except (ValueError, fitstats.FitError) as exc:
        raise InfeasibleRequest(f"partial tomography failed: {exc}") from exc
    return est, {"P": tagged(est.P, SIM), "P_err": tagged(est.P_err, SIM), "C": tagged(est.C, SIM),
                 "C_err": tagged(est.C_err, SIM), "F": tagged(est.F, SIM), "F_err": tagged(est.F_err, SIM)}


def cmd_pst(args, cal, out, manifest):
    head, recs = _load_or_simulate(args, cal, "pst")
    kind = head["kind"]
    est, cells = _pst_payload(kind, recs)
    rows = [{"name": k, "value": getattr(est, k), "ci": (getattr(est, k) - 1.96 * getattr(est, k + "_err"),
                                                            getattr(est, k) + 1.96 * getattr(est, k + "_err")),
             "n": len(recs)} for k in ("P", "C", "F")]
    text = f"partial tomography  kind={kind}\n" + fitstats.format_report(rows)
    payload = {"kind": kind, "n_shots": len(recs), **cells,
               "reference": tagged(cal.reference.get(f"{kind}_fidelity"), REF)}
    files = write_report(out, f"{kind}_pst", payload, text)
    manifest.kinds, manifest.shots = [kind], {kind: len(recs)}
    manifest.outputs += [str(p) for p in files]
    print(text, end="")


def cmd_process(args, cal, out, manifest):
    if args.mc_samples < 100:
        raise InfeasibleRequest("--mc-samples must be at least 100")
    if args.shots_per_pair < 1:
        raise InfeasibleRequest("--shots-per-pair must be positive")
    model = cal.network.modules[args.module]
    gate = model.gate(args.gate)
    ro = [model.readout[device.QubitRole.NETWORK], model.readout[device.QubitRole.AUXILIARY]]
    rng = qcore.RngStream(args.seed, "process").split(f"{args.module}.{args.gate}")
    data = proc.simulate_process_data(gate.channel, ro, rng, args.shots_per_pair)
    s_hat = proc.reconstruct_process(data)
    s_true = qcore.kraus_to_superop(gate.channel)
    payload = {"module": args.module, "gate": args.gate, "shots": data.total_shots,
               "F_avg_reconstructed": tagged(proc.avg_gate_fidelity(s_hat, gate.ideal_unitary), SIM),
               "F_avg_model": tagged(proc.avg_gate_fidelity(s_true, gate.ideal_unitary), MODEL),
               "choi_distance": tagged(proc.choi_distance(s_hat, s_true), SIM)}
    lines = [f"process tomography  {args.module} {args.gate}  shots={data.total_shots}",
             f"F_avg reconstructed  {_fmt(payload['F_avg_reconstructed'])}",
             f"F_avg model          {_fmt(payload['F_avg_model'])}",
             f"choi distance        {_fmt(payload['choi_distance'])}"]
    if args.gate == "iSWAP":
        pre = args.module.lower()
        prep = model.prep[device.QubitRole.AUXILIARY]
        det = model.readout[device.QubitRole.NETWORK]
        plain = proc.build_transfer_superop(s_true, prep)
        ed = proc.monte_carlo_ed_metrics(proc.build_transfer_superop(s_true, prep, det), args.mc_samples,
                                         rng.split("haar"))
        payload["transfer"] = {
            "F": tagged(plain.F, SIM), "F_bar": tagged(ed.F_bar, SIM), "F_bar_err": tagged(ed.F_bar_err, SIM),
            "p_bar": tagged(ed.p_bar, SIM), "p_bar_err": tagged(ed.p_bar_err, SIM),
            "F_ref": tagged(cal.reference.get(f"{pre}_iswap_transfer_F"), REF),
            "F_bar_ref": tagged(cal.reference.get(f"{pre}_iswap_F_bar"), REF),
            "p_bar_ref": tagged(cal.reference.get(f"{pre}_iswap_p_bar"), REF)}
        t = payload["transfer"]
        lines += [f"transfer F           {_fmt(t['F'])}  {_fmt(t['F_ref'])}",
                  f"transfer F_bar       {_fmt(t['F_bar'])} +- {t['F_bar_err']['value']:.2g}  {_fmt(t['F_bar_ref'])}",
                  f"transfer p_bar       {_fmt(t['p_bar'])} +- {t['p_bar_err']['value']:.2g}  {_fmt(t['p_bar_ref'])}"]
    text = "\n".join(lines) + "\n"
    stem = f"{args.module}_{args.gate}_process"
    sup = records.write_matrix(out / f"{stem}_superop.txt", s_hat.matrix, "superoperator",
                               {"module": args.module, "gate": args.gate})
    files = write_report(out, stem, payload, text)
    manifest.kinds, manifest.shots = [f"{args.module}.{args.gate}"], {args.gate: data.total_shots}
    manifest.outputs += [str(p) for p in [sup, *files]]
    print(text, end="")


def storage_sweep(cal, shots, seed, workers, n_boot=200):
    """Simulated storage sweeps and decay fits for both pair types."""
    result = {}
    for role, kind in (("N", "storage_net"), ("C", "storage_cir")):
        durations = cal.sweeps[role]
        fs, errs = [], []
        for t in durations:
            recs = simulate_records(cal, kind, shots, "pst", seed, workers, t)
            est = tomo.pst_from_records(recs)
            fs.append(est.F)
            errs.append(est.F_err)
        model = calibrate.STORAGE_FIT_MODEL[role]
        fit = fitstats.fit_exp_decay(durations, fs, errs, model,
                                     qcore.RngStream(seed, "storage-fit").split(role), n_boot)
        result[role] = {"kind": kind, "durations_ms": list(durations), "F": fs, "F_err": errs, "fit": fit}
    return result


def cmd_storage(args, cal, out, manifest):
    _need_shots(args.shots, _pst_minimum("storage_net"))
    sweep = storage_sweep(cal, args.shots, args.seed, args.workers)
    payload, lines = {}, []
    for role, r in sweep.items():
        fit = r["fit"]
        ref = cal.reference.get(f"storage_T_{role}")
        lo, hi = fit.ci["T"]
        payload[role] = {
            "kind": r["kind"], "model": fit.model,
            "points": [{"t_ms": tagged(t, SIM), "F": tagged(f, SIM), "F_err": tagged(e, SIM)}
                       for t, f, e in zip(r["durations_ms"], r["F"], r["F_err"])],
            "T_ms": tagged(fit.T, SIM), "T_ci_low": tagged(lo, SIM), "T_ci_high": tagged(hi, SIM),
            "offset": tagged(fit.offset, SIM), "T_ref": tagged(ref, REF)}
        lines.append(f"{r['kind']}  model={fit.model}  T={fit.T:.5g} ms  95% CI [{lo:.5g}, {hi:.5g}]  "
                     f"reference {ref:g} ms")
        for t, f, e in zip(r["durations_ms"], r["F"], r["F_err"]):
            lines.append(f"  t={t:>8g} ms  F={f:.4f} +- {e:.4f}")
    c = sweep["C"]
    f10 = c["F"][c["durations_ms"].index(10000.0)] if 10000.0 in c["durations_ms"] else None
    payload["C_F_10s"] = tagged(f10, SIM)
    payload["C_F_10s_ref"] = tagged(cal.reference.get("storage_F_10s"), REF)
    text = "\n".join(lines) + "\n"
    files = write_report(out, "storage", payload, text)
    manifest.kinds = ["storage_net", "storage_cir"]
    manifest.shots = {k: args.shots for k in manifest.kinds}
    manifest.outputs += [str(p) for p in files]
    print(text, end="")


def summary_rows(cal, shots, seed, workers, fst=True) -> list[dict]:
    rows = []
    ref = cal.reference
    for kind in TABLE_KINDS:
        recs = simulate_records(cal, kind, shots, "pst", seed, workers)
        est = tomo.pst_from_records(recs)
        rate = netsim.rate_report(recs)
        row = {"kind": kind,
               "fidelity": tagged(est.F, SIM), "fidelity_err": tagged(est.F_err, SIM),
               "fidelity_ref": tagged(ref.get(f"{kind}_fidelity"), REF),
               "fst": tagged(None, SIM), "fst_ref": tagged(ref.get(f"{kind}_fst"), REF),
               "abort": tagged(rate.abort_fraction, SIM), "abort_ref": tagged(ref.get(f"{kind}_abort", 0.0), REF),
               "success_prob": tagged(rate.mean_success_prob, SIM),
               "success_prob_ref": tagged(ref.get(f"{kind}_total_success"), REF),
               "rate": tagged(rate.rate, SIM), "rate_ref": tagged(ref.get(f"{kind}_rate"), REF)}
        if fst and len(netsim.register_of(kind)) == 2:
            frecs = simulate_records(cal, kind, shots, "fst", seed, workers)
            register = netsim.register_of(kind)
            data = tomo.dataset_from_records(frecs, readout_for(cal.network, register))
            res = tomo.mle_reconstruct(data, labels=register)
            row["fst"] = tagged(tomo.entanglement_fidelity(res.rho_hat), SIM)
        rows.append(row)
    _check_tagged(rows)
    return rows


def render_summary(rows) -> str:
    cols = ("fidelity", "fidelity_ref", "fst", "fst_ref", "abort", "abort_ref", "rate", "rate_ref")
    lines = [f"{'kind':<6}" + "".join(f"{c:>16}" for c in cols)]
    for r in rows:
        lines.append(f"{r['kind']:<6}" + "".join(f"{_fmt(r[c]):>16}" for c in cols))
    lines.append("[sim] simulated with the shipped calibration, [ref] published value")
    return "\n".join(lines) + "\n"


def cmd_summary(args, cal, out, manifest):
    _need_shots(args.shots, max(_pst_minimum(k) for k in TABLE_KINDS))
    rows = summary_rows(cal, args.shots, args.seed, args.workers, fst=not args.no_fst)
    text = render_summary(rows)
    files = write_report(out, "table1", {"rows": rows}, text)
    manifest.kinds, manifest.shots = list(TABLE_KINDS), {k: args.shots for k in TABLE_KINDS}
    manifest.outputs += [str(p) for p in files]
    print(text, end="")


def cmd_rates(args, cal, out, manifest):
    _need_shots(args.shots, 1)
    rows, lines = [], [f"{'kind':<6}{'rate':>16}{'expected':>16}{'reference':>16}{'abort':>16}{'success':>16}"]
    for kind in TABLE_KINDS:
        recs = simulate_records(cal, kind, args.shots, "pst", args.seed, args.workers)
        st = netsim.rate_report(recs)
        exp = netsim.expected_rate(netsim.ShotEngine(cal.network, kind))
        row = {"kind": kind, "rate": tagged(st.rate, SIM), "expected_rate": tagged(exp, MODEL),
               "rate_ref": tagged(cal.reference.get(f"{kind}_rate"), REF),
               "abort": tagged(st.abort_fraction, SIM), "success_prob": tagged(st.mean_success_prob, SIM),
               "time_to_entanglement_ms": tagged(st.mean_time_to_entanglement, SIM)}
        rows.append(row)
        lines.append(f"{kind:<6}" + "".join(f"{_fmt(row[c]):>16}" for c in
                                            ("rate", "expected_rate", "rate_ref", "abort", "success_prob")))
    _check_tagged(rows)
    text = "\n".join(lines) + "\n"
    files = write_report(out, "rates", {"rows": rows}, text)
    manifest.kinds, manifest.shots = list(TABLE_KINDS), {k: args.shots for k in TABLE_KINDS}
    manifest.outputs += [str(p) for p in files]
    print(text, end="")


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="calibration file (default: shipped calibration)")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ionnet", description="Two-node ion network simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in netsim.ExperimentKind]

    s = sub.add_parser("simulate", parents=[common], help="write shot records")
    s.add_argument("kind", choices=kinds)
    s.add_argument("--shots", type=int, default=10_000)
    s.add_argument("--mode", choices=("pst", "fst"), default="pst")
    s.add_argument("--storage-ms", type=float, default=0.0)
    s.set_defaults(func=cmd_simulate)

    for name, func, mode in (("reconstruct", cmd_reconstruct, "full"), ("pst", cmd_pst, "partial")):
        s = sub.add_parser(name, parents=[common], help=f"{mode} tomography report")
        s.add_argument("--records", help="shot record file")
        s.add_argument("--kind", choices=kinds, help="simulate this kind when no records are given")
        s.add_argument("--shots", type=int, default=10_000)
        s.set_defaults(func=func)

    s = sub.add_parser("process", parents=[common], help="process tomography and transfer metrics")
    s.add_argument("--module", choices=("Alice", "Bob"), default="Alice")
    s.add_argument("--gate", choices=("iSWAP", "CNOT"), default="iSWAP")
    s.add_argument("--shots-per-pair", type=int, default=proc.SHOTS_PER_PAIR)
    s.add_argument("--mc-samples", type=int, default=10_000)
    s.set_defaults(func=cmd_process)

    s = sub.add_parser("storage", parents=[common], help="storage sweeps and decay fits")
    s.add_argument("--shots", type=int, default=4_000, help="shots per storage duration")
    s.set_defaults(func=cmd_storage)

    s = sub.add_parser("table1", parents=[common], help="end-to-end reproduction of the summary table")
    s.add_argument("--shots", type=int, default=10_000)
    s.add_argument("--no-fst", action="store_true", help="skip full tomography of the pairs")
    s.set_defaults(func=cmd_summary)

    s = sub.add_parser("rates", parents=[common], help="rate statistics")
    s.add_argument("--shots", type=int, default=10_000)
    s.set_defaults(func=cmd_rates)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cal = load_config(args.config)
    except ConfigError as exc:
        print(f"ionnet: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("ionnet: --workers must be positive", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = output_dir(args.out)
    manifest = RunManifest(args.command, str(args.config or "shipped"), cal.digest, args.seed, [], {},
                           started=_now())
    try:
        args.func(args, cal, out, manifest)
    except (InfeasibleRequest, fitstats.FitError) as exc:
        print(f"ionnet: infeasible request: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    manifest.finished = _now()
    manifest.write(out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
