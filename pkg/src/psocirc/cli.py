"""Command-line front end.

Builds models from netlists and runs the study subcommands:

    pso-modes modes <netlist> [--out modes.csv] [--plot]
    pso-modes transfer <netlist> --kind s --ports p1,p2 --fmin 4GHz ...
    pso-modes sweep <netlist> [--param q.Lj --from 6nH --to 12nH --points 13]
    pso-modes support <netlist>
    pso-modes convergence <netlist> --deltas 40um,50um,60um
    pso-modes admittance <netlist> --circuit fig1a
    pso-modes lagrangian <netlist> [--junction n1:n2:EJ]

Every run writes a CSV (SI units in the column names) plus a JSON
manifest sidecar; --plot renders a matplotlib figure next to the CSV.
The netlist argument is a path, or one of the packaged circuit names
(fig1a, fig1b, fig1c).  Exit codes: 0 ok, 2 usage, 3 parse error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .model import (
    PsoError,
    eigenmodes,
    export_lagrangian,
    impedance,
    scattering,
    select_ports,
    validate,
)
from .model import admittance as model_admittance
from .microwave import TABLE_A, TABLE_B, admittance_t1, environment_admittance, fit_reactances
from .netlist import (
    BUILTIN_CIRCUITS,
    NetlistError,
    SweepStmt,
    build_circuit,
    builtin_netlist_text,
    parse_netlist,
    parse_value,
    serialize_netlist,
)
from .sweeps import convergence_study, label_by_region, regional_support, run_sweep

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _value(text):
    try:
        return parse_value(text)
    except NetlistError as exc:
        raise _UsageError(str(exc))


def _build_parser() -> _Parser:
    parser = _Parser(prog="pso-modes", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("netlist", help="netlist path or builtin name (fig1a/fig1b/fig1c)")
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--plot", action="store_true", help="render a figure beside the CSV")
        p.add_argument("--delta", type=_value, default=None,
                       help="override every transmission-line discretization length")
        p.add_argument("--tol-psd", type=float, default=None, help="PSD validation tolerance")
        p.add_argument("--tol-sym", type=float, default=None, help="symmetry validation tolerance")
        p.add_argument("--seed-manifest", default=None,
                       help="fixed stamp recorded instead of the wall-clock timestamp")

    p = sub.add_parser("modes", help="eigenmode summary")
    common(p)
    p.add_argument("--fmin", type=_value, default=None)
    p.add_argument("--fmax", type=_value, default=None)

    p = sub.add_parser("transfer", help="transfer function vs frequency")
    common(p)
    p.add_argument("--kind", choices=("s", "z", "y"), default="s")
    p.add_argument("--ports", default=None, help="comma-separated port names")
    p.add_argument("--fmin", type=_value, default=4e9)
    p.add_argument("--fmax", type=_value, default=8e9)
    p.add_argument("--points", type=int, default=801)
    p.add_argument("--z0", type=_value, default=50.0, help="reference impedance for kind=s")

    p = sub.add_parser("sweep", help="eigen summary across a parameter sweep")
    common(p)
    p.add_argument("--param", default=None, help="parameter path, e.g. q.Lj or xt")
    p.add_argument("--from", dest="start", type=_value, default=None)
    p.add_argument("--to", dest="stop", type=_value, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--log", action="store_true")
    p.add_argument("--fmin", type=_value, default=1e9, help="tracking band lower edge")
    p.add_argument("--fmax", type=_value, default=1e10, help="tracking band upper edge")
    p.add_argument("--admittance-model", choices=("fig1a", "fig1b"), default=None,
                   help="overlay the single-port admittance T1 (Lj sweeps)")

    p = sub.add_parser("support", help="regional support vectors of the modes")
    common(p)
    p.add_argument("--fmin", type=_value, default=1e9)
    p.add_argument("--fmax", type=_value, default=1e10)

    p = sub.add_parser("convergence", help="discretization convergence tables")
    common(p)
    p.add_argument("--deltas", required=True, help="comma-separated lengths, e.g. 40um,50um")
    p.add_argument("--param", default=None)
    p.add_argument("--from", dest="start", type=_value, default=None)
    p.add_argument("--to", dest="stop", type=_value, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--log", action="store_true")
    p.add_argument("--fmin", type=_value, default=1e9)
    p.add_argument("--fmax", type=_value, default=1e10)

    p = sub.add_parser("admittance", help="environment admittance scan and reactance fit")
    common(p)
    p.add_argument("--circuit", choices=("fig1a", "fig1b"), required=True)
    p.add_argument("--fmin", type=_value, default=0.1e9)
    p.add_argument("--fmax", type=_value, default=10e9)
    p.add_argument("--points", type=int, default=400)
    p.add_argument("--fit-lo", type=_value, default=0.1e9)
    p.add_argument("--fit-hi", type=_value, default=1.0e9)
    p.add_argument("--lj", type=_value, default=None,
                   help="also report the admittance-model T1 at this junction inductance")

    p = sub.add_parser("lagrangian", help="lossless Lagrangian export")
    common(p)
    p.add_argument("--junction", action="append", default=[],
                   metavar="N1:N2:EJ", help="cosine term on an edge, energy in joules")
    return parser


def _load_netlist(arg, delta=None):
    if arg in BUILTIN_CIRCUITS:
        text, origin = builtin_netlist_text(arg), f"builtin:{arg}"
    else:
        text, origin = Path(arg).read_text(encoding="utf-8"), arg
    netlist = parse_netlist(text)
    if delta is not None:
        netlist = netlist.with_delta(delta)
    return netlist, origin


def _manifest(args, origin, netlist, resolved, outputs):
    stamp = args.seed_manifest or datetime.now(timezone.utc).isoformat()
    return {
        "command": vars_public(args),
        "netlist_path": origin,
        "netlist_sha256": netlist.content_hash(),
        "resolved": resolved,
        "outputs": outputs,
        "tool_version": __version__,
        "timestamp": stamp,
    }


def vars_public(args):
    return {k: v for k, v in vars(args).items() if not k.startswith("_")}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return format(x, ".12e")
    return x


def _write_manifest(out_path, manifest):
    path = Path(out_path).with_suffix(Path(out_path).suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return str(path)


def _plot_path(out_path):
    return str(Path(out_path).with_suffix(".svg"))


def _validation_gate(model, args):
    kwargs = {}
    if args.tol_sym is not None:
        kwargs["sym_tol"] = args.tol_sym
    if args.tol_psd is not None:
        kwargs["psd_tol"] = args.tol_psd
    report = validate(model, **kwargs)
    if not report.ok:
        raise PsoError(f"assembled model failed validation: {report}")
    return report


def _cmd_modes(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    built = build_circuit(netlist)
    _validation_gate(built.model, args)
    solution = eigenmodes(built.model)
    region_names = tuple(built.region_map.keys())
    rsvs = regional_support(solution, built.region_map) if built.region_map else None
    labels = label_by_region(solution, built.region_map)
    rows, data = [], []
    for i, mode in enumerate(solution):
        f = mode.frequency_hz
        if args.fmin is not None and f < args.fmin:
            continue
        if args.fmax is not None and f > args.fmax:
            continue
        row = [labels[i], f, mode.decay_rate_hz, mode.t1_seconds]
        if rsvs:
            row.extend(rsvs[i].entries)
        rows.append(row)
        data.append({"mode_label": labels[i], "frequency_hz": f,
                     "decay_rate_hz": mode.decay_rate_hz})
    out = args.out or "modes.csv"
    header = ["mode_label", "frequency_hz", "decay_rate_hz", "t1_s"]
    header += [f"region_{r}" for r in region_names]
    _write_csv(out, header, rows)
    outputs = [out]
    if args.plot:
        from . import plots

        outputs.append(plots.plot_modes(data, _plot_path(out), region_names))
    resolved = {"delta_override": args.delta, "diagnostics": built.diagnostics,
                "n_coords": built.model.n_coords}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {', '.join(outputs)} ({len(rows)} modes)")
    return EXIT_OK


def _cmd_transfer(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    built = build_circuit(netlist)
    _validation_gate(built.model, args)
    model = built.model
    if args.ports:
        names = [p.strip() for p in args.ports.split(",")]
        model = select_ports(model, names)
    port_names = model.port_labels
    freqs = np.linspace(args.fmin, args.fmax, args.points)
    pairs = [(a, b) for a in range(len(port_names)) for b in range(len(port_names)) if a <= b]
    columns = {f"{port_names[a]}_{port_names[b]}": [] for a, b in pairs}
    for f in freqs:
        s = 2j * math.pi * f
        try:
            if args.kind == "s":
                mat = scattering(model, s, args.z0).matrix
            elif args.kind == "z":
                mat = impedance(model, s).matrix
            else:
                mat = model_admittance(model, s).matrix
        except PsoError:
            mat = np.full((len(port_names), len(port_names)), complex("nan"))
        for a, b in pairs:
            columns[f"{port_names[a]}_{port_names[b]}"].append(mat[a, b])
    out = args.out or "transfer.csv"
    header = ["frequency_hz"]
    for name in columns:
        header += [f"re_{args.kind}_{name}", f"im_{args.kind}_{name}", f"abs_{args.kind}_{name}"]
    rows = []
    for i, f in enumerate(freqs):
        row = [float(f)]
        for series in columns.values():
            v = series[i]
            row += [v.real, v.imag, abs(v)]
        rows.append(row)
    _write_csv(out, header, rows)
    outputs = [out]
    if args.plot:
        from . import plots

        outputs.append(plots.plot_transfer(freqs, columns, _plot_path(out), args.kind))
    resolved = {"kind": args.kind, "z0": args.z0, "ports": list(port_names),
                "grid_hz": [args.fmin, args.fmax, args.points],
                "diagnostics": built.diagnostics}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {', '.join(outputs)} ({len(rows)} frequency points)")
    return EXIT_OK


def _sweep_spec_from(args, netlist):
    if args.param:
        if args.start is None or args.stop is None or args.points is None:
            raise _UsageError("--param requires --from, --to and --points")
        spec = SweepStmt(args.param, args.start, args.stop, args.points, args.log)
    else:
        declared = netlist.sweeps()
        if not declared:
            raise _UsageError("netlist declares no sweep; pass --param/--from/--to/--points")
        spec = declared[0]
    try:
        netlist.resolve_param(spec.path)
    except KeyError as exc:
        raise _UsageError(str(exc))
    return spec


def _admittance_overlay(which):
    params = {"fig1a": TABLE_A, "fig1b": TABLE_B}[which]
    fit = fit_reactances(which, params)

    def overlay(point_netlist, value):
        est = admittance_t1(which, params, value, fit)
        return {"t1_admittance_s": est["t1"],
                "omega_q_admittance_rad_s": est["omega_q"]}

    return overlay


def _cmd_sweep(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    spec = _sweep_spec_from(args, netlist)
    overlay = _admittance_overlay(args.admittance_model) if args.admittance_model else None
    result = run_sweep(netlist, spec, band=(args.fmin, args.fmax), overlay=overlay)
    labels = result.labels()
    region_names = result.region_names
    header = ["param_value"]
    for label in labels:
        header += [f"{label}_frequency_hz", f"{label}_decay_rate_hz", f"{label}_t1_s"]
        header += [f"{label}_region_{r}" for r in region_names]
    extra_keys = sorted({k for p in result.points for k in p.extras})
    header += extra_keys
    rows = []
    for p in result.points:
        row = [p.value]
        for label in labels:
            try:
                m = p.mode(label)
                row += [m.frequency_hz, m.decay_rate_hz, m.t1_s]
                row += list(m.rsv.entries) if m.rsv else [float("nan")] * len(region_names)
            except KeyError:
                row += [float("nan")] * (3 + len(region_names))
        row += [p.extras.get(k, float("nan")) for k in extra_keys]
        rows.append(row)
    out = args.out or "sweep.csv"
    _write_csv(out, header, rows)
    outputs = [out]
    if args.plot:
        from . import plots

        outputs.append(plots.plot_sweep(result, _plot_path(out), result.param_path))
    resolved = {"sweep": result.provenance,
                "tracking_warnings": [str(w) for w in result.warnings],
                "failures": result.failures}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {', '.join(outputs)} ({len(rows)} points, "
          f"{len(result.warnings)} tracking warnings, {len(result.failures)} failures)")
    return EXIT_OK


def _cmd_support(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    built = build_circuit(netlist)
    _validation_gate(built.model, args)
    if not built.region_map:
        raise PsoError("netlist declares no regions; support vectors need regions")
    solution = eigenmodes(built.model)
    keep = [i for i, m in enumerate(solution)
            if args.fmin <= m.frequency_hz <= args.fmax]
    from .model import EigenSolution

    subset = EigenSolution(tuple(solution[i] for i in keep), solution.coord_labels)
    labels = label_by_region(subset, built.region_map)
    rsvs = regional_support(subset, built.region_map)
    region_names = tuple(built.region_map.keys())
    rows = []
    for label, mode, rsv in zip(labels, subset, rsvs):
        rows.append([label, mode.frequency_hz, mode.decay_rate_hz, mode.t1_seconds,
                     *rsv.entries, rsv.distance_to_basis, *rsv.barycentric_xy,
                     rsv.covered_weight])
    out = args.out or "support.csv"
    header = ["mode_label", "frequency_hz", "decay_rate_hz", "t1_s"]
    header += [f"rsv_{r}" for r in region_names]
    header += ["distance_to_basis", "bary_x", "bary_y", "covered_weight"]
    _write_csv(out, header, rows)
    outputs = [out]
    if args.plot:
        from . import plots

        outputs.append(plots.plot_support(rsvs, labels, _plot_path(out)))
    resolved = {"band_hz": [args.fmin, args.fmax], "diagnostics": built.diagnostics}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {', '.join(outputs)} ({len(rows)} modes)")
    return EXIT_OK


def _cmd_convergence(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    deltas = [parse_value(d.strip()) for d in args.deltas.split(",")]
    spec = _sweep_spec_from(args, netlist)
    rows = convergence_study(netlist, deltas, spec, band=(args.fmin, args.fmax))
    out = args.out or "convergence.csv"
    header = ["delta_m", "param_value", "mode_label", "freq_rel_diff", "t1_rel_diff",
              "freq_ref_hz", "t1_ref_s"]
    _write_csv(out, header, [[r.delta, r.value, r.label, r.freq_rel_diff, r.t1_rel_diff,
                              r.freq_ref, r.t1_ref] for r in rows])
    outputs = [out]
    if args.plot:
        from . import plots

        outputs.append(plots.plot_convergence(rows, _plot_path(out), spec.path))
    resolved = {"deltas_m": deltas, "reference_m": min(deltas),
                "sweep": {"path": spec.path, "start": spec.start,
                          "stop": spec.stop, "points": spec.points}}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {', '.join(outputs)} ({len(rows)} comparisons)")
    return EXIT_OK


def _cmd_admittance(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    params = {"fig1a": TABLE_A, "fig1b": TABLE_B}[args.circuit]
    freqs = np.linspace(args.fmin, args.fmax, args.points)
    ye = np.array([environment_admittance(args.circuit, params, 2 * math.pi * f)
                   for f in freqs])
    magnitude = np.abs(ye)
    mask = magnitude > 1e3 * np.median(magnitude)
    fit = fit_reactances(args.circuit, params, args.fit_lo, args.fit_hi)
    out = args.out or "admittance.csv"
    rows = [[float(f), v.real, v.imag, int(m)] for f, v, m in zip(freqs, ye, mask)]
    _write_csv(out, ["frequency_hz", "re_ye_s", "im_ye_s", "near_pole"], rows)
    outputs = [out]
    if args.plot:
        from . import plots

        keep = ~mask
        outputs.append(plots.plot_admittance(freqs[keep], ye[keep], _plot_path(out), fit))
    resolved = {
        "circuit": args.circuit,
        "reactance_fit": {"c_e_farad": fit.c_e, "l_e_inv_per_henry": fit.l_e_inv,
                          "window_hz": list(fit.fit_window), "residual": fit.residual},
    }
    if args.lj:
        est = admittance_t1(args.circuit, params, args.lj, fit)
        resolved["admittance_t1"] = {"lj_henry": args.lj, **est}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {', '.join(outputs)}; C_e = {fit.c_e * 1e15:.3f} fF, "
          f"1/L_e = {fit.l_e_inv:.3e} /H (residual {fit.residual:.2e})")
    return EXIT_OK


def _cmd_lagrangian(args):
    netlist, origin = _load_netlist(args.netlist, args.delta)
    built = build_circuit(netlist)
    _validation_gate(built.model, args)
    junctions = []
    for spec in args.junction:
        try:
            n1, n2, ej = spec.split(":")
        except ValueError:
            raise _UsageError(f"junction spec {spec!r} must be n1:n2:EJ")
        vec = built.maps.m(n1, n2)
        junctions.append({"edge_vector": vec.tolist(), "ej": parse_value(ej)})
    desc = export_lagrangian(built.model, junctions)
    out = args.out or "lagrangian.json"
    Path(out).write_text(desc.to_json() + "\n")
    outputs = [out]
    resolved = {"junctions": args.junction, "n_coords": built.model.n_coords}
    _write_manifest(out, _manifest(args, origin, netlist, resolved, outputs))
    print(f"wrote {out} ({len(junctions)} cosine terms)")
    return EXIT_OK


_COMMANDS = {
    "modes": _cmd_modes,
    "transfer": _cmd_transfer,
    "sweep": _cmd_sweep,
    "support": _cmd_support,
    "convergence": _cmd_convergence,
    "admittance": _cmd_admittance,
    "lagrangian": _cmd_lagrangian,
}


def _error_record(code, message, location=None):
    record = {"code": code, "message": message}
    if location:
        record["location"] = location
    print(json.dumps(record), file=sys.stderr)


def execute(argv) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        _error_record(EXIT_USAGE, str(exc))
        return EXIT_USAGE
    except NetlistError as exc:
        loc = {"line": exc.line, "col": exc.col} if exc.line is not None else None
        _error_record(EXIT_PARSE, str(exc), loc)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        _error_record(EXIT_PARSE, str(exc))
        return EXIT_PARSE
    except PsoError as exc:
        _error_record(EXIT_NUMERIC, str(exc))
        return EXIT_NUMERIC


def main():
    sys.exit(execute(sys.argv[1:]))


if __name__ == "__main__":
    main()
