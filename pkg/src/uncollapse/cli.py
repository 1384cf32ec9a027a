"""Command-line entry point for sweeps, single runs, and process tomography.

Configuration is a JSON document with sections ``device``, ``protocol``,
``sweep``, ``monte_carlo`` and ``output``; unknown keys are rejected and all
ranges are validated at load.  Command-line flags override file values.

Exit codes: 0 success, 2 configuration error, 3 infeasible auto-tuned
reversal strength, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .dynamics import SwapPhases
from .experiments import (
    FIGURES,
    PI_X,
    SweepSpec,
    process_matrix,
    write_csv,
    write_manifest,
)
from .protocol import (
    DeviceParams,
    InfeasibleUncollapseError,
    ProtocolConfig,
    ProtocolPhases,
    run_protocol,
)
from .tomography import INPUT_LABELS, fidelity_report, input_states


class ConfigError(ValueError):
    """A configuration file or flag value is invalid."""


_TOP_KEYS = {"device", "protocol", "sweep", "monte_carlo", "output"}
_ELEMENT_KEYS = {"freq_ghz", "t1_us", "t2_us", "t_se_us"}
_DEVICE_KEYS = {
    "q1",
    "q2",
    "q3",
    "bus",
    "m1",
    "coupling_q1_b_mhz",
    "coupling_q2_b_mhz",
    "coupling_q3_b_mhz",
    "coupling_q1_m1_mhz",
    "delta_f_mhz",
    "readout_q1",
    "readout_q2",
    "readout_q3",
}
_PROTOCOL_KEYS = {
    "p",
    "p_u",
    "tau2_us",
    "storage_enabled",
    "kappa1",
    "kappa2",
    "kappa3",
    "kappa_phi",
    "input",
    "phases",
    "resonator_dim",
}
_PHASE_GROUPS = {"swap1", "storage", "swap2"}
_PHASE_KEYS = {"entry", "aux", "completion"}
_SWEEP_KEYS = {"p_grid", "tau2_list_us", "backend", "metric"}
_MC_KEYS = {"shots", "seed", "nearest_psd"}
_OUTPUT_KEYS = {"csv", "manifest", "precision"}

INPUT_AMPLITUDES = dict(zip(INPUT_LABELS, input_states()))


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config root")
    for name, keys in (
        ("device", _DEVICE_KEYS),
        ("protocol", _PROTOCOL_KEYS),
        ("sweep", _SWEEP_KEYS),
        ("monte_carlo", _MC_KEYS),
        ("output", _OUTPUT_KEYS),
    ):
        if name in doc:
            if not isinstance(doc[name], dict):
                raise ConfigError(f"section {name!r} must be an object")
            _check_keys(doc[name], keys, f"section {name!r}")
    if "protocol" in doc and "phases" in doc["protocol"]:
        phases = doc["protocol"]["phases"]
        _check_keys(phases, _PHASE_GROUPS, "protocol.phases")
        for group, values in phases.items():
            _check_keys(values, _PHASE_KEYS, f"protocol.phases.{group}")
    return doc


def build_device(doc: dict) -> DeviceParams:
    section = doc.get("device", {})
    kwargs = {}
    try:
        for name in ("q1", "q2", "q3", "bus", "m1"):
            if name in section:
                _check_keys(section[name], _ELEMENT_KEYS, f"device.{name}")
                base = getattr(DeviceParams(), name)
                kwargs[name] = replace(base, **section[name])
        for name in section:
            if name.startswith("coupling") or name == "delta_f_mhz":
                kwargs[name] = float(section[name])
            elif name.startswith("readout"):
                kwargs[name] = tuple(float(v) for v in section[name])
        return DeviceParams(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid device section: {exc}") from exc


def _phases_from(section: dict) -> ProtocolPhases:
    groups = {}
    for name in _PHASE_GROUPS:
        if name in section:
            groups[name] = SwapPhases(**section[name])
    return ProtocolPhases(**groups)


def build_protocol_config(doc: dict, args: argparse.Namespace) -> ProtocolConfig:
    section = dict(doc.get("protocol", {}))
    device = build_device(doc)

    def flag(name, key=None):
        value = getattr(args, name, None)
        if value is not None:
            section[key or name] = value

    flag("p")
    flag("pu", "p_u")
    flag("tau2", "tau2_us")
    flag("kappa1")
    flag("kappa2")
    flag("kappa3")
    flag("kappa_phi")
    flag("input")
    if getattr(args, "no_storage", False):
        section["storage_enabled"] = False

    label = section.pop("input", "g+e")
    if label not in INPUT_AMPLITUDES:
        raise ConfigError(
            f"unknown input state {label!r}; choose from {sorted(INPUT_AMPLITUDES)}"
        )
    psi = INPUT_AMPLITUDES[label]
    pu = section.pop("p_u", "auto")
    if isinstance(pu, str) and pu != "auto":
        try:
            pu = float(pu)
        except ValueError:
            raise ConfigError(f"p_u must be a number or 'auto', got {pu!r}") from None
    phases = _phases_from(section.pop("phases", {}))
    try:
        return ProtocolConfig(
            alpha=psi[0],
            beta=psi[1],
            pu=pu,
            phases=phases,
            device=device,
            **section,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InfeasibleUncollapseError):
            raise
        raise ConfigError(f"invalid protocol section: {exc}") from exc


def build_sweep_spec(doc: dict, args: argparse.Namespace) -> SweepSpec:
    sweep = doc.get("sweep", {})
    mc = doc.get("monte_carlo", {})
    protocol = doc.get("protocol", {})
    kwargs: dict = {}
    if "p_grid" in sweep:
        kwargs["p_grid"] = tuple(float(v) for v in sweep["p_grid"])
    if "tau2_list_us" in sweep:
        kwargs["tau2_list_us"] = tuple(float(v) for v in sweep["tau2_list_us"])
    kwargs["backend"] = args.backend or sweep.get("backend", "analytic")
    kwargs["metric"] = args.metric or sweep.get("metric", "F")
    for name in ("kappa1", "kappa2", "kappa3", "kappa_phi"):
        if getattr(args, name, None) is not None:
            kwargs[name] = getattr(args, name)
        elif name in protocol:
            kwargs[name] = protocol[name]
    kwargs["shots"] = args.shots if args.shots is not None else int(mc.get("shots", 0))
    kwargs["seed"] = args.seed if args.seed is not None else int(mc.get("seed", 1))
    if "nearest_psd" in mc:
        kwargs["nearest_psd"] = bool(mc["nearest_psd"])
    kwargs["device"] = build_device(doc)
    try:
        return SweepSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep options: {exc}") from exc


def _sig(value: float, precision: int = 12) -> float:
    return float(f"{value:.{precision}g}")


def _matrix_json(m: np.ndarray, precision: int = 12) -> dict:
    return {
        "real": [[_sig(v.real, precision) for v in row] for row in m],
        "imag": [[_sig(v.imag, precision) for v in row] for row in m],
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    spec = build_sweep_spec(doc, args)
    rows = FIGURES[args.figure](spec)
    flagged = [r for r in rows if r.note]
    if flagged and not args.allow_partial:
        print(
            f"error: {len(flagged)} grid point(s) have an infeasible reversal "
            "strength; rerun with --allow-partial to emit flagged rows",
            file=sys.stderr,
        )
        return 3
    out = doc.get("output", {})
    precision = int(out.get("precision", 12))
    csv_path = args.out or out.get("csv", f"{args.figure}.csv")
    manifest_path = out.get("manifest", str(csv_path) + ".manifest.json")
    write_csv(rows, csv_path, precision)
    write_manifest(manifest_path, spec, args.figure)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    config = build_protocol_config(doc, args)
    result = run_protocol(config, args.backend or "analytic")
    payload = {
        "p": config.p,
        "p_u": _sig(config.resolved_pu()),
        "tau2_us": config.tau2_us,
        "P_DN": _sig(result.p_dn),
        "components": {k: _sig(v) for k, v in result.components.items()},
        "net_phase": _sig(result.net_phase),
        "rho_normalized": _matrix_json(result.normalized()),
        "rho_unnormalized": _matrix_json(result.rho),
    }
    print(json.dumps(payload, indent=2))
    return 0


def cmd_qpt(args: argparse.Namespace) -> int:
    doc = load_config(args.config)
    config = build_protocol_config(doc, args)
    backend = args.backend or "analytic"
    chi = process_matrix(config, backend)
    report = fidelity_report(chi, PI_X)
    free = None
    if args.with_free_decay:
        free_chi = process_matrix(config, backend, free_decay=True)
        free = fidelity_report(free_chi, np.eye(2)).f
    payload = {
        "p": config.p,
        "p_u": _sig(config.resolved_pu()),
        "tau2_us": config.tau2_us,
        "chi_normalized": _matrix_json(chi / np.real(np.trace(chi))),
        "F": _sig(report.f),
        "F_av": _sig(report.f_av),
        "F_avp": _sig(report.f_avp),
        "F_av_scaled": _sig(report.f_av_scaled),
        "F_avp_scaled": _sig(report.f_avp_scaled),
        "trace_chi": _sig(report.trace_chi),
    }
    if free is not None:
        payload["free_decay_F"] = _sig(free)
    print(json.dumps(payload, indent=2))
    return 0


def _add_protocol_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=float, help="measurement strength")
    parser.add_argument("--pu", help="reversal strength or 'auto'")
    parser.add_argument("--tau2", type=float, help="storage time in microseconds")
    parser.add_argument(
        "--input", choices=sorted(INPUT_AMPLITUDES), help="initial state"
    )
    parser.add_argument("--no-storage", action="store_true", help="omit step 2")
    parser.add_argument("--kappa1", type=float)
    parser.add_argument("--kappa2", type=float)
    parser.add_argument("--kappa3", type=float)
    parser.add_argument("--kappa-phi", dest="kappa_phi", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uncollapse",
        description="Post-selected weak-measurement error-detection simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="emit a sweep table as CSV + manifest")
    sweep.add_argument("figure", choices=sorted(FIGURES))
    sweep.add_argument("--config", help="JSON configuration file")
    sweep.add_argument("--out", help="output CSV path")
    sweep.add_argument("--backend", choices=("analytic", "statevector"))
    sweep.add_argument("--metric", choices=("F", "fav", "favp"))
    sweep.add_argument("--shots", type=int, help="0 for the exact backends")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--kappa1", type=float)
    sweep.add_argument("--kappa2", type=float)
    sweep.add_argument("--kappa3", type=float)
    sweep.add_argument("--kappa-phi", dest="kappa_phi", type=float)
    sweep.add_argument(
        "--allow-partial",
        action="store_true",
        help="emit flagged rows instead of failing on infeasible grid points",
    )
    sweep.set_defaults(func=cmd_sweep)

    run = sub.add_parser("run", help="single protocol run, JSON to stdout")
    run.add_argument("--config", help="JSON configuration file")
    run.add_argument("--backend", choices=("analytic", "statevector"))
    _add_protocol_flags(run)
    run.set_defaults(func=cmd_run)

    qpt = sub.add_parser("qpt", help="process tomography, JSON to stdout")
    qpt.add_argument("--config", help="JSON configuration file")
    qpt.add_argument("--backend", choices=("analytic", "statevector"))
    qpt.add_argument(
        "--with-free-decay",
        action="store_true",
        help="also report the free-decay baseline fidelity",
    )
    _add_protocol_flags(qpt)
    qpt.set_defaults(func=cmd_qpt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except InfeasibleUncollapseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
