"""Drivers that regenerate the protocol's quantitative results as data tables.

Every driver is a thin composition of protocol runs and tomography; there is
no figure-specific physics here.  Exact rows (``shots = 0``) are
deterministic.  Finite-shot rows emulate the experiment: the true joint
outcome distribution over (ancilla 1, ancilla 2, target readout) is sampled,
passed through the per-qubit readout confusion, corrected by its inverse,
and the process matrix is reconstructed from the corrected statistics.
Error bars come from linear propagation of the multinomial sampling
covariance through the estimation pipeline.

Rows are written as CSV with header ``p,p_u,tau2_us,metric,value,P_DN,stderr``
at 12 significant digits, plus a JSON run manifest (config echo and hash,
seed, timestamp, tool version).  A grid point whose auto-tuned reversal
strength is infeasible is emitted with empty numeric fields and the note
``infeasible_pu`` in the stderr column.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .dynamics import PAULI_I, pure_dephasing, rotation_matrix
from .hilbert import partial_trace_qubit
from .protocol import (
    DEFAULT_KAPPA1,
    DEFAULT_KAPPA3,
    DEFAULT_KAPPA_PHI,
    DeviceParams,
    InfeasibleUncollapseError,
    ProtocolConfig,
    free_decay_baseline,
    net_dynamic_phase,
    run_protocol,
    run_statevector,
)
from .tomography import (
    INPUT_LABELS,
    TOMO_SETTINGS,
    FidelityReport,
    ReadoutModel,
    compensate_phase,
    confusion_matrix,
    correct_readout,
    density_from_bloch,
    fidelity_report,
    input_states,
    reconstruct_chi,
    state_to_density,
    tomography_rotation,
)

DEFAULT_P_GRID = tuple(0.125 * i for i in range(8))
DEFAULT_TAU2_LIST = (0.9, 1.7, 3.0)

PI_X = rotation_matrix("x", np.pi)
IDENTITY = PAULI_I

CSV_HEADER = "p,p_u,tau2_us,metric,value,P_DN,stderr"

_METRIC_KEYS = {"F": "F", "fav": "fav_sc", "favp": "favp_sc"}


@dataclass(frozen=True)
class SweepSpec:
    """Grid and evaluation options shared by all figure drivers."""

    p_grid: tuple[float, ...] = DEFAULT_P_GRID
    tau2_list_us: tuple[float, ...] = DEFAULT_TAU2_LIST
    backend: str = "analytic"
    metric: str = "F"
    kappa1: float = DEFAULT_KAPPA1
    kappa2: float | None = None
    kappa3: float = DEFAULT_KAPPA3
    kappa_phi: float = DEFAULT_KAPPA_PHI
    device: DeviceParams = DeviceParams()
    shots: int = 0
    seed: int = 1
    nearest_psd: bool = False

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.p_grid):
            raise ValueError("grid values must lie in [0, 1]")
        if any(t < 0 for t in self.tau2_list_us):
            raise ValueError("storage times must be nonnegative")
        if self.shots < 0:
            raise ValueError("shots must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.backend not in ("analytic", "statevector"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.metric not in _METRIC_KEYS:
            raise ValueError(f"metric must be one of {sorted(_METRIC_KEYS)}")


@dataclass(frozen=True)
class SweepRow:
    p: float | None
    pu: float | None
    tau2_us: float
    metric: str
    value: float | None
    p_dn: float | None
    stderr: float | None = None
    note: str = ""


def _metric_key(metric: str) -> str:
    return _METRIC_KEYS[metric]


def _metric_from_report(report: FidelityReport, metric: str) -> float:
    return {
        "F": report.f,
        "fav": report.f_av_scaled,
        "favp": report.f_avp_scaled,
    }[metric]


def _base_config(
    spec: SweepSpec,
    p: float,
    pu,
    tau2_us: float,
    storage: bool,
    kappa2: float | None = None,
) -> ProtocolConfig:
    return ProtocolConfig(
        p=p,
        pu=pu,
        tau2_us=tau2_us,
        storage_enabled=storage,
        kappa1=spec.kappa1,
        kappa2=spec.kappa2 if kappa2 is None else kappa2,
        kappa3=spec.kappa3,
        kappa_phi=spec.kappa_phi,
        device=spec.device,
    )


def protocol_pairs(
    config: ProtocolConfig,
    backend: str = "analytic",
    compensate: bool = True,
    free_decay: bool = False,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], list[float]]:
    """Tomography input/output pairs and per-input selection probabilities."""
    pairs = []
    p_dns = []
    for psi in input_states():
        cfg = config.with_input(psi[0], psi[1])
        res = (
            free_decay_baseline(cfg, backend)
            if free_decay
            else run_protocol(cfg, backend)
        )
        rho_u = res.rho
        if compensate:
            rho_u = compensate_phase(rho_u, res.net_phase)
        pairs.append((state_to_density(psi), rho_u))
        p_dns.append(res.p_dn)
    return pairs, p_dns


def process_matrix(
    config: ProtocolConfig,
    backend: str = "analytic",
    compensate: bool = True,
    free_decay: bool = False,
) -> np.ndarray:
    """Process matrix of the protocol (or the free-decay baseline)."""
    pairs, _ = protocol_pairs(config, backend, compensate, free_decay)
    return reconstruct_chi(pairs)


def _row_rng(seed: int, index: int) -> np.random.Generator:
    # Per-row sub-seeding keeps parallel and serial evaluation bit-identical.
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _readout_models(device: DeviceParams) -> list[ReadoutModel]:
    # Joint outcome index order is (Q2, Q3, Q1), Q2 slowest.
    return [
        ReadoutModel(*device.readout_q2),
        ReadoutModel(*device.readout_q3),
        ReadoutModel(*device.readout_q1),
    ]


def _outcome_class_matrices(ensemble, kappa_phi: float) -> dict[tuple[int, int], np.ndarray]:
    """Unnormalized target-qubit matrix for each (Q2, Q3) outcome class."""
    classes = {
        (c2, c3): np.zeros((2, 2), dtype=np.complex128)
        for c2 in (0, 1)
        for c3 in (0, 1)
    }
    for branch in ensemble.branches:
        key = (branch.outcome_of("Q2"), branch.outcome_of("Q3"))
        classes[key] += partial_trace_qubit(branch.state, "Q1")
    return {k: pure_dephasing(v, kappa_phi) for k, v in classes.items()}


def _sample_frequencies(
    config: ProtocolConfig,
    confusion: np.ndarray,
    shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Observed outcome frequencies, shape (input, setting, joint outcome)."""
    freqs = np.zeros((4, len(TOMO_SETTINGS), 8))
    for k, psi in enumerate(input_states()):
        cfg = config.with_input(psi[0], psi[1])
        res = run_statevector(cfg, keep_rejected=True)
        classes = _outcome_class_matrices(res.ensemble, cfg.kappa_phi)
        for j, setting in enumerate(TOMO_SETTINGS):
            r = tomography_rotation(setting)
            true8 = np.zeros(8)
            for (c2, c3), rho_c in classes.items():
                rot = r @ rho_c @ r.conj().T
                true8[c2 * 4 + c3 * 2 + 0] = max(rot[0, 0].real, 0.0)
                true8[c2 * 4 + c3 * 2 + 1] = max(rot[1, 1].real, 0.0)
            observed = confusion @ true8
            observed = np.clip(observed, 0.0, None)
            observed /= observed.sum()
            freqs[k, j] = rng.multinomial(shots, observed) / shots
    return freqs


def _estimates_from_frequencies(
    freqs: np.ndarray,
    confusion: np.ndarray,
    net_phase: float,
    psd: bool,
) -> dict[str, float]:
    """Full estimation pipeline: correct, assemble states, reconstruct, score."""
    pairs = []
    out: dict[str, float] = {}
    for k, psi in enumerate(input_states()):
        corrected = {}
        ps_values = []
        for j, setting in enumerate(TOMO_SETTINGS):
            vec, _ = correct_readout(freqs[k, j], confusion, clip=False)
            corrected[setting] = (vec[0], vec[1])  # double-null slots (g,g,.)
            ps_values.append(vec[0] + vec[1])
        z = corrected["id"][0] - corrected["id"][1]
        y = corrected["x90"][0] - corrected["x90"][1]
        x = corrected["y90"][1] - corrected["y90"][0]
        ps = float(np.mean(ps_values))
        rho_u = compensate_phase(density_from_bloch(x, y, z, ps), net_phase)
        pairs.append((state_to_density(psi), rho_u))
        out[f"P_DN_{INPUT_LABELS[k]}"] = ps
    chi = reconstruct_chi(pairs, psd=psd)
    report = fidelity_report(chi, PI_X)
    out["F"] = report.f
    out["fav_sc"] = report.f_av_scaled
    out["favp_sc"] = report.f_avp_scaled
    out["P_DN_avg"] = report.trace_chi
    return out


def _mc_point(
    config: ProtocolConfig, spec: SweepSpec, rng: np.random.Generator
) -> dict[str, tuple[float, float]]:
    """Monte Carlo estimates with propagated standard errors for one grid point."""
    confusion = confusion_matrix(_readout_models(config.device))
    freqs = _sample_frequencies(config, confusion, spec.shots, rng)
    net = net_dynamic_phase(config)

    def estimates(f: np.ndarray) -> dict[str, float]:
        return _estimates_from_frequencies(f, confusion, net, spec.nearest_psd)

    values = estimates(freqs)
    keys = list(values)
    grads = {key: np.zeros_like(freqs) for key in keys}
    h = 1e-6
    for k in range(freqs.shape[0]):
        for j in range(freqs.shape[1]):
            for o in range(freqs.shape[2]):
                fp = freqs.copy()
                fp[k, j, o] += h
                fm = freqs.copy()
                fm[k, j, o] -= h
                vp = estimates(fp)
                vm = estimates(fm)
                for key in keys:
                    grads[key][k, j, o] = (vp[key] - vm[key]) / (2.0 * h)
    result = {}
    for key in keys:
        var = 0.0
        for k in range(freqs.shape[0]):
            for j in range(freqs.shape[1]):
                f = freqs[k, j]
                g = grads[key][k, j]
                cov = (np.diag(f) - np.outer(f, f)) / spec.shots
                var += float(g @ cov @ g)
        result[key] = (values[key], float(np.sqrt(max(var, 0.0))))
    return result


def fig2b_sweep(spec: SweepSpec | None = None) -> list[SweepRow]:
    """No-storage fidelity vs measurement strength with matched reversal."""
    spec = spec or SweepSpec()
    key = _metric_key(spec.metric)
    rows = []
    for idx, p in enumerate(spec.p_grid):
        cfg = _base_config(spec, p=p, pu=p, tau2_us=0.0, storage=False, kappa2=1.0)
        if spec.shots > 0:
            est = _mc_point(cfg, spec, _row_rng(spec.seed, idx))
            value, se = est[key]
            rows.append(SweepRow(p, p, 0.0, key, value, est["P_DN_avg"][0], se))
        else:
            chi = process_matrix(cfg, spec.backend)
            report = fidelity_report(chi, PI_X)
            rows.append(
                SweepRow(
                    p, p, 0.0, key, _metric_from_report(report, spec.metric),
                    report.trace_chi,
                )
            )
    return rows


def _free_decay_row(spec: SweepSpec, tau2_us: float, key: str) -> SweepRow:
    cfg = _base_config(spec, p=0.0, pu=0.0, tau2_us=tau2_us, storage=True)
    chi = process_matrix(cfg, spec.backend, free_decay=True)
    report = fidelity_report(chi, IDENTITY)
    metric = {"F": report.f, "fav_sc": report.f_av_scaled, "favp_sc": report.f_avp_scaled}[key]
    return SweepRow(None, None, tau2_us, f"free_decay_{key}", metric, report.trace_chi)


def fig3a_sweep(spec: SweepSpec | None = None) -> list[SweepRow]:
    """Storage fidelity vs measurement strength, with free-decay baselines."""
    spec = spec or SweepSpec()
    key = _metric_key(spec.metric)
    rows = []
    idx = 0
    for tau2 in spec.tau2_list_us:
        for p in spec.p_grid:
            cfg = _base_config(spec, p=p, pu="auto", tau2_us=tau2, storage=True)
            try:
                pu = cfg.resolved_pu()
            except InfeasibleUncollapseError:
                rows.append(
                    SweepRow(p, None, tau2, key, None, None, note="infeasible_pu")
                )
                idx += 1
                continue
            if spec.shots > 0:
                est = _mc_point(cfg, spec, _row_rng(spec.seed, idx))
                value, se = est[key]
                rows.append(SweepRow(p, pu, tau2, key, value, est["P_DN_avg"][0], se))
            else:
                chi = process_matrix(cfg, spec.backend)
                report = fidelity_report(chi, PI_X)
                rows.append(
                    SweepRow(
                        p, pu, tau2, key, _metric_from_report(report, spec.metric),
                        report.trace_chi,
                    )
                )
            idx += 1
        rows.append(_free_decay_row(spec, tau2, key))
    return rows


def fig3b_densities(
    p: float = 0.75,
    tau2_us: float = 3.0,
    spec: SweepSpec | None = None,
) -> dict[tuple[str, str], np.ndarray]:
    """Normalized final density matrices for the four inputs, with and without
    the detection protocol, after storage of duration ``tau2_us``."""
    spec = spec or SweepSpec()
    out: dict[tuple[str, str], np.ndarray] = {}
    cfg = _base_config(spec, p=p, pu="auto", tau2_us=tau2_us, storage=True)
    for label, psi in zip(INPUT_LABELS, input_states()):
        c = cfg.with_input(psi[0], psi[1])
        qed = run_protocol(c, spec.backend)
        free = free_decay_baseline(c, spec.backend)
        out[(label, "qed")] = (
            compensate_phase(qed.rho, qed.net_phase) / qed.p_dn
        )
        out[(label, "free_decay")] = (
            compensate_phase(free.rho, free.net_phase) / free.p_dn
        )
    return out


def fig4_pdn(spec: SweepSpec | None = None) -> list[SweepRow]:
    """Double-null probability vs measurement strength: uniform-input average
    (the process-matrix trace) plus the four per-input values."""
    spec = spec or SweepSpec()
    rows = []
    idx = 0
    for tau2 in spec.tau2_list_us:
        for p in spec.p_grid:
            cfg = _base_config(spec, p=p, pu="auto", tau2_us=tau2, storage=True)
            try:
                pu = cfg.resolved_pu()
            except InfeasibleUncollapseError:
                rows.append(
                    SweepRow(p, None, tau2, "P_DN_avg", None, None, note="infeasible_pu")
                )
                idx += 1
                continue
            if spec.shots > 0:
                est = _mc_point(cfg, spec, _row_rng(spec.seed, idx))
                avg, avg_se = est["P_DN_avg"]
                rows.append(SweepRow(p, pu, tau2, "P_DN_avg", avg, avg, avg_se))
                for label in INPUT_LABELS:
                    value, se = est[f"P_DN_{label}"]
                    rows.append(SweepRow(p, pu, tau2, f"P_DN_{label}", value, avg, se))
            else:
                pairs, p_dns = protocol_pairs(cfg, spec.backend)
                avg = float(np.real(np.trace(reconstruct_chi(pairs))))
                rows.append(SweepRow(p, pu, tau2, "P_DN_avg", avg, avg))
                for label, value in zip(INPUT_LABELS, p_dns):
                    rows.append(SweepRow(p, pu, tau2, f"P_DN_{label}", value, avg))
            idx += 1
    return rows


def figS1_sweep(spec: SweepSpec | None = None) -> list[SweepRow]:
    """Scaled Bloch-sphere-averaged fidelities, both weightings, per grid point."""
    spec = spec or SweepSpec()
    rows = []
    idx = 0
    for tau2 in spec.tau2_list_us:
        for p in spec.p_grid:
            cfg = _base_config(spec, p=p, pu="auto", tau2_us=tau2, storage=True)
            try:
                pu = cfg.resolved_pu()
            except InfeasibleUncollapseError:
                for key in ("fav_sc", "favp_sc"):
                    rows.append(
                        SweepRow(p, None, tau2, key, None, None, note="infeasible_pu")
                    )
                idx += 1
                continue
            if spec.shots > 0:
                est = _mc_point(cfg, spec, _row_rng(spec.seed, idx))
                for key in ("fav_sc", "favp_sc"):
                    value, se = est[key]
                    rows.append(
                        SweepRow(p, pu, tau2, key, value, est["P_DN_avg"][0], se)
                    )
            else:
                chi = process_matrix(cfg, spec.backend)
                report = fidelity_report(chi, PI_X)
                rows.append(
                    SweepRow(p, pu, tau2, "fav_sc", report.f_av_scaled, report.trace_chi)
                )
                rows.append(
                    SweepRow(p, pu, tau2, "favp_sc", report.f_avp_scaled, report.trace_chi)
                )
            idx += 1
        for key in ("fav_sc", "favp_sc"):
            rows.append(_free_decay_row(spec, tau2, key))
    return rows


def monte_carlo(spec: SweepSpec) -> list[SweepRow]:
    """Finite-shot storage sweep with readout emulation and error bars."""
    if spec.shots <= 0:
        raise ValueError("monte_carlo requires shots > 0")
    return fig3a_sweep(spec)


FIGURES = {
    "fig2b": fig2b_sweep,
    "fig3a": fig3a_sweep,
    "fig4": fig4_pdn,
    "figS1": figS1_sweep,
}


def _fmt(value, precision: int = 12) -> str:
    if value is None:
        return ""
    return f"{value:.{precision}g}"


def rows_to_csv(rows: list[SweepRow], precision: int = 12) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        stderr_field = r.note if r.note else _fmt(r.stderr, precision)
        lines.append(
            ",".join(
                [
                    _fmt(r.p, precision),
                    _fmt(r.pu, precision),
                    _fmt(r.tau2_us, precision),
                    r.metric,
                    _fmt(r.value, precision),
                    _fmt(r.p_dn, precision),
                    stderr_field,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_csv(rows: list[SweepRow], path, precision: int = 12) -> None:
    with open(path, "w", newline="") as f:
        f.write(rows_to_csv(rows, precision))


def manifest_payload(config_echo: dict, seed: int) -> dict:
    canonical = json.dumps(config_echo, sort_keys=True, separators=(",", ":"))
    return {
        "config": config_echo,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "tool_version": __version__,
    }


def write_manifest(path, spec: SweepSpec, figure: str) -> None:
    echo = asdict(spec)
    echo["figure"] = figure
    payload = manifest_payload(echo, spec.seed)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def spec_with(spec: SweepSpec, **kwargs) -> SweepSpec:
    return replace(spec, **kwargs)
