"""The error-detection storage sequence on two interchangeable backends.

The sequence on the target qubit Q1 is: (1) a weak measurement of strength
``p`` realized as a partial swap into the bus resonator B, a full swap into
the ancilla Q2, and post-selection of Q2 in its ground state; (2) storage of
Q1's state in the memory resonator M1 for a time tau2, during which it can
relax; (3) a pi_x rotation followed by a reversal weak measurement of
strength ``p_u`` through B into Q3, again keeping null outcomes only.  The
final pi_x of the textbook reversal is omitted, so the ideal net operation
is a pi rotation about x, not the identity.

``run_statevector`` enumerates every relaxation branch of the full
32-dimensional composite space.  ``run_analytic`` evaluates the closed-form
model in which relaxation in steps 1-3 enters only through survival factors
kappa1, kappa2, kappa3 and pure dephasing through a single factor kappa_phi.
The two agree to numerical precision; tests lean on that cross-check.

Phase convention: configured swap phases enter the final state only through
the combination entry(1) + theta_s - entry(2), where theta_s collects the
storage swap phases plus 2*pi*delta_f*tau2 from detuned idling.  The storage
swap-back uses the inverse-swap phase convention, so a zero-phase round trip
is exactly phase neutral.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import pi
from typing import Mapping

import numpy as np

from .dynamics import (
    SwapPhases,
    amplitude_damping_branches,
    iswap,
    number_phase,
    partial_swap,
    project_ground,
    pure_dephasing,
    rotation,
    survival_factor,
)
from .hilbert import (
    BranchEnsemble,
    CompositeState,
    SubsystemLayout,
    partial_trace_qubit,
    reduce_to_qubit,
)


class InfeasibleUncollapseError(ValueError):
    """The reversal strength implied by the tuning rule lies outside [0, 1]."""


@dataclass(frozen=True)
class ElementParams:
    """Measured operating characteristics of one qubit or resonator."""

    freq_ghz: float
    t1_us: float
    t2_us: float | None = None
    t_se_us: float | None = None

    def __post_init__(self):
        if self.t1_us <= 0:
            raise ValueError("T1 must be positive")
        for t in (self.t2_us, self.t_se_us):
            if t is not None and t <= 0:
                raise ValueError("coherence times must be positive")


@dataclass(frozen=True)
class DeviceParams:
    """Device defaults: element coherence, couplings, and readout fidelities."""

    q1: ElementParams = ElementParams(6.01, 0.580, 0.140, 0.500)
    q2: ElementParams = ElementParams(5.90, 0.614, 0.100, 0.510)
    q3: ElementParams = ElementParams(5.81, 0.580, 0.150, 0.430)
    bus: ElementParams = ElementParams(6.24, 3.0, 5.0)
    m1: ElementParams = ElementParams(7.55, 2.5, 5.0)
    coupling_q1_b_mhz: float = 34.7
    coupling_q2_b_mhz: float = 34.1
    coupling_q3_b_mhz: float = 33.3
    coupling_q1_m1_mhz: float = 56.8
    delta_f_mhz: float = 0.0
    readout_q1: tuple[float, float] = (0.95, 0.89)
    readout_q2: tuple[float, float] = (0.94, 0.88)
    readout_q3: tuple[float, float] = (0.94, 0.91)

    def __post_init__(self):
        for fg, fe in (self.readout_q1, self.readout_q2, self.readout_q3):
            if not (0.5 <= fg <= 1.0 and 0.5 <= fe <= 1.0):
                raise ValueError("readout fidelities must lie in [0.5, 1]")
        for c in (
            self.coupling_q1_b_mhz,
            self.coupling_q2_b_mhz,
            self.coupling_q3_b_mhz,
            self.coupling_q1_m1_mhz,
        ):
            if c <= 0:
                raise ValueError("coupling strengths must be positive")


@dataclass(frozen=True)
class ProtocolPhases:
    """Dynamic phase knobs, one set per swap sequence.

    ``storage.entry + storage.aux`` is the swap-in phase, ``storage.completion``
    the swap-back phase; the detuning phase 2*pi*delta_f*tau2 is added on top.
    All default to zero; the closed-form model depends on them only through
    the net combination reported by :func:`net_dynamic_phase`.
    """

    swap1: SwapPhases = SwapPhases()
    storage: SwapPhases = SwapPhases()
    swap2: SwapPhases = SwapPhases()


DEFAULT_KAPPA1 = 0.985
DEFAULT_KAPPA3 = 0.985
DEFAULT_KAPPA_PHI = 0.95


@dataclass(frozen=True)
class ProtocolConfig:
    """Full parameter set for one protocol run.

    ``pu`` may be the string ``"auto"``, in which case the reversal strength
    follows the tuning rule 1 - p_u = (1 - p) * kappa1 * kappa2 / kappa3.
    ``kappa2=None`` derives the storage survival from tau2 and M1's T1.
    ``tau1_eff_ns`` / ``tau3_eff_ns`` record the effective step durations
    behind kappa1/kappa3 (see :func:`uncollapse.dynamics.survival_factor`);
    they do not otherwise enter the dynamics.
    """

    alpha: complex = 1 / np.sqrt(2)
    beta: complex = 1 / np.sqrt(2)
    p: float = 0.0
    pu: float | str = "auto"
    tau2_us: float = 0.0
    storage_enabled: bool = True
    kappa1: float = DEFAULT_KAPPA1
    kappa2: float | None = None
    kappa3: float = DEFAULT_KAPPA3
    kappa_phi: float = DEFAULT_KAPPA_PHI
    phases: ProtocolPhases = ProtocolPhases()
    device: DeviceParams = DeviceParams()
    resonator_dim: int = 2
    tau1_eff_ns: float | None = None
    tau3_eff_ns: float | None = None

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"input amplitudes must be normalized, |a|^2+|b|^2={norm}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"measurement strength must be in [0, 1], got {self.p}")
        if isinstance(self.pu, str):
            if self.pu != "auto":
                raise ValueError(f"pu must be a number or 'auto', got {self.pu!r}")
        elif not 0.0 <= self.pu <= 1.0:
            raise ValueError(f"reversal strength must be in [0, 1], got {self.pu}")
        if self.tau2_us < 0:
            raise ValueError("storage time must be nonnegative")
        for name in ("kappa1", "kappa3", "kappa_phi"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.kappa2 is not None and not 0.0 <= self.kappa2 <= 1.0:
            raise ValueError(f"kappa2 must be in [0, 1], got {self.kappa2}")

    def storage_kappa2(self) -> float:
        """Survival factor of the storage interval, from kappa2 or tau2/T1."""
        if self.kappa2 is not None:
            return self.kappa2
        return survival_factor(self.tau2_us, self.device.m1.t1_us)

    def resolved_kappa2(self) -> float:
        return self.storage_kappa2() if self.storage_enabled else 1.0

    def resolved_pu(self) -> float:
        if self.pu == "auto":
            return compute_pu(
                self.p, self.kappa1, self.resolved_kappa2(), self.kappa3
            )
        return float(self.pu)

    def with_input(self, alpha: complex, beta: complex) -> "ProtocolConfig":
        return replace(self, alpha=alpha, beta=beta)


@dataclass(frozen=True)
class ProtocolResult:
    """Unnormalized final qubit state plus selection-probability bookkeeping.

    ``rho`` is the 2x2 matrix in the (g, e) basis whose trace is ``p_dn``,
    the double-null probability.  ``components`` splits ``p_dn`` into the
    coherent no-jump weight and the incoherent jump weights ending in g / e.
    ``net_phase`` is the angle by which the (g, e) off-diagonal element is
    rotated relative to a zero-phase run.
    """

    rho: np.ndarray
    p_dn: float
    components: Mapping[str, float]
    net_phase: float
    ensemble: BranchEnsemble | None = None

    def normalized(self) -> np.ndarray:
        if self.p_dn <= 0:
            raise ZeroDivisionError("cannot normalize a zero-probability outcome")
        return self.rho / self.p_dn


def compute_pu(p: float, kappa1: float, kappa2: float, kappa3: float) -> float:
    """Reversal strength from the tuning rule 1 - p_u = (1-p) k1 k2 / k3."""
    for name, v in (("p", p), ("kappa1", kappa1), ("kappa2", kappa2), ("kappa3", kappa3)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    if kappa3 == 0.0:
        raise ValueError("kappa3 must be positive")
    pu = 1.0 - (1.0 - p) * kappa1 * kappa2 / kappa3
    if pu < -1e-12 or pu > 1.0 + 1e-12:
        raise InfeasibleUncollapseError(
            f"tuning rule gives p_u={pu}, outside [0, 1]"
        )
    return float(min(max(pu, 0.0), 1.0))


def _theta_s(config: ProtocolConfig) -> float:
    ph = config.phases.storage
    return (
        ph.entry
        + ph.aux
        + ph.completion
        + 2.0 * pi * config.device.delta_f_mhz * config.tau2_us
    )


def net_dynamic_phase(config: ProtocolConfig) -> float:
    """Net phase on the output coherence: entry(1) + theta_s - entry(2)."""
    theta_s = _theta_s(config) if config.storage_enabled else 0.0
    return config.phases.swap1.entry + theta_s - config.phases.swap2.entry


def closed_form_probabilities(
    alpha: complex, beta: complex, p: float, pu: float, gamma_tau: float
) -> tuple[float, float]:
    """No-jump and jump double-null probabilities for ideal steps 1 and 3.

    With the storage survival e^{-gamma_tau} these are

        P_nj = |alpha|^2 (1-p_u) + |beta|^2 (1-p) e^{-gamma_tau}
        P_j  = |beta|^2 (1-p) (1-p_u) (1 - e^{-gamma_tau})

    and reduce to the matched-tuning forms when 1-p_u = (1-p) e^{-gamma_tau}.
    """
    if not 0.0 <= p <= 1.0 or not 0.0 <= pu <= 1.0:
        raise ValueError("strengths must be in [0, 1]")
    if gamma_tau < 0:
        raise ValueError("gamma*tau must be nonnegative")
    surv = np.exp(-gamma_tau)
    aa, bb = abs(alpha) ** 2, abs(beta) ** 2
    p_nj = aa * (1.0 - pu) + bb * (1.0 - p) * surv
    p_j = bb * (1.0 - p) * (1.0 - pu) * (1.0 - surv)
    return float(p_nj), float(p_j)


def run_analytic(config: ProtocolConfig) -> ProtocolResult:
    """Closed-form final state: coherent no-jump part plus g/e jump mixtures."""
    p = config.p
    pu = config.resolved_pu()
    k1, k2, k3 = config.kappa1, config.resolved_kappa2(), config.kappa3
    aa, bb = abs(config.alpha) ** 2, abs(config.beta) ** 2
    a2 = k3 * (1.0 - pu)  # surviving |e> weight (no-jump path of alpha)
    b2 = k1 * k2 * (1.0 - p)  # surviving |g> weight (no-jump path of beta)
    q = (1.0 - k1) + k1 * (1.0 - p) * (1.0 - k2)  # pre-pi_x jump probability
    p_nj = aa * a2 + bb * b2
    p_g = (1.0 - k3) * (aa + bb * q)
    p_e = bb * q * a2
    net = net_dynamic_phase(config)
    psi = np.array(
        [config.beta * np.sqrt(b2) * np.exp(1j * net), config.alpha * np.sqrt(a2)]
    )
    rho = np.outer(psi, psi.conj())
    rho[0, 0] += p_g
    rho[1, 1] += p_e
    rho = pure_dephasing(rho, config.kappa_phi)
    components = {"no_jump": p_nj, "jump_g": p_g, "jump_e": p_e}
    return ProtocolResult(rho, float(p_nj + p_g + p_e), components, net)


def _classify_components(ensemble: BranchEnsemble) -> dict[str, float]:
    comps = {"no_jump": 0.0, "jump_g": 0.0, "jump_e": 0.0}
    for b in ensemble.selected():
        w = b.weight
        if w == 0.0:
            continue
        if not b.jumps:
            comps["no_jump"] += w
        else:
            pops = np.real(np.diag(partial_trace_qubit(b.state, "Q1")))
            comps["jump_e" if pops[1] > pops[0] else "jump_g"] += w
    return comps


def run_statevector(
    config: ProtocolConfig, keep_rejected: bool = False
) -> ProtocolResult:
    """Full composite-space run, enumerating every relaxation branch.

    With ``keep_rejected`` the complementary ancilla outcomes are propagated
    too (flagged unselected), so the returned ensemble carries the complete
    joint outcome statistics needed for readout-error emulation.
    """
    p = config.p
    pu = config.resolved_pu()
    k1, k2, k3 = config.kappa1, config.resolved_kappa2(), config.kappa3
    rdim = config.resonator_dim
    ph = config.phases
    layout = SubsystemLayout.standard(rdim)
    state = CompositeState.product(layout, {"Q1": (config.alpha, config.beta)})
    ens = BranchEnsemble.from_state(state)

    # Step 1: relaxation exposure, weak measurement through B into Q2.
    ens = amplitude_damping_branches(ens, "Q1", k1, label="Q1:step1")
    ens = ens.apply(partial_swap("Q1", "B", p, ph.swap1, rdim))
    ens = ens.apply(iswap("B", "Q2", ph.swap1.completion, rdim))
    ens = project_ground(ens, "Q2", keep_rejected=keep_rejected)

    # Step 2: storage in M1 with detuned idling and relaxation.
    if config.storage_enabled:
        ens = ens.apply(
            partial_swap(
                "Q1", "M1", 1.0, SwapPhases(ph.storage.entry, ph.storage.aux), rdim
            )
        )
        detune = 2.0 * pi * config.device.delta_f_mhz * config.tau2_us
        ens = ens.apply(number_phase("M1", detune, rdim))
        ens = amplitude_damping_branches(ens, "M1", k2, label="M1:storage")
        # Inverse-swap convention for the swap-back (see module docstring).
        ens = ens.apply(iswap("M1", "Q1", ph.storage.completion + pi, rdim))

    # Step 3: pi_x, relaxation exposure, reversal measurement into Q3.
    ens = ens.apply(rotation("Q1", "x", pi))
    ens = amplitude_damping_branches(ens, "Q1", k3, label="Q1:step3")
    ens = ens.apply(partial_swap("Q1", "B", pu, ph.swap2, rdim))
    ens = ens.apply(iswap("B", "Q3", ph.swap2.completion, rdim))
    ens = project_ground(ens, "Q3", keep_rejected=keep_rejected)

    rho = reduce_to_qubit(ens, "Q1")
    rho = pure_dephasing(rho, config.kappa_phi)
    return ProtocolResult(
        rho,
        float(np.real(np.trace(rho))),
        _classify_components(ens),
        net_dynamic_phase(config),
        ensemble=ens if keep_rejected else None,
    )


def run_protocol(config: ProtocolConfig, backend: str = "analytic") -> ProtocolResult:
    """Dispatch to :func:`run_analytic` or :func:`run_statevector`."""
    if backend == "analytic":
        return run_analytic(config)
    if backend == "statevector":
        return run_statevector(config)
    raise ValueError(f"unknown backend {backend!r}")


def free_decay_baseline(
    config: ProtocolConfig, backend: str = "analytic"
) -> ProtocolResult:
    """Storage pipeline without weak measurements or post-selection.

    The state is swapped into M1, idles for tau2, and is swapped back, with
    the same kappa1/kappa3 exposure and kappa_phi dephasing as the protocol
    but no pi_x and no ancilla selection; the map is trace preserving and the
    ideal comparison operation is the identity.
    """
    k1, k3 = config.kappa1, config.kappa3
    k2 = config.storage_kappa2()
    theta_s = _theta_s(config)
    if backend == "analytic":
        eta = k1 * k2 * k3
        aa, bb = abs(config.alpha) ** 2, abs(config.beta) ** 2
        rho = np.array(
            [
                [
                    aa + bb * (1.0 - eta),
                    config.alpha
                    * np.conj(config.beta)
                    * np.sqrt(eta)
                    * np.exp(-1j * theta_s),
                ],
                [
                    np.conj(config.alpha)
                    * config.beta
                    * np.sqrt(eta)
                    * np.exp(1j * theta_s),
                    bb * eta,
                ],
            ]
        )
        rho = pure_dephasing(rho, config.kappa_phi)
        components = {
            "no_jump": aa + bb * eta,
            "jump_g": bb * (1.0 - eta),
            "jump_e": 0.0,
        }
        return ProtocolResult(rho, 1.0, components, -theta_s)
    if backend != "statevector":
        raise ValueError(f"unknown backend {backend!r}")

    rdim = config.resonator_dim
    ph = config.phases
    layout = SubsystemLayout.standard(rdim)
    state = CompositeState.product(layout, {"Q1": (config.alpha, config.beta)})
    ens = BranchEnsemble.from_state(state)
    ens = amplitude_damping_branches(ens, "Q1", k1, label="Q1:step1")
    ens = ens.apply(
        partial_swap("Q1", "M1", 1.0, SwapPhases(ph.storage.entry, ph.storage.aux), rdim)
    )
    detune = 2.0 * pi * config.device.delta_f_mhz * config.tau2_us
    ens = ens.apply(number_phase("M1", detune, rdim))
    ens = amplitude_damping_branches(ens, "M1", k2, label="M1:storage")
    ens = ens.apply(iswap("M1", "Q1", ph.storage.completion + pi, rdim))
    ens = amplitude_damping_branches(ens, "Q1", k3, label="Q1:step3")
    rho = reduce_to_qubit(ens, "Q1")
    rho = pure_dephasing(rho, config.kappa_phi)
    return ProtocolResult(
        rho,
        float(np.real(np.trace(rho))),
        _classify_components(ens),
        -theta_s,
    )
