"""State and process tomography for post-selected (non-trace-preserving) maps.

The single-qubit map is represented by a 4x4 process matrix chi in the Pauli
basis {I, X, Y, Z}: rho_out_unnormalized = sum_nm chi_nm E_n rho_in E_m^dag.
Because runs are post-selected the map does not preserve trace; Tr(chi) is
the selection probability averaged uniformly over input states.

Three fidelities are provided for a target unitary U:

* ``fidelity_F``: Tr(chi_ideal chi) / Tr(chi), the process fidelity with the
  divisor accounting for post-selection.
* ``fidelity_Fav``: the output-state fidelity averaged uniformly over the
  Bloch sphere.
* ``fidelity_Favp``: the same average weighted by the selection probability;
  it obeys F = (3 F'_av - 1) / 2 exactly.

Bloch-sphere averages are evaluated on the six octahedral cardinal states.
The octahedron is a spherical 3-design and the weighted average has
polynomial integrands of degree <= 2 in the Bloch vector, so that quadrature
is exact and the identities above hold to machine precision.  The uniform
average has the selection probability in the denominator per state; for
trace-preserving maps it coincides with the weighted average.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dynamics import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, rotation_matrix

PAULIS = (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z)

INPUT_LABELS = ("g", "g-ie", "g+e", "e")

#: Tomography pre-rotations applied before the z-basis readout: identity
#: measures z, a pi/2 rotation about x maps y onto z, a pi/2 rotation about
#: y maps -x onto z.
TOMO_SETTINGS = ("id", "x90", "y90")
_TOMO_ROTATIONS = {
    "id": PAULI_I,
    "x90": rotation_matrix("x", np.pi / 2),
    "y90": rotation_matrix("y", np.pi / 2),
}


def tomography_rotation(setting: str) -> np.ndarray:
    return _TOMO_ROTATIONS[setting]


def input_states() -> list[np.ndarray]:
    """The four tomography input states |g>, |g>-i|e>, |g>+|e>, |e> (normalized)."""
    s = 1 / np.sqrt(2)
    return [
        np.array([1.0, 0.0], dtype=np.complex128),
        np.array([s, -1j * s], dtype=np.complex128),
        np.array([s, s], dtype=np.complex128),
        np.array([0.0, 1.0], dtype=np.complex128),
    ]


def state_to_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())


def bloch_from_counts(
    settings: Mapping[str, tuple[float, float]]
) -> tuple[float, float, float, float]:
    """Unnormalized Bloch vector and selection probability from three settings.

    ``settings`` maps each of "id", "x90", "y90" to the pair of selected
    joint probabilities (P_g, P_e) observed in that setting.  The returned
    (x, y, z) scale with the selection probability P_s, so the unnormalized
    qubit matrix is (P_s I + x X + y Y + z Z) / 2.
    """
    for name in TOMO_SETTINGS:
        if name not in settings:
            raise KeyError(f"missing tomography setting {name!r}")
        for v in settings[name]:
            if v < -1e-9 or v > 1.0 + 1e-9:
                raise ValueError(f"probability {v} outside [0, 1]")
    z = settings["id"][0] - settings["id"][1]
    y = settings["x90"][0] - settings["x90"][1]
    x = settings["y90"][1] - settings["y90"][0]
    ps = float(np.mean([sum(settings[name]) for name in TOMO_SETTINGS]))
    return float(x), float(y), float(z), ps


def density_from_bloch(x: float, y: float, z: float, ps: float) -> np.ndarray:
    return (ps * PAULI_I + x * PAULI_X + y * PAULI_Y + z * PAULI_Z) / 2.0


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Evaluate the map: sum_nm chi_nm E_n rho E_m^dag."""
    out = np.zeros((2, 2), dtype=np.complex128)
    for n in range(4):
        for m in range(4):
            if chi[n, m] != 0.0:
                out += chi[n, m] * PAULIS[n] @ rho @ PAULIS[m].conj().T
    return out


def nearest_psd(chi: np.ndarray) -> np.ndarray:
    """Project a Hermitian matrix onto the PSD cone by clipping eigenvalues."""
    h = (chi + chi.conj().T) / 2.0
    w, v = np.linalg.eigh(h)
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def reconstruct_chi(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]], psd: bool = False
) -> np.ndarray:
    """Process matrix by exact linear inversion from four (rho_in, rho_out) pairs.

    ``rho_out`` is unnormalized (its trace is the selection probability), so
    the reconstructed chi represents the full post-selected map.  The four
    inputs must span the qubit operator space.  The Hermitian part is
    returned; ``psd=True`` additionally clips negative eigenvalues, for use
    on noisy finite-shot data (it breaks exact linearity identities).
    """
    if len(pairs) != 4:
        raise ValueError("exactly four input/output pairs are required")
    a = np.zeros((16, 16), dtype=np.complex128)
    b = np.zeros(16, dtype=np.complex128)
    for k, (rho_in, rho_out) in enumerate(pairs):
        for n in range(4):
            for m in range(4):
                block = PAULIS[n] @ rho_in @ PAULIS[m].conj().T
                a[4 * k : 4 * k + 4, 4 * n + m] = block.reshape(-1)
        b[4 * k : 4 * k + 4] = np.asarray(rho_out, dtype=np.complex128).reshape(-1)
    try:
        chi = np.linalg.solve(a, b).reshape(4, 4)
    except np.linalg.LinAlgError as exc:
        raise ValueError("input states do not span the operator space") from exc
    chi = (chi + chi.conj().T) / 2.0
    return nearest_psd(chi) if psd else chi


def ideal_chi(unitary: np.ndarray) -> np.ndarray:
    """Rank-one process matrix of a unitary operation."""
    coeffs = np.array([np.trace(p.conj().T @ unitary) / 2.0 for p in PAULIS])
    return np.outer(coeffs, coeffs.conj())


def fidelity_F(chi: np.ndarray, chi_ideal: np.ndarray) -> float:
    """Process fidelity Tr(chi_ideal chi) / Tr(chi) of a post-selected map."""
    tr = float(np.real(np.trace(chi)))
    if tr <= 0.0:
        raise ValueError("process matrix has non-positive trace")
    return float(np.real(np.trace(chi_ideal @ chi))) / tr


def octahedral_states() -> list[np.ndarray]:
    """Density matrices of the six Bloch-sphere cardinal states."""
    out = []
    for pauli in (PAULI_X, PAULI_Y, PAULI_Z):
        for sign in (1.0, -1.0):
            out.append((PAULI_I + sign * pauli) / 2.0)
    return out


def fidelity_Fav(chi: np.ndarray, ideal_unitary: np.ndarray) -> float:
    """Uniform Bloch-sphere average of the normalized output-state fidelity."""
    total = 0.0
    states = octahedral_states()
    for rho in states:
        out = apply_chi(chi, rho)
        ps = float(np.real(np.trace(out)))
        if ps <= 0.0:
            raise ValueError("zero selection probability for a cardinal input")
        target = ideal_unitary @ rho @ ideal_unitary.conj().T
        total += float(np.real(np.trace(out @ target))) / ps
    return total / len(states)


def fidelity_Favp(chi: np.ndarray, ideal_unitary: np.ndarray) -> float:
    """Selection-probability-weighted average state fidelity (exact quadrature)."""
    num = 0.0
    den = 0.0
    for rho in octahedral_states():
        out = apply_chi(chi, rho)
        target = ideal_unitary @ rho @ ideal_unitary.conj().T
        num += float(np.real(np.trace(out @ target)))
        den += float(np.real(np.trace(out)))
    if den <= 0.0:
        raise ValueError("zero average selection probability")
    return num / den


def average_selection_probability(chi: np.ndarray) -> float:
    """Tr(chi): the selection probability averaged uniformly over inputs."""
    return float(np.real(np.trace(chi)))


@dataclass(frozen=True)
class FidelityReport:
    """All fidelity metrics of one reconstructed process matrix."""

    f: float
    f_av: float
    f_avp: float
    f_av_scaled: float
    f_avp_scaled: float
    trace_chi: float


def fidelity_report(chi: np.ndarray, ideal_unitary: np.ndarray) -> FidelityReport:
    f = fidelity_F(chi, ideal_chi(ideal_unitary))
    f_av = fidelity_Fav(chi, ideal_unitary)
    f_avp = fidelity_Favp(chi, ideal_unitary)
    return FidelityReport(
        f=f,
        f_av=f_av,
        f_avp=f_avp,
        f_av_scaled=(3.0 * f_av - 1.0) / 2.0,
        f_avp_scaled=(3.0 * f_avp - 1.0) / 2.0,
        trace_chi=average_selection_probability(chi),
    )


def _phase_gate(phi: float) -> np.ndarray:
    return np.diag([np.exp(-1j * phi / 2.0), np.exp(1j * phi / 2.0)])


def compensate_phase(obj: np.ndarray, phi: float) -> np.ndarray:
    """Undo a deterministic output phase by a z-rotation on the output side.

    On a 2x2 density matrix the (g, e) off-diagonal element is multiplied by
    e^{-i phi}; on a 4x4 process matrix the map is conjugated accordingly, so
    compensating the reconstructed chi equals reconstructing from compensated
    outputs.
    """
    obj = np.asarray(obj, dtype=np.complex128)
    v = _phase_gate(phi)
    if obj.shape == (2, 2):
        return v @ obj @ v.conj().T
    if obj.shape == (4, 4):
        c = np.array(
            [
                [np.trace(PAULIS[k].conj().T @ v @ PAULIS[n]) / 2.0 for n in range(4)]
                for k in range(4)
            ]
        )
        return c @ obj @ c.conj().T
    raise ValueError("expected a 2x2 state or 4x4 process matrix")


def fit_compensation_phase(
    chi: np.ndarray, chi_ideal: np.ndarray, samples: int = 4096
) -> float:
    """Phase that maximizes the process fidelity after compensation.

    Used for finite-shot data where the model phase is not known exactly.
    The fidelity is a trigonometric polynomial of the phase, so a dense scan
    followed by one parabolic refinement is accurate far below the noise.
    """
    grid = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    values = np.array(
        [fidelity_F(compensate_phase(chi, phi), chi_ideal) for phi in grid]
    )
    i = int(np.argmax(values))
    left, mid, right = values[i - 1], values[i], values[(i + 1) % samples]
    denom = left - 2.0 * mid + right
    shift = 0.0 if denom == 0.0 else 0.5 * (left - right) / denom
    step = grid[1] - grid[0]
    return float((grid[i] + shift * step) % (2.0 * np.pi))


@dataclass(frozen=True)
class ReadoutModel:
    """Per-qubit readout confusion: columns are true g/e, rows observed g/e."""

    f_g: float
    f_e: float

    def __post_init__(self):
        if not (0.5 <= self.f_g <= 1.0 and 0.5 <= self.f_e <= 1.0):
            raise ValueError("readout fidelities must lie in [0.5, 1]")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f_g, 1.0 - self.f_e], [1.0 - self.f_g, self.f_e]]
        )


def confusion_matrix(models: Sequence[ReadoutModel]) -> np.ndarray:
    """Joint confusion of several qubits, first model slowest index."""
    out = np.eye(1)
    for m in models:
        out = np.kron(out, m.matrix)
    return out


def _as_confusion(model) -> np.ndarray:
    if isinstance(model, ReadoutModel):
        return model.matrix
    if isinstance(model, np.ndarray):
        return model
    return confusion_matrix(model)


def apply_readout(probs: np.ndarray, model) -> np.ndarray:
    """Forward readout model: observed = confusion @ true."""
    m = _as_confusion(model)
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (m.shape[1],):
        raise ValueError("probability vector does not match the readout model")
    return m @ probs


def correct_readout(
    observed: np.ndarray, model, clip: bool = True
) -> tuple[np.ndarray, bool]:
    """Invert the readout confusion; returns (corrected, clipped_flag).

    The raw inverse is unbiased but can leave a noisy vector slightly outside
    [0, 1]; with ``clip`` such entries are clipped and the vector renormalized,
    and the flag reports that this happened beyond numerical tolerance.
    """
    m = _as_confusion(model)
    if abs(np.linalg.det(m)) < 1e-12:
        raise ValueError("readout model is not invertible")
    observed = np.asarray(observed, dtype=float)
    corrected = np.linalg.solve(m, observed)
    flagged = bool(np.any(corrected < -1e-9) or np.any(corrected > 1.0 + 1e-9))
    if clip and flagged:
        corrected = np.clip(corrected, 0.0, 1.0)
        total = corrected.sum()
        if total > 0:
            corrected = corrected * (observed.sum() / total)
    return corrected, flagged


def delayed_measurement_correction(
    p_e_observed: float, delay_ns: float, t1_us: float
) -> float:
    """Undo excited-population decay accumulated before a delayed readout."""
    if delay_ns < 0:
        raise ValueError("delay must be nonnegative")
    return float(p_e_observed / np.exp(-delay_ns / (1000.0 * t1_us)))
