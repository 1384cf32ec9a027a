"""Primitive gates and decoherence channels of the detection protocol.

The weak measurement is a qubit-resonator partial swap: on resonance the
excited-state population performs a unit-amplitude vacuum Rabi oscillation,
and stopping the interaction after a fraction of the half period transfers
the excitation with probability ``p``.  A full transfer (``p = 1``) picks up
a factor -i per swapped excitation, the usual iSWAP convention.

Energy relaxation is treated by trajectory branching: a damping event either
happens (jump branch) or does not (no-jump branch), and the two unnormalized
branches together conserve probability.  Pure dephasing is a single
end-of-protocol scaling of the off-diagonal qubit matrix elements.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import pi

import numpy as np

from .hilbert import Branch, BranchEnsemble, CompositeState, Operator

PAULI_I = np.eye(2, dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

_AXES = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}


@dataclass(frozen=True)
class SwapPhases:
    """Dynamic phases of one qubit-resonator(-qubit) swap sequence.

    ``entry`` is accumulated tuning the qubit into and out of resonance and
    multiplies the surviving excited amplitude.  ``aux`` multiplies the
    transferred (resonator) component.  ``completion`` is accumulated during
    the follow-up full swap out of the resonator.
    """

    entry: float = 0.0
    aux: float = 0.0
    completion: float = 0.0


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """2x2 rotation exp(-i*angle*sigma_axis/2)."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    return np.cos(angle / 2) * PAULI_I - 1j * np.sin(angle / 2) * _AXES[axis]


def rotation(qubit: str, axis: str, angle: float) -> Operator:
    """Single-qubit rotation exp(-i*angle*sigma_axis/2) on ``qubit``."""
    return Operator(rotation_matrix(axis, angle), (qubit,), (2,))


def partial_swap(
    qubit: str,
    resonator: str,
    p: float,
    phases: SwapPhases | None = None,
    resonator_dim: int = 2,
) -> Operator:
    """Partial excitation swap from ``qubit`` into ``resonator``.

    In the single-excitation sector (qubit index slow):

        |e,0> -> e^{i entry} (sqrt(1-p)|e,0> - i e^{i aux} sqrt(p)|g,1>)
        |g,1> -> -i e^{-i aux} sqrt(p)|e,0> + sqrt(1-p)|g,1>

    |g,0> and all higher resonator levels are untouched, which keeps the
    operator unitary for any truncation.  The |g,1> column is the resonant
    Jaynes-Cummings completion; the protocol only ever drives the swap with
    the resonator in vacuum.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"swap probability must be in [0, 1], got {p}")
    ph = phases or SwapPhases()
    d = resonator_dim
    mat = np.eye(2 * d, dtype=np.complex128)
    e0 = d  # index of |e,0>
    g1 = 1  # index of |g,1>
    c, s = np.sqrt(1.0 - p), np.sqrt(p)
    mat[e0, e0] = np.exp(1j * ph.entry) * c
    mat[g1, e0] = -1j * np.exp(1j * (ph.entry + ph.aux)) * s
    mat[e0, g1] = -1j * np.exp(-1j * ph.aux) * s
    mat[g1, g1] = c
    return Operator(mat, (qubit, resonator), (2, d))


def iswap(
    resonator: str,
    qubit: str,
    completion_phase: float = 0.0,
    resonator_dim: int = 2,
) -> Operator:
    """Full excitation transfer from ``resonator`` into ``qubit``.

    |1,g> -> -i e^{i theta} |0,e> and |0,e> -> -i e^{-i theta} |1,g|;
    the vacuum |0,g> and levels >= 2 are fixed.
    """
    d = resonator_dim
    mat = np.eye(2 * d, dtype=np.complex128)
    oneg = 2  # |1,g>, resonator index slow
    zeroe = 1  # |0,e>
    mat[oneg, oneg] = 0.0
    mat[zeroe, zeroe] = 0.0
    mat[zeroe, oneg] = -1j * np.exp(1j * completion_phase)
    mat[oneg, zeroe] = -1j * np.exp(-1j * completion_phase)
    return Operator(mat, (resonator, qubit), (d, 2))


def number_phase(target: str, phase: float, dim: int = 2) -> Operator:
    """Phase e^{i n phase} on level n, for detuned idling of a resonator."""
    mat = np.diag(np.exp(1j * phase * np.arange(dim)))
    return Operator(mat, (target,), (dim,))


def strength_from_time(t_ns: float, f_c_mhz: float) -> float:
    """Swap probability for an on-resonance interaction of ``t_ns`` nanoseconds.

    The excited population oscillates as cos^2(pi f_c t), so the measurement
    strength is p = 1 - P_e = sin^2(pi f_c t).
    """
    if t_ns < 0:
        raise ValueError("interaction time must be nonnegative")
    if f_c_mhz <= 0:
        raise ValueError("coupling strength must be positive")
    return float(np.sin(pi * f_c_mhz * 1e-3 * t_ns) ** 2)


def survival_factor(t_us: float, t1_us: float) -> float:
    """Excited-population survival exp(-t/T1) over a duration ``t_us``."""
    if t_us < 0 or t1_us <= 0:
        raise ValueError("durations must be nonnegative and T1 positive")
    return float(np.exp(-t_us / t1_us))


def _slice(shape_len: int, axis: int, level) -> tuple:
    idx: list = [slice(None)] * shape_len
    idx[axis] = level
    return tuple(idx)


def amplitude_damping_branches(
    ensemble: BranchEnsemble | CompositeState,
    target: str,
    kappa: float,
    label: str | None = None,
) -> BranchEnsemble:
    """Split every branch into a no-jump and a jump branch on ``target``.

    No-jump: the excited amplitude is scaled by sqrt(kappa).  Jump: the
    excited amplitude moves to the ground level with weight sqrt(1-kappa).
    Together the branches conserve the squared norm (Kraus completeness).
    Branches with exactly zero weight are dropped, so kappa = 1 leaves a
    single unchanged branch.  The target may hold at most one excitation.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"survival factor must be in [0, 1], got {kappa}")
    if isinstance(ensemble, CompositeState):
        ensemble = BranchEnsemble.from_state(ensemble)
    layout = ensemble.layout
    axis = layout.axis(target)
    d = layout.dim_of(target)
    tag = label or target
    out: list[Branch] = []
    for b in ensemble.branches:
        t = b.state.tensor()
        for level in range(2, d):
            if np.any(np.abs(t[_slice(len(layout.dims), axis, level)]) > 1e-12):
                raise ValueError(f"{target} holds more than one excitation")
        excited = _slice(len(layout.dims), axis, 1)
        ground = _slice(len(layout.dims), axis, 0)
        no_jump = t.copy()
        no_jump[excited] = np.sqrt(kappa) * t[excited]
        jump = np.zeros_like(t)
        jump[ground] = np.sqrt(1.0 - kappa) * t[excited]
        nj_state = CompositeState(layout, no_jump.reshape(-1))
        j_state = CompositeState(layout, jump.reshape(-1))
        if nj_state.norm2 > 0.0:
            out.append(replace(b, state=nj_state))
        if j_state.norm2 > 0.0:
            out.append(
                replace(b, state=j_state, jumps=b.jumps + (tag,))
            )
    return BranchEnsemble(layout, tuple(out))


def pure_dephasing(rho: np.ndarray, kappa_phi: float) -> np.ndarray:
    """Scale the off-diagonal elements of a qubit density matrix by kappa_phi."""
    if not 0.0 <= kappa_phi <= 1.0:
        raise ValueError(f"dephasing factor must be in [0, 1], got {kappa_phi}")
    out = np.array(rho, dtype=np.complex128)
    out[0, 1] *= kappa_phi
    out[1, 0] *= kappa_phi
    return out


def project_ground(
    ensemble: BranchEnsemble, target: str, keep_rejected: bool = False
) -> BranchEnsemble:
    """Post-select ``target`` in its ground state.

    Each branch's amplitudes with the target excited are zeroed; branches
    stay unnormalized so their squared norm is the outcome probability.
    With ``keep_rejected`` the complementary projection is kept as well,
    flagged unselected, so the rejected population can keep evolving (used
    by the readout-error emulation).
    """
    layout = ensemble.layout
    axis = layout.axis(target)
    n = len(layout.dims)
    excited = _slice(n, axis, slice(1, None))
    out: list[Branch] = []
    for b in ensemble.branches:
        t = b.state.tensor()
        kept = t.copy()
        kept[excited] = 0.0
        out.append(
            replace(
                b,
                state=CompositeState(layout, kept.reshape(-1)),
                outcomes=b.outcomes + ((target, 0),),
            )
        )
        if keep_rejected:
            rej = np.zeros_like(t)
            rej[excited] = t[excited]
            out.append(
                replace(
                    b,
                    state=CompositeState(layout, rej.reshape(-1)),
                    outcomes=b.outcomes + ((target, 1),),
                    selected=False,
                )
            )
    return BranchEnsemble(layout, tuple(out))
