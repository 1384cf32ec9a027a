"""Simulator and analysis toolkit for post-selected weak-measurement error
detection of energy relaxation in a qubit-resonator circuit.

The package provides a full composite-space statevector backend and a
closed-form analytic backend for the detection protocol, non-trace-preserving
process tomography with the associated fidelity metrics, a finite-shot
Monte Carlo readout emulation, and drivers that emit the sweep tables behind
the protocol's headline results.
"""

__version__ = "0.1.0"

from .hilbert import (
    Branch,
    BranchEnsemble,
    CompositeState,
    Operator,
    SubsystemLayout,
    ZeroProbabilityError,
    apply,
    embed,
    reduce_to_qubit,
)
from .dynamics import (
    SwapPhases,
    amplitude_damping_branches,
    iswap,
    partial_swap,
    project_ground,
    pure_dephasing,
    rotation,
    rotation_matrix,
    strength_from_time,
    survival_factor,
)
from .protocol import (
    DeviceParams,
    ElementParams,
    InfeasibleUncollapseError,
    ProtocolConfig,
    ProtocolPhases,
    ProtocolResult,
    closed_form_probabilities,
    compute_pu,
    free_decay_baseline,
    net_dynamic_phase,
    run_analytic,
    run_protocol,
    run_statevector,
)
from .tomography import (
    FidelityReport,
    ReadoutModel,
    apply_readout,
    average_selection_probability,
    bloch_from_counts,
    compensate_phase,
    correct_readout,
    delayed_measurement_correction,
    fidelity_F,
    fidelity_Fav,
    fidelity_Favp,
    fidelity_report,
    ideal_chi,
    input_states,
    reconstruct_chi,
)
from .experiments import (
    SweepRow,
    SweepSpec,
    fig2b_sweep,
    fig3a_sweep,
    fig3b_densities,
    fig4_pdn,
    figS1_sweep,
    monte_carlo,
    process_matrix,
    write_csv,
)
