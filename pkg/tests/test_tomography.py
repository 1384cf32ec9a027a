import numpy as np
import pytest

from uncollapse.dynamics import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, rotation_matrix
from uncollapse.tomography import (
    PAULIS,
    TOMO_SETTINGS,
    ReadoutModel,
    apply_chi,
    apply_readout,
    average_selection_probability,
    bloch_from_counts,
    compensate_phase,
    confusion_matrix,
    correct_readout,
    delayed_measurement_correction,
    density_from_bloch,
    fidelity_F,
    fidelity_Fav,
    fidelity_Favp,
    fidelity_report,
    fit_compensation_phase,
    ideal_chi,
    input_states,
    nearest_psd,
    octahedral_states,
    reconstruct_chi,
    state_to_density,
    tomography_rotation,
)

PI_X = rotation_matrix("x", np.pi)


def kraus_to_chi(kraus_ops):
    """Independent oracle: chi from Kraus decomposition via Pauli coefficients."""
    chi = np.zeros((4, 4), dtype=complex)
    for k in kraus_ops:
        coeffs = np.array([np.trace(p.conj().T @ k) / 2.0 for p in PAULIS])
        chi += np.outer(coeffs, coeffs.conj())
    return chi


def apply_kraus(kraus_ops, rho):
    out = np.zeros((2, 2), dtype=complex)
    for k in kraus_ops:
        out += k @ rho @ k.conj().T
    return out


def chi_from_map(channel):
    return reconstruct_chi([(state_to_density(psi), channel(state_to_density(psi)))
                            for psi in input_states()])


def random_state(rng):
    th = rng.uniform(0, np.pi)
    phi = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(th / 2), np.sin(th / 2) * np.exp(1j * phi)])


def setting_probabilities(rho_u):
    out = {}
    for name in TOMO_SETTINGS:
        r = tomography_rotation(name)
        rot = r @ rho_u @ r.conj().T
        out[name] = (rot[0, 0].real, rot[1, 1].real)
    return out


# --- input states and Bloch extraction ---------------------------------------

def test_input_states_are_the_documented_four():
    states = input_states()
    s = 1 / np.sqrt(2)
    assert np.allclose(states[0], [1, 0])
    assert np.allclose(states[1], [s, -1j * s])
    assert np.allclose(states[2], [s, s])
    assert np.allclose(states[3], [0, 1])
    for psi in states:
        assert abs(np.linalg.norm(psi) - 1) < 1e-15


def test_bloch_from_counts_ground_state():
    x, y, z, ps = bloch_from_counts(setting_probabilities(np.diag([1.0, 0.0])))
    assert (x, y, z, ps) == pytest.approx((0.0, 0.0, 1.0, 1.0), abs=1e-12)


def test_bloch_from_counts_plus_state():
    rho = state_to_density(input_states()[2])
    x, y, z, ps = bloch_from_counts(setting_probabilities(rho))
    assert x == pytest.approx(1.0, abs=1e-12)
    assert (y, z) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_bloch_from_counts_minus_i_state():
    rho = state_to_density(input_states()[1])
    x, y, z, _ = bloch_from_counts(setting_probabilities(rho))
    assert y == pytest.approx(-1.0, abs=1e-12)
    assert (x, z) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_bloch_from_counts_unnormalized_scaling():
    rho_n = np.array([[0.4598, 0.4598], [0.4598, 0.5402]])
    rho_u = 0.0816 * rho_n
    x, y, z, ps = bloch_from_counts(setting_probabilities(rho_u))
    assert x == pytest.approx(0.9196 * 0.0816, abs=1e-12)
    assert ps == pytest.approx(0.0816, abs=1e-12)
    assert np.allclose(density_from_bloch(x, y, z, ps), rho_u, atol=1e-12)


def test_bloch_from_counts_rejects_bad_probabilities():
    probs = setting_probabilities(np.diag([1.0, 0.0]))
    probs["id"] = (-0.2, 0.5)
    with pytest.raises(ValueError):
        bloch_from_counts(probs)


# --- process reconstruction -----------------------------------------------------

def test_reconstruct_identity_process():
    chi = chi_from_map(lambda rho: rho)
    expected = np.zeros((4, 4))
    expected[0, 0] = 1.0
    assert np.allclose(chi, expected, atol=1e-12)


def test_reconstruct_pi_x_process():
    chi = chi_from_map(lambda rho: PI_X @ rho @ PI_X.conj().T)
    assert chi[1, 1] == pytest.approx(1.0, abs=1e-12)
    assert np.trace(chi).real == pytest.approx(1.0, abs=1e-12)


def test_reconstruct_amplitude_damping_matches_kraus_oracle():
    eta = 0.3
    kraus = [
        np.array([[1, 0], [0, np.sqrt(eta)]], dtype=complex),
        np.array([[0, np.sqrt(1 - eta)], [0, 0]], dtype=complex),
    ]
    chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
    oracle = kraus_to_chi(kraus)
    assert np.max(np.abs(chi - oracle)) < 1e-12
    root = np.sqrt(eta)
    assert chi[0, 0] == pytest.approx((1 + root) ** 2 / 4, abs=1e-12)
    assert chi[3, 3] == pytest.approx((1 - root) ** 2 / 4, abs=1e-12)
    assert chi[0, 3] == pytest.approx((1 - eta) / 4, abs=1e-12)
    assert chi[1, 1] == pytest.approx((1 - eta) / 4, abs=1e-12)


def test_reconstruct_requires_spanning_inputs():
    rho = state_to_density(input_states()[0])
    with pytest.raises(ValueError):
        reconstruct_chi([(rho, rho)] * 4)


def _random_subtrace_map(rng, n_kraus=2):
    ops = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(n_kraus)]
    total = sum(k.conj().T @ k for k in ops)
    scale = np.sqrt(np.max(np.linalg.eigvalsh(total)))
    return [k / scale for k in ops]


def test_reconstruction_roundtrip_on_random_maps():
    rng = np.random.default_rng(17)
    for _ in range(20):
        kraus = _random_subtrace_map(rng)
        chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
        for _ in range(50):
            rho = state_to_density(random_state(rng))
            direct = apply_kraus(kraus, rho)
            via_chi = apply_chi(chi, rho)
            assert np.max(np.abs(direct - via_chi)) < 1e-10


def test_reconstruction_roundtrip_with_postselection_composition():
    # unitary . damping . dephasing . post-selecting projector component
    rng = np.random.default_rng(19)
    u = rotation_matrix("y", rng.uniform(0, 2 * np.pi))
    damp = [np.array([[1, 0], [0, np.sqrt(0.6)]]), np.array([[0, np.sqrt(0.4)], [0, 0]])]
    deph = [np.sqrt(0.9) * PAULI_I, np.sqrt(0.1) * PAULI_Z]
    keep = np.array([[1, 0], [0, np.sqrt(0.3)]])  # partial-collapse null outcome
    kraus = [keep @ u @ d1 @ d2 for d1 in deph for d2 in damp]
    chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
    assert np.trace(chi).real < 1.0  # genuinely non-trace-preserving
    for _ in range(50):
        rho = state_to_density(random_state(rng))
        assert np.max(np.abs(apply_kraus(kraus, rho) - apply_chi(chi, rho))) < 1e-10


def test_nearest_psd_clips_negative_eigenvalues():
    chi = np.diag([1.0, -0.1, 0.2, 0.0])
    out = nearest_psd(chi)
    assert np.min(np.linalg.eigvalsh(out)) >= -1e-15
    assert np.allclose(out, np.diag([1.0, 0.0, 0.2, 0.0]))


# --- fidelities --------------------------------------------------------------------

def test_fidelity_F_examples():
    chi_x = ideal_chi(PI_X)
    assert fidelity_F(chi_x, chi_x) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_F(0.37 * chi_x, chi_x) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_F(np.eye(4) / 4, chi_x) == pytest.approx(0.25, abs=1e-12)


def test_fidelity_F_zero_trace_rejected():
    with pytest.raises(ValueError):
        fidelity_F(np.zeros((4, 4)), ideal_chi(PI_X))


def test_average_fidelities_identity_process():
    chi = ideal_chi(np.eye(2))
    assert fidelity_Fav(chi, np.eye(2)) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_Favp(chi, np.eye(2)) == pytest.approx(1.0, abs=1e-12)


def test_fully_dephased_pi_x_average_fidelity():
    chi = np.diag([0.0, 0.5, 0.5, 0.0]).astype(complex)
    assert fidelity_F(chi, ideal_chi(PI_X)) == pytest.approx(0.5, abs=1e-12)
    assert fidelity_Favp(chi, PI_X) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_trace_preserving_maps_have_equal_averages():
    rng = np.random.default_rng(23)
    for _ in range(10):
        eta = rng.uniform(0.1, 1.0)
        kraus = [
            np.array([[1, 0], [0, np.sqrt(eta)]]),
            np.array([[0, np.sqrt(1 - eta)], [0, 0]]),
        ]
        u = rotation_matrix("x", rng.uniform(0, np.pi))
        chi = chi_from_map(lambda rho: apply_kraus(kraus, u @ rho @ u.conj().T))
        assert abs(fidelity_Fav(chi, u) - fidelity_Favp(chi, u)) < 1e-12


def test_scaled_fidelity_identity_s28():
    rng = np.random.default_rng(29)
    for _ in range(20):
        kraus = _random_subtrace_map(rng)
        chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
        f = fidelity_F(chi, ideal_chi(PI_X))
        favp = fidelity_Favp(chi, PI_X)
        assert abs(f - (3 * favp - 1) / 2) < 1e-10


def test_trace_equals_sphere_average_selection_s29():
    rng = np.random.default_rng(31)
    for _ in range(20):
        kraus = _random_subtrace_map(rng)
        chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
        quadrature = np.mean(
            [np.trace(apply_chi(chi, rho)).real for rho in octahedral_states()]
        )
        assert abs(average_selection_probability(chi) - quadrature) < 1e-10


def test_selection_probability_linearity_and_tp():
    kraus = [np.array([[1, 0], [0, np.sqrt(0.5)]]), np.array([[0, np.sqrt(0.5)], [0, 0]])]
    chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
    assert average_selection_probability(chi) == pytest.approx(1.0, abs=1e-12)
    assert average_selection_probability(0.5 * chi) == pytest.approx(0.5, abs=1e-12)


def test_fidelity_bounded_for_psd_chi():
    rng = np.random.default_rng(37)
    ideal = ideal_chi(PI_X)
    for _ in range(20):
        b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        chi = b @ b.conj().T
        chi /= np.trace(chi).real * rng.uniform(1.0, 5.0)
        f = fidelity_F(chi, ideal)
        assert -1e-12 <= f <= 1.0 + 1e-12


def test_fidelity_report_consistency():
    rng = np.random.default_rng(41)
    kraus = _random_subtrace_map(rng)
    chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
    rep = fidelity_report(chi, PI_X)
    assert rep.f == pytest.approx(fidelity_F(chi, ideal_chi(PI_X)), abs=1e-14)
    assert rep.f_av_scaled == pytest.approx((3 * rep.f_av - 1) / 2, abs=1e-14)
    assert rep.f_avp_scaled == pytest.approx((3 * rep.f_avp - 1) / 2, abs=1e-14)
    assert rep.trace_chi == pytest.approx(np.trace(chi).real, abs=1e-14)


# --- phase compensation ---------------------------------------------------------

def test_compensate_phase_zero_is_identity():
    rho = np.array([[0.6, 0.2j], [-0.2j, 0.4]])
    assert np.allclose(compensate_phase(rho, 0.0), rho)


def test_compensate_phase_rotation_arithmetic():
    rho = np.array([[0.5, np.exp(0.8j) * 0.4], [np.exp(-0.8j) * 0.4, 0.5]])
    out = compensate_phase(rho, 0.8)
    assert out[0, 1] == pytest.approx(0.4, abs=1e-12)
    assert abs(out[0, 1].imag) < 1e-12


def test_compensate_phase_roundtrip():
    rng = np.random.default_rng(43)
    rho = state_to_density(random_state(rng))
    phi = rng.uniform(0, 2 * np.pi)
    assert np.allclose(compensate_phase(compensate_phase(rho, phi), -phi), rho)


def test_compensate_phase_chi_matches_state_compensation():
    rng = np.random.default_rng(47)
    kraus = _random_subtrace_map(rng)
    chi = chi_from_map(lambda rho: apply_kraus(kraus, rho))
    phi = 1.234
    chi_c = compensate_phase(chi, phi)
    for _ in range(10):
        rho = state_to_density(random_state(rng))
        a = apply_chi(chi_c, rho)
        b = compensate_phase(apply_chi(chi, rho), phi)
        assert np.max(np.abs(a - b)) < 1e-12
    assert abs(np.trace(chi_c).real - np.trace(chi).real) < 1e-12


def test_fit_compensation_phase_recovers_injected_phase():
    chi = ideal_chi(PI_X)
    for phi in (0.3, 1.7, 4.4):
        rotated = compensate_phase(chi, -phi)
        fitted = fit_compensation_phase(rotated, ideal_chi(PI_X))
        err = (fitted - phi + np.pi) % (2 * np.pi) - np.pi
        assert abs(err) < 1e-6
        assert fidelity_F(compensate_phase(rotated, fitted), ideal_chi(PI_X)) > 1 - 1e-12


# --- readout ------------------------------------------------------------------------

def test_readout_perfect_is_identity():
    model = ReadoutModel(1.0, 1.0)
    p = np.array([0.3, 0.7])
    assert np.allclose(apply_readout(p, model), p)
    corrected, flagged = correct_readout(p, model)
    assert np.allclose(corrected, p)
    assert not flagged


def test_readout_forward_example():
    observed = apply_readout(np.array([1.0, 0.0]), ReadoutModel(0.95, 0.89))
    assert np.allclose(observed, [0.95, 0.05])


def test_readout_roundtrip():
    rng = np.random.default_rng(53)
    model = ReadoutModel(0.94, 0.88)
    for _ in range(20):
        p = rng.dirichlet((1, 1))
        corrected, _ = correct_readout(apply_readout(p, model), model)
        assert np.max(np.abs(corrected - p)) < 1e-12


def test_readout_joint_confusion_roundtrip():
    models = [ReadoutModel(0.94, 0.88), ReadoutModel(0.94, 0.91), ReadoutModel(0.95, 0.89)]
    joint = confusion_matrix(models)
    assert joint.shape == (8, 8)
    assert np.allclose(joint.sum(axis=0), 1.0)
    rng = np.random.default_rng(59)
    p = rng.dirichlet(np.ones(8))
    corrected, flagged = correct_readout(apply_readout(p, models), models)
    assert np.max(np.abs(corrected - p)) < 1e-12
    assert not flagged


def test_readout_correction_flags_out_of_range():
    model = ReadoutModel(0.9, 0.9)
    corrected, flagged = correct_readout(np.array([0.98, 0.02]), model)
    assert flagged
    assert np.all(corrected >= 0.0) and np.all(corrected <= 1.0)
    raw, flagged_raw = correct_readout(np.array([0.98, 0.02]), model, clip=False)
    assert flagged_raw and raw[1] < 0.0


def test_readout_noninvertible_rejected():
    with pytest.raises(ValueError):
        correct_readout(np.array([0.5, 0.5]), ReadoutModel(0.5, 0.5))


def test_delayed_measurement_correction():
    assert delayed_measurement_correction(0.4, 0.0, 0.614) == pytest.approx(0.4)
    factor = np.exp(-38.0 / 614.0)
    assert factor == pytest.approx(0.94, abs=2e-3)
    assert delayed_measurement_correction(0.47, 38.0, 0.614) == pytest.approx(
        0.47 / factor, abs=1e-12
    )
    # a 6 percent drop maps 0.47 back to about 0.5
    assert delayed_measurement_correction(0.47, 38.0, 0.614) == pytest.approx(0.5, abs=2e-3)
    with pytest.raises(ValueError):
        delayed_measurement_correction(0.4, -1.0, 0.614)
