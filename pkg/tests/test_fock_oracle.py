import io
import math
import random

import numpy as np
import pytest

import reference_formulas as ref
from tfcka.channel_model import REFERENCE_MISALIGNMENT, SetupParams, base_statistics, no_photon_probability
from tfcka.fock_oracle import (
    ModeIndex,
    StateSizeError,
    ZeroProbabilityError,
    apply_loss,
    apply_multiport,
    apply_polarization_misalignment,
    bits_to_index,
    click_pattern_probabilities,
    conditional_click_state,
    dump_state,
    load_state,
    measure_statistics,
    measurement_angles,
    multiport_unitary,
    no_click_conditional_state,
    oracle_statistics,
    prepare_initial,
    run_pipeline,
    w_state,
)

A = REFERENCE_MISALIGNMENT


def random_state(rng, n=3, m=4):
    state = prepare_initial(n, rng.uniform(0.1, 0.9), rng.uniform(-3, 3), n_ports=m)
    state = apply_loss(state, rng.uniform(0.05, 1))
    return apply_polarization_misalignment(state, rng.uniform(-1, 1))


def test_mode_layout():
    assert ModeIndex("P", 1).position(3, 2) == 0
    assert ModeIndex("Pperp", 1).position(3, 2) == 1
    assert ModeIndex("P", 3).position(3, 2) == 4
    assert ModeIndex("loss", 2).position(3, 2) == 7
    with pytest.raises(ValueError):
        ModeIndex("loss", 3).position(3, 2)
    with pytest.raises(ValueError):
        ModeIndex("P", 0).position(3, 2)


def test_prepare_initial_examples():
    s = prepare_initial(3, 1.0)
    assert list(s.amplitudes.values()) == [1.0]
    (bits, occ), = s.amplitudes
    assert bits == (0, 0, 0) and sum(occ) == 0

    s = prepare_initial(3, 0.0)
    (bits, occ), = s.amplitudes
    assert bits == (1, 1, 1)
    assert [occ[s.mode("P", k)] for k in (1, 2, 3)] == [1, 1, 1]

    s = prepare_initial(2, 0.5)
    assert len(s.amplitudes) == 4
    assert all(a == pytest.approx(0.5) for a in s.amplitudes.values())


def test_prepare_initial_phase_only_on_later_parties():
    s = prepare_initial(2, 0.5, phi=0.7)
    amps = {bits: a for (bits, _), a in s.amplitudes.items()}
    assert amps[(1, 0)] == pytest.approx(0.5)
    assert amps[(0, 1)] == pytest.approx(0.5 * np.exp(0.7j))


def test_loss_extremes():
    s = apply_loss(prepare_initial(3, 0.4, n_ports=3), 1.0)
    assert all(sum(occ[6:]) == 0 for (_, occ) in s.amplitudes)
    s = apply_loss(prepare_initial(3, 0.4, n_ports=3), 0.0)
    assert all(sum(occ[:6]) == 0 for (_, occ) in s.amplitudes)


def test_misalignment_extremes():
    s0 = apply_loss(prepare_initial(3, 0.4, n_ports=3), 0.8)
    assert apply_polarization_misalignment(s0, 0.0).amplitudes == pytest.approx(s0.amplitudes)
    s = apply_polarization_misalignment(s0, math.pi / 2)
    for (bits, occ) in s.amplitudes:
        for k in (2, 3):
            assert occ[s.mode("P", k)] == 0
        assert occ[s.mode("Pperp", 1)] == 0


def test_stages_preserve_norm_and_photon_number():
    rng = random.Random(3)
    for _ in range(10):
        n = rng.randint(2, 4)
        m = rng.randint(n, 6)
        s = prepare_initial(n, rng.uniform(0, 1), rng.uniform(-3, 3), n_ports=m)
        assert s.norm() == pytest.approx(1, abs=1e-12)
        s = apply_loss(s, rng.uniform(0, 1))
        assert s.norm() == pytest.approx(1, abs=1e-12)
        s = apply_polarization_misalignment(s, rng.uniform(-3, 3))
        assert s.norm() == pytest.approx(1, abs=1e-12)
        s = apply_multiport(s)
        assert s.norm() == pytest.approx(1, abs=1e-12)
        s.check_photon_bound()


def test_multiport_photon_number_conserved_termwise():
    s = random_state(random.Random(5))
    for key, amp in s.amplitudes.items():
        out = apply_multiport(s.copy_with({key: amp}))
        assert {sum(occ) for (_, occ) in out.amplitudes} == {sum(key[1])}
        # loss modes pass through
        assert {occ[2 * s.n_ports:] for (_, occ) in out.amplitudes} == {key[1][2 * s.n_ports:]}


def test_multiport_unitary():
    u2 = multiport_unitary(2)
    assert u2 == pytest.approx(np.array([[1, 1], [1, -1]]) / math.sqrt(2))
    for m in range(2, 9):
        u = multiport_unitary(m)
        assert u @ u.conj().T == pytest.approx(np.eye(m), abs=1e-12)


def test_single_photon_spreads_evenly():
    s = prepare_initial(2, 0.0, n_ports=5)
    s = s.copy_with({((1, 0), tuple(1 if i == 0 else 0 for i in range(s.n_modes))): 1.0})
    out = apply_multiport(s)
    assert len(out.amplitudes) == 5
    for amp in out.amplitudes.values():
        assert abs(amp) == pytest.approx(1 / math.sqrt(5), abs=1e-15)


def test_click_state_examples():
    with pytest.raises(ZeroProbabilityError):
        conditional_click_state(run_pipeline(SetupParams(2, 2, 1.0, 0.5)), 1)
    state = run_pipeline(SetupParams(2, 2, 0.9, 0.5))
    p1, _ = conditional_click_state(state, 1)
    p2, _ = conditional_click_state(state, 2)
    assert p1 == pytest.approx(p2, abs=1e-15)


@pytest.mark.parametrize(
    "n, m, q, t, theta, phi, j",
    [(2, 2, 0.9, 0.5, 0.0, 0.0, 1), (2, 2, 0.7, 0.6, 0.3, 0.2, 2), (3, 4, 0.8, 0.7, 0.25, 0.4, 3)],
)
def test_click_state_matches_termwise_expression(n, m, q, t, theta, phi, j):
    prob, rho = conditional_click_state(run_pipeline(SetupParams(n, m, q, t, theta, phi)), j)
    expected = ref.unnormalized_click_state(n, m, q, t, theta, phi, j)
    assert np.abs(prob * rho - expected).max() < 1e-12


def test_no_click_state():
    prob, rho = no_click_conditional_state(run_pipeline(SetupParams(3, 3, 1.0, 0.5)))
    assert prob == pytest.approx(1.0)
    assert rho[0, 0] == pytest.approx(1.0)
    rng = random.Random(9)
    for _ in range(20):
        n = rng.randint(2, 4)
        p = SetupParams(n, rng.randint(n, 5), rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1))
        prob, _ = no_click_conditional_state(run_pipeline(p))
        assert prob == pytest.approx(no_photon_probability(p), abs=1e-12)


def test_w_state_statistics():
    for n in range(2, 7):
        for j in (1, 2):
            qbers, qz = measure_statistics(w_state(n, j, n), j, n)
            assert qbers == pytest.approx([0.5 - 1 / n] * (n - 1), abs=1e-12)
            assert qz == pytest.approx(0.0, abs=1e-12)


def test_product_state_statistics():
    rho = np.zeros((8, 8))
    rho[0, 0] = 1
    qbers, qz = measure_statistics(rho, 1, 3)
    assert qbers == pytest.approx([0.5, 0.5])
    assert qz == 1.0


def test_pipeline_matches_closed_form():
    p = SetupParams(3, 3, 0.95, 0.3, A, A)
    oracle = oracle_statistics(p)
    analytic = base_statistics(p)
    assert oracle.qber == pytest.approx(analytic.qber, abs=1e-10)
    assert oracle.phase_error == pytest.approx(analytic.phase_error, abs=1e-10)


def test_projector_completeness():
    for p in (SetupParams(2, 2, 0.5, 0.9), SetupParams(3, 5, 0.6, 0.7, 0.3, 0.2), SetupParams(4, 4, 0.2, 1.0)):
        probs = click_pattern_probabilities(run_pipeline(p))
        assert math.fsum(probs.values()) == pytest.approx(1.0, abs=1e-12)


def test_conditional_states_are_density_matrices():
    for p in (SetupParams(3, 4, 0.7, 0.6, 0.3, 0.5), SetupParams(4, 4, 0.9, 0.2, A, A)):
        state = run_pipeline(p)
        for _, rho in (conditional_click_state(state, 2), no_click_conditional_state(state)):
            assert np.abs(rho - rho.conj().T).max() < 1e-12
            assert np.linalg.eigvalsh(rho).min() >= -1e-10
            assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


def test_detector_symmetry():
    p = SetupParams(3, 5, 0.8, 0.6, 0.2, 0.3)
    state = run_pipeline(p)
    probs, qbers = [], []
    for j in range(1, 6):
        prob, rho = conditional_click_state(state, j)
        probs.append(prob)
        qbers.append(measure_statistics(rho, j, 5)[0])
    assert max(probs) - min(probs) < 1e-12
    assert np.abs(np.array(qbers) - np.array(qbers[0])).max() < 1e-12


def test_wrong_angles_raise_qber():
    p = SetupParams(3, 3, 0.95, 0.5)
    prob, rho = conditional_click_state(run_pipeline(p), 2)
    tuned = max(measure_statistics(rho, 2, 3)[0])
    untuned = max(measure_statistics(rho, 2, 3, angles=[0.0, 0.0, 0.0])[0])
    assert untuned > tuned
    assert measurement_angles(3, 2, 3) == pytest.approx([0, 2 * math.pi / 3, 4 * math.pi / 3])


def test_placement_independence():
    p = SetupParams(2, 4, 0.8, 0.6, 0.2, 0.3)
    a = run_pipeline(p, input_ports=(1, 2))
    b = run_pipeline(p, input_ports=(1, 3))
    for j in range(1, 5):
        pa, rho_a = conditional_click_state(a, j)
        pb, rho_b = conditional_click_state(b, j)
        assert pa == pytest.approx(pb, abs=1e-12)
    pa, rho_a = conditional_click_state(a, 1)
    pb, rho_b = conditional_click_state(b, 1)
    # the port-3 input picks up different multiport phases, which the angles absorb
    qa, za = measure_statistics(rho_a, 1, 4)
    qb, zb = measure_statistics(rho_b, 1, 4)
    assert qa == pytest.approx(qb, abs=1e-12)
    assert za == pytest.approx(zb, abs=1e-12)


def test_w_limit_fidelity():
    for n in (2, 3, 4):
        for q in (0.999, 0.9999):
            for j in (1, 2):
                _, rho = conditional_click_state(run_pipeline(SetupParams(n, n, q, 1.0)), j)
                fidelity = np.real(np.trace(w_state(n, j, n) @ rho))
                assert fidelity >= 1 - 10 * (1 - q)


def test_state_size_guard():
    with pytest.raises(StateSizeError):
        run_pipeline(SetupParams(7, 7, 0.5, 0.5))
    with pytest.raises(StateSizeError):
        run_pipeline(SetupParams(3, 9, 0.5, 0.5))


def test_dump_round_trip():
    state = run_pipeline(SetupParams(2, 3, 0.7, 0.4, 0.1, 0.2))
    buf = io.StringIO()
    dump_state(state, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# N=2 M=3 ports=1,2"
    bits, occ, re, im = lines[1].split(" | ")
    assert len(bits) == 2 and len(occ.split(",")) == 8
    buf.seek(0)
    back = load_state(buf)
    assert back.amplitudes.keys() == state.amplitudes.keys()
    for k, amp in state.amplitudes.items():
        assert back.amplitudes[k] == amp


def test_bits_to_index():
    assert bits_to_index((1, 0, 0)) == 4
    assert bits_to_index((0, 0, 1)) == 1
