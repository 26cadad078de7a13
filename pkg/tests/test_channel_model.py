import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference_formulas as ref
from tfcka.channel_model import (
    REFERENCE_MISALIGNMENT,
    SetupParams,
    UndefinedStatisticsError,
    base_statistics,
    dark_count_adjusted,
    loss_db_to_transmittance,
    no_photon_phase_error,
    no_photon_probability,
    no_photon_qber,
    phase_error_rate,
    qber,
    single_click_probability,
    transmittance_to_loss_db,
)
from tfcka.fock_oracle import (
    no_click_conditional_state,
    oracle_dark_count_statistics,
    oracle_statistics,
    run_pipeline,
)

A = REFERENCE_MISALIGNMENT


def test_setup_validation():
    with pytest.raises(ValueError):
        SetupParams(1, 2, 0.5, 0.5)
    with pytest.raises(ValueError):
        SetupParams(3, 2, 0.5, 0.5)
    with pytest.raises(ValueError):
        SetupParams(2, 2, 1.5, 0.5)
    with pytest.raises(ValueError):
        SetupParams(2, 2, 0.5, -0.1)
    p = SetupParams(2, 2, 1 + 1e-13, 0.5)
    assert p.q == 1.0
    assert p.replace(q=0.3).q == 0.3


def test_loss_conversion_round_trip():
    assert loss_db_to_transmittance(0) == 1.0
    assert loss_db_to_transmittance(30) == pytest.approx(1e-3)
    assert transmittance_to_loss_db(loss_db_to_transmittance(17.5)) == pytest.approx(17.5)
    with pytest.raises(ValueError):
        loss_db_to_transmittance(-1)


def test_click_probability_vanishes_without_photons():
    assert single_click_probability(SetupParams(3, 4, 1.0, 0.7, 0.1, 0.2)) == 0.0
    assert single_click_probability(SetupParams(3, 4, 0.6, 0.0, 0.1, 0.2)) == 0.0


@pytest.mark.parametrize(
    "params",
    [
        SetupParams(3, 3, 0.9, 0.4),
        SetupParams(2, 2, 0.99, 0.2),
        SetupParams(2, 2, 0.9, 0.5),
        SetupParams(3, 3, 0.95, 0.3, A, A),
        SetupParams(4, 6, 0.7, 0.8, 0.3, A),
    ],
)
def test_statistics_match_oracle(params):
    analytic = base_statistics(params)
    oracle = oracle_statistics(params)
    assert analytic.click_prob == pytest.approx(oracle.click_prob, abs=1e-10)
    assert analytic.qber == pytest.approx(oracle.qber, abs=1e-10)
    assert analytic.phase_error == pytest.approx(oracle.phase_error, abs=1e-10)


def test_statistics_match_literal_transcription():
    rng = random.Random(7)
    for _ in range(50):
        n = rng.randint(2, 7)
        m = rng.randint(n, 12)
        q, t = rng.uniform(0.01, 0.999), rng.uniform(0.001, 1.0)
        theta, phi = rng.uniform(0, 0.5), rng.uniform(0, 0.5)
        p = SetupParams(n, m, q, t, theta, phi)
        assert single_click_probability(p) == pytest.approx(float(ref.click_prob(n, m, q, t, theta)), rel=1e-12)
        assert qber(p) == pytest.approx(float(ref.qber(n, m, q, t, theta, phi)), abs=1e-12)
        assert phase_error_rate(p) == pytest.approx(float(ref.phase_error(n, m, q, t, theta)), abs=1e-12)


def test_qber_without_phase_coherence_is_half():
    assert qber(SetupParams(3, 4, 0.8, 0.6, 0.0, math.pi / 2)) == 0.5


def test_qber_approaches_w_value():
    p = SetupParams(3, 3, 1 - 1e-6, 1.0)
    assert qber(p) == pytest.approx(0.5 - 1 / 3, abs=1e-5)


def test_undefined_statistics():
    p = SetupParams(3, 3, 1.0, 0.5)
    with pytest.raises(UndefinedStatisticsError):
        qber(p)
    with pytest.raises(UndefinedStatisticsError):
        phase_error_rate(p)
    with pytest.raises(UndefinedStatisticsError):
        no_photon_phase_error(SetupParams(2, 2, 0.0, 1.0))
    with pytest.raises(UndefinedStatisticsError):
        dark_count_adjusted(SetupParams(2, 2, 1.0, 0.5, p_dark=0.0))


def test_phase_error_vanishes_linearly_in_one_minus_q():
    values = [phase_error_rate(SetupParams(4, 4, 1 - eps, 0.9)) for eps in (1e-3, 1e-4, 1e-5)]
    assert values[0] > values[1] > values[2] > 0
    assert values[1] / values[0] == pytest.approx(0.1, rel=0.05)
    assert values[2] / values[1] == pytest.approx(0.1, rel=0.05)


def test_no_photon_quantities():
    assert no_photon_probability(SetupParams(3, 3, 1.0, 0.3)) == 1.0
    assert no_photon_probability(SetupParams(3, 3, 0.0, 1.0)) == 0.0
    assert no_photon_probability(SetupParams(3, 3, 0.9, 0.5)) == pytest.approx(0.857375, rel=1e-14)
    assert no_photon_phase_error(SetupParams(3, 3, 1.0, 0.3)) == 1.0
    assert no_photon_phase_error(SetupParams(2, 2, 0.5, 1.0)) == 1.0
    assert no_photon_qber(SetupParams(2, 2, 0.5, 0.5)) == 0.5


def test_no_photon_phase_error_matches_oracle():
    p = SetupParams(3, 3, 0.9, 0.5)
    prob, rho = no_click_conditional_state(run_pipeline(p))
    assert prob == pytest.approx(no_photon_probability(p), abs=1e-12)
    even = sum(rho[i, i].real for i in range(8) if bin(i).count("1") % 2 == 0)
    assert no_photon_phase_error(p) == pytest.approx(even, abs=1e-10)


def test_dark_count_zero_is_bitwise_base():
    rng = random.Random(11)
    for _ in range(100):
        n = rng.randint(2, 6)
        p = SetupParams(n, rng.randint(n, 10), rng.uniform(0, 0.999), rng.uniform(0.01, 1), rng.uniform(0, 1), rng.uniform(0, 1))
        assert dark_count_adjusted(p) == base_statistics(p)


def test_dark_counts_only():
    pd = 1e-6
    stats = dark_count_adjusted(SetupParams(3, 5, 1.0, 0.4, p_dark=pd))
    assert stats.click_prob == pytest.approx(pd * (1 - pd) ** 4, rel=1e-15)
    assert stats.qber == 0.5
    assert stats.phase_error == 1.0


def test_dark_counts_match_oracle_components():
    p = SetupParams(5, 5, 0.998, 1e-3, A, A, 1e-9)
    analytic = dark_count_adjusted(p)
    oracle = oracle_dark_count_statistics(p)
    assert analytic.click_prob == pytest.approx(oracle.click_prob, rel=1e-10)
    assert analytic.qber == pytest.approx(oracle.qber, abs=1e-10)
    assert analytic.phase_error == pytest.approx(oracle.phase_error, abs=1e-10)


def test_click_probability_monotone_in_t_single_photon_regime():
    for n in (2, 3, 5):
        for q in (0.99, 0.995, 0.9999):
            ts = [k / 1000 for k in range(0, 101)]
            values = [single_click_probability(SetupParams(n, n, q, t)) for t in ts]
            assert all(b >= a for a, b in zip(values, values[1:]))


@settings(max_examples=80)
@given(
    st.integers(2, 7),
    st.integers(0, 4),
    st.floats(0, 1),
    st.floats(0, 1),
    st.floats(-math.pi, math.pi),
    st.floats(-math.pi, math.pi),
    st.floats(0, 1e-3),
)
def test_outputs_are_probabilities(n, extra, q, t, theta, phi, pd):
    p = SetupParams(n, n + extra, q, t, theta, phi, pd)
    pj = single_click_probability(p)
    assert 0 <= pj and p.n_ports * pj <= 1 + 1e-12
    try:
        stats = dark_count_adjusted(p)
    except UndefinedStatisticsError:
        return
    for v in (stats.click_prob, stats.qber, stats.phase_error):
        assert 0.0 <= v <= 1.0
    if pj > 0 and theta == 0 and phi == 0:
        assert qber(p) >= 0.5 - 1 / n - 1e-9
