import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import true_single_photon, vacuum_weak_bounds
from qkdnet.keyrate import (
    REFERENCE_PARAMS, ChannelObservables, DomainError, EstimateDegenerate, QkdSystemParams,
    binary_entropy,
    decoy_estimate, edge_key_capability, key_rate, load_params, simulate_observables,
    transmittance,
)
from qkdnet.model import Edge

ASYMPTOTIC = REFERENCE_PARAMS.replace(finite_key=False)


@pytest.mark.parametrize("x, expected", [(0.5, 1.0), (0.0, 0.0), (1.0, 0.0)])
def test_binary_entropy_anchor_points(x, expected):
    assert binary_entropy(x) == expected


def test_binary_entropy_at_0_11():
    exact = -0.11 * math.log2(0.11) - 0.89 * math.log2(0.89)
    assert binary_entropy(0.11) == pytest.approx(exact, abs=1e-15)
    assert binary_entropy(0.11) == pytest.approx(0.499916, abs=1e-6)


@pytest.mark.parametrize("x", [-0.01, 1.0001, math.nan])
def test_binary_entropy_rejects_out_of_range(x):
    with pytest.raises(DomainError):
        binary_entropy(x)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_binary_entropy_symmetric(x):
    assert binary_entropy(x) == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)


@pytest.mark.parametrize("length, eta", [(0, 0.1), (50, 0.01), (85, 1.9953e-3)])
def test_transmittance(length, eta):
    assert transmittance(length) == pytest.approx(eta, rel=1e-4)


def test_transmittance_rejects_negative_length():
    with pytest.raises(DomainError):
        transmittance(-1.0)


def test_vacuum_state_sees_only_background():
    obs = simulate_observables(40.0)
    assert obs.q_phi == pytest.approx(REFERENCE_PARAMS.y0)
    assert obs.e_phi == pytest.approx(REFERENCE_PARAMS.e0)


def test_observables_at_85_km():
    obs = simulate_observables(85.0)
    assert obs.q_mu == pytest.approx(8.188e-4, rel=1e-3)
    assert obs.e_mu == pytest.approx(2.26e-2, rel=1e-2)
    assert obs.q_phi <= obs.q_nu <= obs.q_mu


def test_noiseless_channel_has_no_errors():
    p = REFERENCE_PARAMS.replace(y0=0.0, e_det=0.0)
    obs = simulate_observables(20.0, p)
    assert obs.e_mu == 0.0 and obs.e_nu == 0.0


def test_decoy_estimate_matches_vacuum_weak_formulas():
    est = decoy_estimate(simulate_observables(85.0, ASYMPTOTIC), ASYMPTOTIC)
    q1, e1 = vacuum_weak_bounds(85.0, ASYMPTOTIC)
    assert est.q1_lower == pytest.approx(q1, rel=1e-9)
    assert est.e1_upper == pytest.approx(e1, rel=1e-9)
    assert est.q1_lower == pytest.approx(5.3e-4, rel=0.10)
    assert est.e1_upper == pytest.approx(1.6e-2, rel=0.20)


def test_finite_key_relaxation_is_adversarial():
    for length in (0.0, 30.0, 85.0, 110.0):
        ref = REFERENCE_PARAMS
        fin = decoy_estimate(simulate_observables(length, ref), ref)
        asy = decoy_estimate(simulate_observables(length, ASYMPTOTIC), ASYMPTOTIC)
        assert fin.q1_lower <= asy.q1_lower
        assert fin.e1_upper >= asy.e1_upper


def test_degenerate_estimate_raises():
    # a decoy gain below the vacuum gain leaves no room for single photons
    obs = ChannelObservables(q_mu=1e-3, q_nu=1e-6, q_phi=1e-5, e_mu=0.02, e_nu=0.02, e_phi=0.5)
    with pytest.raises(EstimateDegenerate):
        decoy_estimate(obs, ASYMPTOTIC)


def _random_params(rng):
    mu = rng.uniform(0.2, 0.8)
    return QkdSystemParams(
        alpha=rng.uniform(0.15, 0.3), eta_bob=rng.uniform(0.02, 0.5),
        e_det=rng.uniform(0.0, 0.05), mu=mu, nu=rng.uniform(0.02, 0.5 * mu), phi=0.0,
        y0=10 ** rng.uniform(-7, -4), e0=0.5, finite_key=rng.random() < 0.5)


def test_decoy_bounds_valid_on_synthetic_channels():
    rng = random.Random(20240611)
    for _ in range(100):
        p = _random_params(rng)
        length = rng.uniform(0, 120)
        try:
            est = decoy_estimate(simulate_observables(length, p), p)
        except EstimateDegenerate:
            continue
        q1, e1 = true_single_photon(length, p)
        assert est.q1_lower <= q1 * (1 + 1e-12)
        assert est.e1_upper >= e1 * (1 - 1e-12)


def test_key_rate_anchor_at_85_km():
    assert 186_400 <= key_rate(85.0) <= 279_600


def test_key_rate_clamps_to_zero_at_long_distance():
    assert key_rate(200.0) == 0.0


def test_key_rate_decreases_with_length():
    assert key_rate(16.0) > key_rate(85.0)
    rates = [key_rate(float(km)) for km in range(0, 151)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert all(r >= 0 for r in rates)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.0, max_value=150.0))
def test_finite_key_never_exceeds_asymptotic(length):
    assert key_rate(length, REFERENCE_PARAMS) <= key_rate(length, ASYMPTOTIC)


def test_edge_capability_without_classical_channel_is_zero():
    assert edge_key_capability(Edge("a", "b", 10.0, classical_capacity_bps=0.0)) == 0.0


def test_edge_capability_scales_with_system_count():
    one = edge_key_capability(Edge("v1", "v2", 85.0))
    two = edge_key_capability(Edge("v1", "v2", 85.0, system_count=2))
    assert 186_400 <= one <= 279_600
    assert two == 2 * one


def test_edge_capability_override():
    assert edge_key_capability(Edge("a", "b", 85.0, key_rate_bps=1234.0, system_count=3)) == 3702.0


@pytest.mark.parametrize("changes", [
    {"nu": 0.5},            # decoy above signal
    {"phi": 0.2},           # vacuum above decoy
    {"e_det": 0.6},
    {"q": 0.0},
    {"f_ec": 0.9},
    {"varsigma": 1.0},
    {"n_mu": -1.0},
])
def test_invalid_parameters_rejected(changes):
    with pytest.raises(DomainError):
        REFERENCE_PARAMS.replace(**changes)


def test_bundled_parameter_file_matches_defaults():
    assert load_params("table3.params") == REFERENCE_PARAMS


def test_parameter_file_errors_name_the_field(tmp_path):
    bad = tmp_path / "bad.params"
    bad.write_text("mu: 0.4\nnu: lots\n")
    with pytest.raises(DomainError, match="nu"):
        load_params(bad)
    bad.write_text("mu: 0.4\nwavelength: 1550\n")
    with pytest.raises(DomainError, match="wavelength"):
        load_params(bad)
