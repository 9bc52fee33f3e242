import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from pfedwn import channel
from pfedwn.channel import (ChannelParams, LognormalFit, VarianceClampWarning,
                            interference_ccdf, interference_moments, link_budget, lognormal_params,
                            mc_transmission_error, path_gain_sqrt, per_subchannel_transmit_prob,
                            rayleigh_partial_moment3, rayleigh_partial_moment5, rayleigh_pdf,
                            rayleigh_tail, thermal_noise, transmission_error_prob)
from pfedwn.exceptions import DegenerateInterferenceError, DomainError, NumericalError, ParameterError
from pfedwn.topology import Node, Topology, build_topology

P = ChannelParams()


def single_link(d, *interferer_distances, params=P):
    """Target at the origin, sender at (d, 0), interferers on the y axis."""
    target = Node(0, (0.0, 0.0), "target")
    nodes = [Node(1, (float(d), 0.0), "neighbor")]
    nodes += [Node(i + 2, (0.0, float(r)), "neighbor") for i, r in enumerate(interferer_distances)]
    return Topology(area=(100.0, 100.0), target=target, neighbors=tuple(nodes), seed=0)


def test_default_parameters():
    assert (P.n_subchannels, P.rayleigh_factor, P.pathloss_exponent, P.ref_distance) == (14, 2.0, 3.0, 1.0)
    assert (P.tx_power, P.frequency, P.bandwidth, P.fading_threshold) == (0.2, 2.4e9, 1e8, 2.0)
    assert P.epsilon == 0.05


@pytest.mark.parametrize("field,value", [("epsilon", 0.0), ("epsilon", 1.0), ("gamma_th", -1.0),
                                         ("pathloss_exponent", 1.5), ("n_subchannels", 0)])
def test_params_reject_invalid(field, value):
    with pytest.raises(ParameterError):
        P.replace(**{field: value})


def test_thermal_noise():
    assert thermal_noise(1.38e-23, 290, 1e8) == pytest.approx(4.002e-13, rel=1e-12)
    assert thermal_noise(1.38e-23, 290, 2e8) == pytest.approx(2 * thermal_noise(1.38e-23, 290, 1e8))
    with pytest.raises(ParameterError):
        thermal_noise(1.38e-23, 0, 1e8)
    assert P.noise_power == pytest.approx(4.002e-13)


def test_path_gain():
    g0 = path_gain_sqrt(1.0, P)
    assert g0 == pytest.approx(2.998e8 / 2.4e9 / (4 * math.pi), rel=1e-12)
    assert g0 == pytest.approx(9.94e-3, rel=1e-3)
    assert path_gain_sqrt(2.0, P) == pytest.approx(g0 * 2 ** -1.5, rel=1e-12)
    with pytest.raises(DomainError):
        path_gain_sqrt(0.5, P)


def test_rayleigh_pdf():
    assert rayleigh_pdf(0.0, 2.0) == 0.0
    total, _ = integrate.quad(rayleigh_pdf, 0, np.inf, args=(2.0,), epsabs=1e-12)
    assert total == pytest.approx(1.0, abs=1e-8)
    m2, _ = integrate.quad(lambda x: x * x * rayleigh_pdf(x, 2.0), 0, np.inf, epsabs=1e-12)
    assert m2 == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("beta,gamma", [(0.0, 2.0), (1.0, 1.0), (2.0, 2.0), (3.0, 4.0)])
def test_rayleigh_tail_matches_quadrature(beta, gamma):
    q, _ = integrate.quad(rayleigh_pdf, beta, np.inf, args=(gamma,), epsabs=1e-12)
    assert rayleigh_tail(beta, gamma) == pytest.approx(q, abs=1e-8)


def test_rayleigh_tail_values():
    assert rayleigh_tail(0.0, 2.0) == 1.0
    assert rayleigh_tail(2.0, 2.0) == pytest.approx(0.135335, abs=1e-6)


@pytest.mark.parametrize("gamma", [1.0, 2.0, 4.0])
@pytest.mark.parametrize("beta", [0.0, 1.0, 2.0])
def test_partial_moments_match_quadrature(beta, gamma):
    q3, _ = integrate.quad(lambda x: x ** 2 * rayleigh_pdf(x, gamma), beta, np.inf, epsabs=1e-13, epsrel=1e-13)
    q5, _ = integrate.quad(lambda x: x ** 4 * rayleigh_pdf(x, gamma), beta, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert abs(rayleigh_partial_moment3(beta, gamma) - q3) < 1e-8
    assert abs(rayleigh_partial_moment5(beta, gamma) - q5) < 1e-8


def test_third_moment_at_zero_threshold():
    assert rayleigh_partial_moment3(0.0, 2.0) == 2.0


def test_per_subchannel_prob():
    assert per_subchannel_transmit_prob(0.0, 2.0, 1) == 1.0
    expected = (1 / 14) * (1 - (1 - math.exp(-2)) ** 14)
    assert per_subchannel_transmit_prob(2.0, 2.0, 14) == pytest.approx(expected, rel=1e-12)
    assert per_subchannel_transmit_prob(2.0, 2.0, 14) == pytest.approx(0.06210, abs=5e-6)


def test_per_subchannel_prob_monte_carlo():
    rng = np.random.default_rng(11)
    n = 10 ** 6
    fade = rng.exponential(2.0, (n, 14))
    hit = (fade.max(axis=1) >= 4.0) & (fade.argmax(axis=1) == 0)
    p = per_subchannel_transmit_prob(2.0, 2.0, 14)
    assert abs(hit.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_no_interferers_gives_zero_moments():
    b = link_budget(single_link(5.0), P, 1)
    assert interference_moments(b, P) == (0.0, 0.0)


def test_single_interferer_mean_monte_carlo():
    """The closed-form mean is the mean of P g^2 x^2 1{x >= beta} times an
    independent occupancy indicator with the per-subchannel probability.

    A physical best-of-|F| interferer transmits its peak draw instead, whose
    mean is several times larger; this test pins the moment model only."""
    b = link_budget(single_link(5.0, 10.0), P, 1)
    mean, var = interference_moments(b, P)
    rng = np.random.default_rng(12)
    n = 10 ** 6
    x2 = rng.exponential(P.rayleigh_factor, n)
    occ = rng.random(n) < per_subchannel_transmit_prob(2.0, 2.0, 14)
    sample = P.tx_power * b.interferer_gains[0] ** 2 * x2 * (x2 >= 4.0) * occ
    assert abs(sample.mean() - mean) < 3 * sample.std() / math.sqrt(n)


def test_variance_equals_sum_of_independent_variances():
    b = link_budget(single_link(5.0, 10.0, 20.0, 7.0), P, 1)
    mean, var = interference_moments(b, P)
    occ = per_subchannel_transmit_prob(2.0, 2.0, 14)
    first = P.tx_power * b.interferer_gains ** 2 * rayleigh_partial_moment3(2.0, 2.0) * occ
    second = (P.tx_power * b.interferer_gains ** 2 * occ) ** 2 * rayleigh_partial_moment5(2.0, 2.0)
    # the original pairwise form: own second moments + cross products - mean^2
    cross = sum(first[i] * first[j] for i in range(3) for j in range(3) if i != j)
    assert var == pytest.approx(second.sum() + cross - first.sum() ** 2, rel=1e-9)
    assert mean == pytest.approx(first.sum(), rel=1e-12)


def test_negative_variance_clamped_with_diagnostic(monkeypatch):
    # the closed forms obey m5 >= m3^2, so a negative variance needs a broken m5
    b = link_budget(single_link(5.0, 10.0), P, 1)
    monkeypatch.setattr(channel, "rayleigh_partial_moment5", lambda beta, gamma: 0.0)
    before = channel.diagnostics["variance_clamped"]
    with pytest.warns(VarianceClampWarning):
        mean, var = interference_moments(b, P)
    assert var == 0.0 and mean > 0
    assert channel.diagnostics["variance_clamped"] == before + 1


def test_lognormal_examples():
    fit = lognormal_params(1.0, math.e - 1)
    assert fit.mu == pytest.approx(-0.5, abs=1e-12)
    assert fit.sigma == pytest.approx(1.0, abs=1e-12)
    point = lognormal_params(3.0, 0.0)
    assert point.sigma == 0.0 and point.mu == pytest.approx(math.log(3.0))
    with pytest.raises(DegenerateInterferenceError):
        lognormal_params(0.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-30, 5), st.floats(-4, 4))
def test_lognormal_round_trip(log_mean, log_ratio):
    mean = math.exp(log_mean)
    var = mean * mean * math.exp(log_ratio)
    fit = lognormal_params(mean, var)
    assert math.exp(fit.mu + fit.sigma ** 2 / 2) == pytest.approx(mean, rel=1e-9)
    assert math.expm1(fit.sigma ** 2) * math.exp(2 * fit.mu + fit.sigma ** 2) == pytest.approx(var, rel=1e-9)


def test_ccdf_examples():
    fit = LognormalFit(mu=-0.5, sigma=1.0, mean=1.0, variance=math.e - 1)
    assert interference_ccdf(math.exp(-0.5), fit) == pytest.approx(0.5)
    assert interference_ccdf(1e-300, fit) == pytest.approx(1.0)
    assert interference_ccdf(0.0, fit) == 1.0
    assert interference_ccdf(-1.0, fit) == 1.0
    assert interference_ccdf(1.0, fit) == pytest.approx(0.30854, abs=1e-5)
    step = LognormalFit(mu=0.0, sigma=0.0, mean=1.0, variance=0.0)
    assert interference_ccdf(0.5, step) == 1.0 and interference_ccdf(2.0, step) == 0.0


def test_perr_vanishes_for_strong_isolated_link():
    b = link_budget(single_link(2.0), P, 1)
    assert transmission_error_prob(b, P) == pytest.approx(0.0, abs=1e-6)


def test_perr_tends_to_tail_for_huge_threshold():
    b = link_budget(single_link(20.0, 5.0), P, 1)
    assert transmission_error_prob(b, P.replace(gamma_th=1e12)) == pytest.approx(math.exp(-2), abs=1e-6)


def test_conditioned_variant_divides_by_tail():
    b = link_budget(single_link(20.0, 5.0, 9.0), P, 1)
    joint = transmission_error_prob(b, P)
    assert transmission_error_prob(b, P, conditioned=True) == pytest.approx(joint / math.exp(-2), rel=1e-12)
    assert transmission_error_prob(b, P.replace(conditioned=True)) == pytest.approx(joint / math.exp(-2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_perr_bounded_and_monotone_in_threshold(seed, n):
    topo = build_topology(n_neighbors=n, seed=seed)
    b = link_budget(topo, P, 1)
    values = [transmission_error_prob(b, P.replace(gamma_th=g)) for g in (1.0, 5.0, 10.0, 15.0, 40.0)]
    assert all(0.0 <= v <= math.exp(-2) + 1e-15 for v in values)
    assert all(b2 >= b1 - 1e-9 for b1, b2 in zip(values, values[1:]))


def test_quadrature_failure_raises_numerical_error(monkeypatch):
    def bad_quad(*args, **kwargs):
        warnings.warn("no convergence", integrate.IntegrationWarning)
        return 0.0, 1.0

    monkeypatch.setattr(channel.integrate, "quad", bad_quad)
    with pytest.raises(NumericalError) as info:
        transmission_error_prob(link_budget(single_link(20.0, 5.0), P, 1), P)
    assert info.value.diagnostics["session"] == 1


def test_mc_trivial_limits():
    topo = single_link(10.0, 5.0, 8.0)
    rng = np.random.default_rng(0)
    assert mc_transmission_error(topo, P.replace(gamma_th=1e-30), 1, 20_000, rng) == 0.0
    assert mc_transmission_error(topo, P.replace(fading_threshold_overrides={1: 1e3}), 1, 20_000, rng) == 0.0


def test_mc_matches_analytic_without_interference():
    # with no interferers both sides describe the same event exactly
    topo = single_link(60.0)
    for g in (5.0, 20.0, 60.0):
        p = P.replace(gamma_th=g)
        a = transmission_error_prob(link_budget(topo, p, 1), p)
        mc = mc_transmission_error(topo, p, 1, 400_000, np.random.default_rng(int(g)))
        assert abs(a - mc) < 4 * math.sqrt(max(a * (1 - a), 1e-6) / 400_000) + 1e-4


def test_mc_deterministic_for_fixed_rng():
    topo = single_link(20.0, 5.0, 9.0)
    a = mc_transmission_error(topo, P, 1, 50_000, np.random.default_rng(3))
    b = mc_transmission_error(topo, P, 1, 50_000, np.random.default_rng(3))
    assert a == b
    assert 0.0 <= a <= 1.0


def test_mc_best_sender_option():
    topo = single_link(20.0, 5.0, 9.0)
    est = mc_transmission_error(topo, P, 1, 20_000, np.random.default_rng(4), sender="best")
    assert 0.0 <= est <= 1.0
    with pytest.raises(ParameterError):
        mc_transmission_error(topo, P, 1, 100, np.random.default_rng(4), sender="worst")


def test_mc_respects_upper_bound():
    topo = build_topology(n_neighbors=10, seed=3)
    est = mc_transmission_error(topo, P, 1, 100_000, np.random.default_rng(5))
    assert est <= math.exp(-2) + 3 * math.sqrt(math.exp(-2) / 100_000)


def test_per_node_overrides():
    topo = single_link(20.0, 5.0)
    loud = P.replace(tx_power_overrides={2: 2.0})
    quiet = link_budget(topo, P, 1)
    b = link_budget(topo, loud, 1)
    assert b.interferer_powers[0] == 2.0
    assert interference_moments(b, loud).mean == pytest.approx(10 * interference_moments(quiet, P).mean)
