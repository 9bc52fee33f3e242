"""Physical-layer model for the D2D links.

Path loss, Rayleigh fading, interference moments with their log-normal
approximation, and the transmission-error probability of a neighbor ->
target session, plus a Monte Carlo estimator that sums interference
exactly instead of approximating it.

Notation used in code: ``gain`` is the square root of the path loss
(amplitude, dimensionless), ``beta`` the fading threshold a node needs on
its best sub-channel before it transmits, ``p_sub`` the probability that a
given interferer occupies one particular sub-channel.
"""

import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from ._validation import check_int, check_positive
from .exceptions import DegenerateInterferenceError, DomainError, NumericalError, ParameterError
from .topology import distance

SPEED_OF_LIGHT = 2.998e8
# x beyond which the Rayleigh tail exp(-x^2 / Gamma) drops under 1e-12
TAIL_CUTOFF = 1e-12

diagnostics = Counter()


class VarianceClampWarning(RuntimeWarning):
    """Second interference moment came out negative and was clamped to zero."""


@dataclass(frozen=True)
class ChannelParams:
    n_subchannels: int = 14
    rayleigh_factor: float = 2.0
    pathloss_exponent: float = 3.0
    ref_distance: float = 1.0
    tx_power: float = 0.2
    frequency: float = 2.4e9
    boltzmann: float = 1.38e-23
    noise_temp: float = 290.0
    bandwidth: float = 1e8
    fading_threshold: float = 2.0
    gamma_th: float = 10.0
    epsilon: float = 0.05
    conditioned: bool = False
    # per-node overrides, node id -> value
    tx_power_overrides: dict = field(default_factory=dict)
    fading_threshold_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        check_int(self.n_subchannels, "n_subchannels", minimum=1)
        for name in ("rayleigh_factor", "ref_distance", "tx_power", "frequency",
                     "boltzmann", "noise_temp", "bandwidth", "fading_threshold", "gamma_th"):
            check_positive(getattr(self, name), name)
        if not self.pathloss_exponent >= 2:
            raise ParameterError(f"pathloss_exponent must be >= 2, got {self.pathloss_exponent}")
        if not 0 < self.epsilon < 1:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        for v in self.tx_power_overrides.values():
            check_positive(v, "tx_power override")
        for v in self.fading_threshold_overrides.values():
            check_positive(v, "fading_threshold override")

    def power(self, node_id):
        return float(self.tx_power_overrides.get(node_id, self.tx_power))

    def beta(self, node_id):
        return float(self.fading_threshold_overrides.get(node_id, self.fading_threshold))

    @property
    def noise_power(self):
        return thermal_noise(self.boltzmann, self.noise_temp, self.bandwidth)

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return ChannelParams(**values)


@dataclass(frozen=True)
class LinkBudget:
    session: int
    path_gain_sqrt: float
    tx_power: float
    beta: float
    noise_power: float
    interferer_ids: tuple = ()
    interferer_gains: np.ndarray = field(default_factory=lambda: np.zeros(0))
    interferer_powers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    interferer_betas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_interferers(self):
        return len(self.interferer_ids)


class InterferenceMoments(NamedTuple):
    mean: float
    variance: float


@dataclass(frozen=True)
class LognormalFit:
    mu: float
    sigma: float
    mean: float
    variance: float


def thermal_noise(boltzmann, temperature, bandwidth):
    check_positive(boltzmann, "boltzmann")
    check_positive(temperature, "noise_temp")
    check_positive(bandwidth, "bandwidth")
    return boltzmann * temperature * bandwidth


def wavelength(frequency):
    return SPEED_OF_LIGHT / frequency


def path_gain_sqrt(d, params):
    """Square root of the single-slope path loss at distance ``d``."""
    d0 = params.ref_distance
    if not d >= d0:
        raise DomainError(f"distance {d} m is below the reference distance {d0} m")
    lam = wavelength(params.frequency)
    return lam / (4.0 * math.pi * d0) * math.sqrt((d0 / d) ** params.pathloss_exponent)


def rayleigh_pdf(x, gamma):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, 2.0 * x / gamma * np.exp(-x * x / gamma), 0.0)
    return float(out) if out.ndim == 0 else out


def rayleigh_tail(beta, gamma):
    """P(h > beta) for the Rayleigh fading amplitude."""
    if beta < 0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    return math.exp(-beta * beta / gamma)


def rayleigh_partial_moment3(beta, gamma):
    """Closed form of the integral of x^2 * pdf(x) over [beta, inf)."""
    b2 = beta * beta
    return (b2 + gamma) * math.exp(-b2 / gamma)


def rayleigh_partial_moment5(beta, gamma):
    """Closed form of the integral of x^4 * pdf(x) over [beta, inf)."""
    b2 = beta * beta
    return (b2 * b2 + 2.0 * gamma * b2 + 2.0 * gamma * gamma) * math.exp(-b2 / gamma)


def per_subchannel_transmit_prob(beta, gamma, n_subchannels):
    """Probability an interferer is active on one given sub-channel.

    It transmits when the best of its ``n_subchannels`` fading draws clears
    ``beta`` and then lands on each sub-channel with equal probability.
    """
    if beta < 0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    n = check_int(n_subchannels, "n_subchannels", minimum=1)
    miss = -math.expm1(-beta * beta / gamma)  # 1 - exp(-beta^2/gamma), accurate near 0
    return (1.0 - miss ** n) / n


def link_budget(topology, params, session):
    """Budget for neighbor ``session`` transmitting to the target; every other
    neighbor of the topology interferes."""
    tpos = topology.target.position
    sender = topology.node(session)
    others = [n for n in topology.neighbors if n.id != session]
    return LinkBudget(
        session=session,
        path_gain_sqrt=path_gain_sqrt(distance(sender.position, tpos), params),
        tx_power=params.power(session),
        beta=params.beta(session),
        noise_power=params.noise_power,
        interferer_ids=tuple(n.id for n in others),
        interferer_gains=np.array([path_gain_sqrt(distance(n.position, tpos), params) for n in others]),
        interferer_powers=np.array([params.power(n.id) for n in others], dtype=np.float64),
        interferer_betas=np.array([params.beta(n.id) for n in others], dtype=np.float64),
    )


def interference_moments(budget, params):
    """Mean and variance of the aggregate interference at the target.

    Each interferer contributes ``P_r g_r^2 x^2 1{x >= beta_r}`` scaled by its
    sub-channel occupancy probability. The variance subtracts the squared mean
    and is clamped to zero (with a :class:`VarianceClampWarning`) if rounding
    drives it negative.
    """
    if budget.n_interferers == 0:
        return InterferenceMoments(0.0, 0.0)
    gamma, n_sub = params.rayleigh_factor, params.n_subchannels
    first = np.empty(budget.n_interferers)
    own_second = np.empty(budget.n_interferers)
    for i, (g, p, b) in enumerate(zip(budget.interferer_gains, budget.interferer_powers,
                                      budget.interferer_betas)):
        occ = per_subchannel_transmit_prob(b, gamma, n_sub)
        first[i] = p * g * g * rayleigh_partial_moment3(b, gamma) * occ
        own_second[i] = p * p * g ** 4 * rayleigh_partial_moment5(b, gamma) * occ * occ
    mean = float(first.sum())
    # sum over r1 != r2 of first[r1] * first[r2] equals mean^2 - sum(first^2);
    # substituting it leaves sum(own_second - first^2) without the cancellation
    variance = float(np.sum(own_second - first * first))
    if variance < 0:
        diagnostics["variance_clamped"] += 1
        warnings.warn(f"interference variance {variance:.3e} clamped to 0", VarianceClampWarning,
                      stacklevel=2)
        variance = 0.0
    return InterferenceMoments(mean, variance)


def lognormal_params(mean, variance):
    if not mean > 0:
        raise DegenerateInterferenceError(f"mean interference must be > 0, got {mean}")
    if variance < 0:
        raise ParameterError(f"variance must be >= 0, got {variance}")
    s2 = math.log1p(variance / (mean * mean))
    return LognormalFit(mu=math.log(mean) - 0.5 * s2, sigma=math.sqrt(s2), mean=mean, variance=variance)


def interference_ccdf(x, fit):
    """P(I > x) under the log-normal fit; ``fit=None`` means zero interference."""
    if x <= 0:
        return 1.0
    if fit is None:
        return 0.0
    if fit.sigma == 0:
        return 1.0 if x < math.exp(fit.mu) else 0.0
    z = (math.log(x) - fit.mu) / fit.sigma
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def transmission_error_prob(budget, params, conditioned=None, epsabs=1e-6):
    """Probability that the session transmits and its SINR falls below threshold.

    Integrates the sender's fading density over ``[beta_s, x_max]`` against the
    interference CCDF evaluated at the largest interference the link could
    absorb. ``x_max`` is where the Rayleigh tail falls under 1e-12. With
    ``conditioned=True`` the result is divided by P(transmit).
    """
    if conditioned is None:
        conditioned = params.conditioned
    gamma = params.rayleigh_factor
    beta = budget.beta
    gth = params.gamma_th
    sig2 = budget.noise_power
    rx = budget.tx_power * budget.path_gain_sqrt ** 2

    moments = interference_moments(budget, params)
    try:
        fit = lognormal_params(moments.mean, moments.variance)
    except DegenerateInterferenceError:
        fit = None

    x_max = math.sqrt(gamma * math.log(1.0 / TAIL_CUTOFF))
    if beta >= x_max:
        return 0.0

    def integrand(x):
        return 2.0 * x / gamma * math.exp(-x * x / gamma) * interference_ccdf(rx * x * x / gth - sig2, fit)

    # kinks: where the absorbable interference turns positive, and the CCDF median
    breaks = [math.sqrt(gth * sig2 / rx)]
    if fit is not None:
        breaks.append(math.sqrt(gth * (sig2 + math.exp(fit.mu)) / rx))
    breaks = sorted(b for b in breaks if beta < b < x_max)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(integrand, beta, x_max, points=breaks or None,
                                           epsabs=epsabs, epsrel=1e-10, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"P_err quadrature did not converge: {exc}", session=budget.session,
                                 interval=(beta, x_max), breakpoints=breaks) from exc
    value = min(max(value, 0.0), rayleigh_tail(beta, gamma))
    if conditioned:
        return value / rayleigh_tail(beta, gamma)
    return value


def mc_transmission_error(topology, params, session, n_samples, rng, sender="single",
                          chunk=20_000):
    """Monte Carlo estimate of the transmission-error probability.

    Each interferer draws one fading amplitude per sub-channel, picks its best,
    transmits only if that clears its threshold, and then occupies that
    sub-channel. Interference on the sender's sub-channel is summed exactly.

    ``sender="single"`` gives the sender one Rayleigh draw on a uniformly
    chosen sub-channel, the fading law the analytic integral assumes.
    ``sender="best"`` lets the sender also take the best of its sub-channels.
    """
    n_samples = check_int(n_samples, "n_samples", minimum=1)
    if sender not in ("single", "best"):
        raise ParameterError(f"sender must be 'single' or 'best', got {sender!r}")
    b = link_budget(topology, params, session)
    gamma, n_sub = params.rayleigh_factor, params.n_subchannels
    rx = b.tx_power * b.path_gain_sqrt ** 2
    int_rx = b.interferer_powers * b.interferer_gains ** 2
    int_beta2 = b.interferer_betas ** 2
    errors = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        # squared Rayleigh amplitude is exponential with mean Gamma
        if sender == "best":
            fade = rng.exponential(gamma, (n, n_sub))
            ch = fade.argmax(axis=1)
            xs2 = fade[np.arange(n), ch]
        else:
            xs2 = rng.exponential(gamma, n)
            ch = rng.integers(0, n_sub, n)
        interference = np.zeros(n)
        if b.n_interferers:
            fr = rng.exponential(gamma, (n, b.n_interferers, n_sub))
            best = fr.argmax(axis=2)
            peak = np.take_along_axis(fr, best[..., None], axis=2)[..., 0]
            active = (peak >= int_beta2) & (best == ch[:, None])
            interference = (int_rx * peak * active).sum(axis=1)
        sinr = rx * xs2 / (b.noise_power + interference)
        errors += int(np.count_nonzero((xs2 >= b.beta ** 2) & (sinr < params.gamma_th)))
        done += n
    return errors / n_samples
