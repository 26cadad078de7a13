"""Closed-form statistics of an honestly implemented round.

All quantities refer to a single round in which every party emits the
qubit-photon superposition ``sqrt(q)|0,vac> + sqrt(1-q)|1,1ph>`` through a
channel of transmittance ``t`` into an ``M``-port discrete-Fourier multiport
with threshold detectors. Parties 2..N carry a polarization rotation ``theta``
and a phase offset ``phi`` relative to party 1.

The detection statistics are functions of sums of the form

    sum_r  C(.,r) q^(N-r) (1-q)^r  sum_l  C(r,l) (t/M)^l (1-t)^(r-l) l! ...

which are accumulated term by term with the combinatorial prefactor kept in
the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .special_math import DOMAIN_TOL, clamp_probability, ln_binomial, log_pow

#: Misalignment used for the reference simulations: sin^2(theta) = 0.02.
REFERENCE_MISALIGNMENT = math.asin(math.sqrt(0.02))


class UndefinedStatisticsError(ValueError):
    """Raised when a conditional statistic is requested for a zero-probability event."""


def _check_probability(name: str, value: float) -> None:
    if not (-DOMAIN_TOL <= value <= 1.0 + DOMAIN_TOL):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SetupParams:
    """Physical and protocol parameters of one configuration.

    Attributes
    ----------
    n_parties : int
        Number of parties ``N``.
    n_ports : int
        Number of multiport input/output ports ``M`` (``M >= N``).
    q : float
        Weight of the vacuum branch in each party's initial state.
    t : float
        Transmittance of each party-to-node channel.
    theta : float
        Polarization misalignment of parties 2..N (radians).
    phi : float
        Phase misalignment of parties 2..N (radians).
    p_dark : float
        Dark-count probability per detector per round.
    """

    n_parties: int
    n_ports: int
    q: float
    t: float
    theta: float = 0.0
    phi: float = 0.0
    p_dark: float = 0.0

    def __post_init__(self):
        if int(self.n_parties) != self.n_parties or self.n_parties < 2:
            raise ValueError(f"n_parties must be an integer >= 2, got {self.n_parties!r}")
        if int(self.n_ports) != self.n_ports or self.n_ports < self.n_parties:
            raise ValueError(
                f"n_ports must be an integer >= n_parties={self.n_parties}, got {self.n_ports!r}"
            )
        for name in ("q", "t", "p_dark"):
            _check_probability(name, getattr(self, name))
        # normalize tiny excursions so downstream power laws never see x < 0
        object.__setattr__(self, "q", min(1.0, max(0.0, float(self.q))))
        object.__setattr__(self, "t", min(1.0, max(0.0, float(self.t))))
        object.__setattr__(self, "p_dark", min(1.0, max(0.0, float(self.p_dark))))
        object.__setattr__(self, "n_parties", int(self.n_parties))
        object.__setattr__(self, "n_ports", int(self.n_ports))

    def replace(self, **changes) -> SetupParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelStatistics:
    """Single-click probability ``p_j``, QBER and phase-error rate ``Q_Z``."""

    click_prob: float
    qber: float
    phase_error: float


def loss_db_to_transmittance(loss_db: float) -> float:
    """``t = 10^(-dB/10)``; the single place where dB enters the model."""
    if loss_db < 0:
        raise ValueError(f"loss must be nonnegative dB, got {loss_db!r}")
    return 10.0 ** (-loss_db / 10.0)


def transmittance_to_loss_db(t: float) -> float:
    return -10.0 * math.log10(t)


def _photon_term(n_parties: int, bits: int, q: float) -> float:
    # ln[q^(N-bits) (1-q)^bits]
    return log_pow(q, n_parties - bits) + log_pow(1.0 - q, bits)


def _arrival_term(arrived: int, lost: int, t: float, n_ports: int) -> float:
    # ln[(t/M)^arrived (1-t)^lost]
    return log_pow(t / n_ports, arrived) + log_pow(1.0 - t, lost)


def _bunching_sum(r: int, params: SetupParams) -> float:
    """Click weight of ``r`` emitted photons, party 1 not among them.

    ``sum_{l=1}^{r} C(r,l) (t/M)^l (1-t)^(r-l) l!`` -- all arriving photons
    are mutually indistinguishable and must all exit the clicking port.
    """
    t, m = params.t, params.n_ports
    terms = [
        math.exp(ln_binomial(r, l) + math.lgamma(l + 1) + _arrival_term(l, r - l, t, m))
        for l in range(1, r + 1)
    ]
    return math.fsum(terms)


def _bunching_sum_with_first(r: int, params: SetupParams) -> float:
    """Click weight of ``r`` emitted photons, party 1 among them.

    Splits into the cases where party 1's photon arrives (its polarization
    overlap with the others contributes ``sin^2 + l cos^2``) and where it is
    lost.
    """
    t, m = params.t, params.n_ports
    sin2 = math.sin(params.theta) ** 2
    cos2 = math.cos(params.theta) ** 2
    terms = []
    for l in range(1, r + 1):
        weight = sin2 + l * cos2
        if weight == 0.0:
            continue
        terms.append(
            weight
            * math.exp(ln_binomial(r - 1, l - 1) + math.lgamma(l) + _arrival_term(l, r - l, t, m))
        )
    for l in range(1, r):
        terms.append(
            math.exp(ln_binomial(r - 1, l) + math.lgamma(l + 1) + _arrival_term(l, r - l, t, m))
        )
    return math.fsum(terms)


def _click_weight(params: SetupParams, parity: int | None = None) -> float:
    """Unnormalized probability of a single click at a fixed port.

    With ``parity`` set, only qubit patterns whose Hamming weight has that
    parity are kept (0 gives the numerator of the phase-error rate).
    """
    n, q = params.n_parties, params.q
    terms = []
    for r in range(1, n + 1):
        if parity is not None and r % 2 != parity:
            continue
        log_emit = _photon_term(n, r, q)
        if log_emit == -math.inf:
            continue
        emit = math.exp(log_emit)
        # party 1 silent: C(N-1, r) patterns
        if r <= n - 1:
            terms.append(math.exp(ln_binomial(n - 1, r)) * emit * _bunching_sum(r, params))
        # party 1 emitting: C(N-1, r-1) patterns
        terms.append(math.exp(ln_binomial(n - 1, r - 1)) * emit * _bunching_sum_with_first(r, params))
    return math.fsum(terms)


def _coherence_weight(params: SetupParams) -> float:
    """Weight of the 1<->k coherence that lowers the QBER below 1/2.

    ``sum_{r=0}^{N-2} C(N-2,r) q^(N-r-1) (1-q)^(r+1)
    sum_{l=0}^{r} C(r,l) (l+1)! (t/M)^(l+1) (1-t)^(r-l)``
    """
    n, q, t, m = params.n_parties, params.q, params.t, params.n_ports
    terms = []
    for r in range(0, n - 1):
        log_emit = _photon_term(n, r + 1, q)
        if log_emit == -math.inf:
            continue
        for l in range(0, r + 1):
            log_term = (
                ln_binomial(n - 2, r)
                + ln_binomial(r, l)
                + math.lgamma(l + 2)
                + log_emit
                + _arrival_term(l + 1, r - l, t, m)
            )
            terms.append(math.exp(log_term))
    return math.fsum(terms)


def single_click_probability(params: SetupParams) -> float:
    """Probability that only one given detector clicks, without dark counts."""
    return clamp_probability(_click_weight(params), "single-click probability")


def _require_click(params: SetupParams) -> float:
    p = single_click_probability(params)
    if p <= 0.0:
        raise UndefinedStatisticsError(
            "single-click probability is zero; conditional statistics are undefined"
        )
    return p


def qber(params: SetupParams) -> float:
    """QBER between party 1 and any party k, with the click-dependent angles applied."""
    p = _require_click(params)
    corr = math.cos(params.phi) * math.cos(params.theta) * _coherence_weight(params) / p
    return clamp_probability(0.5 - corr, "QBER")


def phase_error_rate(params: SetupParams) -> float:
    """Probability that the product of all Z outcomes is +1 given a single click."""
    p = _require_click(params)
    return clamp_probability(_click_weight(params, parity=0) / p, "phase-error rate")


def no_photon_probability(params: SetupParams) -> float:
    """Probability that no photon reaches any detector: ``(q + (1-q)(1-t))^N``."""
    return (params.q + (1.0 - params.q) * (1.0 - params.t)) ** params.n_parties


def _no_photon_even_weight(params: SetupParams) -> float:
    n, q, t = params.n_parties, params.q, params.t
    terms = [
        math.exp(ln_binomial(n, 2 * l) + log_pow(q, n - 2 * l) + log_pow((1.0 - q) * (1.0 - t), 2 * l))
        for l in range(0, n // 2 + 1)
    ]
    return math.fsum(terms)


def no_photon_phase_error(params: SetupParams) -> float:
    """Probability of an even number of qubits in ``|1>`` given that no photon arrived."""
    p0 = no_photon_probability(params)
    if p0 <= 0.0:
        raise UndefinedStatisticsError("no-photon probability is zero")
    return clamp_probability(_no_photon_even_weight(params) / p0, "no-photon phase error")


def no_photon_qber(params: SetupParams) -> float:
    # without a photon the qubits are diagonal in Z, so X/Y outcomes are uniform
    return 0.5


def base_statistics(params: SetupParams) -> ChannelStatistics:
    """The triple ``(p_j, Q, Q_Z)`` ignoring dark counts."""
    return ChannelStatistics(single_click_probability(params), qber(params), phase_error_rate(params))


def dark_count_adjusted(params: SetupParams) -> ChannelStatistics:
    """Statistics of the observed single-click events including dark counts.

    A click is either photon-induced with all other detectors silent, or a
    dark count at the given detector while no photon arrived anywhere.
    Conditional rates are mixed with the weights of these two events.
    """
    quiet = (1.0 - params.p_dark) ** (params.n_ports - 1)
    p_photon = single_click_probability(params)
    p0 = no_photon_probability(params)
    photon_part = p_photon * quiet
    dark_part = params.p_dark * quiet * p0
    p_click = photon_part + dark_part
    if p_click <= 0.0:
        raise UndefinedStatisticsError("single-click probability is zero even with dark counts")

    w_photon = photon_part / p_click
    w_dark = dark_part / p_click
    if photon_part > 0.0:
        q_x, q_z = qber(params), phase_error_rate(params)
    else:
        q_x = q_z = 0.0
    if dark_part > 0.0:
        dq_x, dq_z = no_photon_qber(params), no_photon_phase_error(params)
    else:
        dq_x = dq_z = 0.0
    return ChannelStatistics(
        click_prob=clamp_probability(p_click),
        qber=clamp_probability(w_photon * q_x + w_dark * dq_x, "QBER"),
        phase_error=clamp_probability(w_photon * q_z + w_dark * dq_z, "phase-error rate"),
    )
