"""Asymptotic conference key rate and the benchmarks it is compared with."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .channel_model import SetupParams, UndefinedStatisticsError, dark_count_adjusted
from .special_math import binary_entropy


@dataclass(frozen=True)
class RateResult:
    """A rate in secret bits per round, the parameters behind it and diagnostics."""

    rate: float
    params: SetupParams | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"rate must be nonnegative, got {self.rate!r}")


def asymptotic_rate(params: SetupParams) -> RateResult:
    """``M p_j [1 - h(Q_Z) - max_k h(Q_1k)]`` from the dark-count-adjusted statistics.

    Error rates above 1/2 are capped at 1/2 before the entropy, matching the
    finite-key length in the limit of infinitely many rounds.
    """
    stats = dark_count_adjusted(params)
    # honest model: every pair sees the same QBER
    pair_qbers = [stats.qber] * (params.n_parties - 1)
    bracket = (
        1.0
        - binary_entropy(min(0.5, stats.phase_error))
        - max(binary_entropy(min(0.5, x)) for x in pair_qbers)
    )
    rate = params.n_ports * stats.click_prob * max(0.0, bracket)
    return RateResult(
        rate,
        params,
        {
            "click_prob": stats.click_prob,
            "qber": stats.qber,
            "phase_error": stats.phase_error,
            "bracket": bracket,
        },
    )


def asymptotic_rate_or_zero(params: SetupParams) -> RateResult:
    """:func:`asymptotic_rate`, with rate 0 where the statistics are undefined (no click possible)."""
    try:
        return asymptotic_rate(params)
    except UndefinedStatisticsError:
        return RateResult(0.0, params, {"undefined": True})


def direct_transmission_bound(n_parties: int, t: float) -> RateResult:
    """``-log2(1 - t^2) / (N - 1)``: N-1 point-to-point keys over links of transmittance ``t^2``."""
    if n_parties < 2:
        raise ValueError("need at least two parties")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t!r}")
    if t == 1.0:
        raise ValueError("the bound diverges at t = 1")
    rate = -math.log2(1.0 - t * t) / (n_parties - 1) if t > 0 else 0.0
    return RateResult(rate, None, {"n_parties": n_parties, "t": t})


def divisors(k: int) -> list[int]:
    return [d for d in range(1, k + 1) if k % d == 0]


def subgroup_optimized_rate(n_parties: int, rate_fn: Callable[[int], Any]) -> RateResult:
    """Best split of the N parties into subgroups sharing one distinguished party.

    With ``d`` dividing ``N - 1`` there are ``(N-1)/d`` groups of ``d + 1``
    parties; the conference rate is ``d / (N-1) * rate_fn(d + 1)``. Ties go
    to the larger group.
    """
    if n_parties < 2:
        raise ValueError("need at least two parties")
    scaled = {}
    best_d, best = None, -math.inf
    for d in divisors(n_parties - 1):
        r = rate_fn(d + 1)
        r = r.rate if isinstance(r, RateResult) else float(r)
        scaled[d] = d / (n_parties - 1) * r
        if scaled[d] >= best:
            best_d, best = d, scaled[d]
    return RateResult(
        max(0.0, best),
        None,
        {"divisor": best_d, "group_size": best_d + 1, "scaled_rates": scaled},
    )


def approx_w_limit_rate(n_parties: int, q: float, t: float) -> float:
    """Rate when the post-selected state is essentially the W state (``q``, ``t`` near 1)."""
    n = n_parties
    return n * q ** (n - 1) * (1.0 - q) * t * (1.0 - binary_entropy(0.5 - 1.0 / n))


def approx_bipartite_iteration_rate(n_parties: int, q: float, t: float) -> float:
    """Same regime, but N-1 successive two-party runs."""
    return 2.0 * q * (1.0 - q) * t / (n_parties - 1)
