"""Deterministic parameter optimization for the asymptotic and finite-key rates.

Every search is a fixed coarse grid followed by golden-section refinement
around the best grid point, so repeated runs give bit-identical results.
Parameters are searched in transformed coordinates: ``log10(1 - q)``,
``log10(p_PE)`` and the logit of each security-budget share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel_model import SetupParams, UndefinedStatisticsError, dark_count_adjusted
from .finite_key import (
    RoundCounts,
    SecuritySplit,
    eps_total,
    frequencies_from_rates,
    key_length,
    net_key_length,
)
from .rates import RateResult, asymptotic_rate_or_zero

#: Minimum expected number of single-click rounds before a key is attempted.
MIN_EXPECTED_CLICKS = 10.0

LOG_ONE_MINUS_Q = (-6.0, math.log10(0.5))
LOG_PE_PROB = (-7.0, math.log10(0.5))
SHARE_LOGIT = (-12.0, 12.0)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleError(ValueError):
    """No parameter choice yields a positive key length."""


@dataclass(frozen=True)
class OptimizationBudget:
    """Grid size, golden-section iterations and stopping tolerance of a 1-D search."""

    coarse_grid_points: int = 48
    refine_iterations: int = 60
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.coarse_grid_points < 3:
            raise ValueError("coarse_grid_points must be at least 3")
        if self.refine_iterations < 1:
            raise ValueError("refine_iterations must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def maximize_scalar(
    fn: Callable[[float], float], lo: float, hi: float, budget: OptimizationBudget
) -> tuple[float, float]:
    """Grid plus golden-section maximization of ``fn`` on ``[lo, hi]``.

    Returns ``(x, fn(x))``. The result is never worse than the best grid
    point. Ties on the grid go to the first (lowest) abscissa, and a flat
    grid (e.g. rate 0 everywhere) is returned without refinement.
    """
    grid = np.linspace(lo, hi, budget.coarse_grid_points)
    values = [fn(float(x)) for x in grid]
    i = int(np.argmax(values))
    best_x, best_f = float(grid[i]), values[i]
    if min(values) == best_f:
        return best_x, best_f

    a = float(grid[max(i - 1, 0)])
    b = float(grid[min(i + 1, len(grid) - 1)])
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(budget.refine_iterations):
        if b - a <= budget.tolerance:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    for x, f in ((c, fc), (d, fd)):
        if f > best_f:
            best_x, best_f = x, f
    return best_x, best_f


def _q_from_coord(u: float) -> float:
    return 1.0 - 10.0**u


def _logistic(u: float) -> float:
    return 1.0 / (1.0 + math.exp(-u))


def optimize_q_asymptotic(base: SetupParams, budget: OptimizationBudget | None = None) -> RateResult:
    """Maximize the asymptotic rate over ``q``; ``base.q`` is ignored.

    Points whose conditional statistics are undefined count as rate 0.
    """
    budget = budget or OptimizationBudget()

    def objective(u: float) -> float:
        return asymptotic_rate_or_zero(base.replace(q=_q_from_coord(u))).rate

    u, _ = maximize_scalar(objective, *LOG_ONE_MINUS_Q, budget)
    best = asymptotic_rate_or_zero(base.replace(q=_q_from_coord(u)))
    return RateResult(best.rate, best.params, {**best.meta, "q": best.params.q})


@dataclass(frozen=True)
class FiniteKeyPoint:
    """Free parameters of the finite-key optimization."""

    q: float
    pe_prob: float
    pe_share: float
    x_share: float
    ec_share: float

    def split(self, eps_tot: float, n_parties: int) -> SecuritySplit:
        return SecuritySplit.from_shares(eps_tot, n_parties, self.pe_share, self.x_share, self.ec_share)


def finite_key_rate(
    base: SetupParams,
    total_rounds: float,
    q: float,
    pe_prob: float,
    split: SecuritySplit,
) -> RateResult:
    """Gross ``ell / L`` at one parameter point, with counts at their expectations.

    Returns rate 0 (meta ``feasible`` False) when fewer than
    :data:`MIN_EXPECTED_CLICKS` single-click rounds are expected or when the
    rounding of counts leaves no PE sample or key bit.
    """
    params = base.replace(q=q)
    meta = {"q": q, "pe_prob": pe_prob, "L": total_rounds, **split.__dict__}
    try:
        stats = dark_count_adjusted(params)
    except UndefinedStatisticsError:
        return RateResult(0.0, params, {**meta, "feasible": False, "net_rate": 0.0})
    click_total = params.n_ports * stats.click_prob
    meta.update(click_prob=stats.click_prob, qber=stats.qber, phase_error=stats.phase_error)
    if click_total * total_rounds < MIN_EXPECTED_CLICKS:
        return RateResult(0.0, params, {**meta, "feasible": False, "net_rate": 0.0})
    try:
        counts = RoundCounts.expected(total_rounds, pe_prob, click_total)
    except ValueError:
        return RateResult(0.0, params, {**meta, "feasible": False, "net_rate": 0.0})
    freqs = frequencies_from_rates(stats.phase_error, stats.qber, params.n_parties)
    ell = key_length(freqs, counts, split, params.n_parties)
    net = net_key_length(ell, total_rounds, pe_prob)
    meta.update(
        key_length=ell,
        key_rounds=counts.key_rounds,
        pe_samples=counts.pe_samples,
        net_rate=net / total_rounds,
        feasible=ell > 0.0,
    )
    return RateResult(ell / total_rounds, params, meta)


def _evaluate(base, total_rounds, eps_tot, point: FiniteKeyPoint) -> RateResult:
    return finite_key_rate(
        base, total_rounds, point.q, point.pe_prob, point.split(eps_tot, base.n_parties)
    )


_COORDS = (
    ("pe_prob", LOG_PE_PROB, lambda u: 10.0**u),
    ("q", LOG_ONE_MINUS_Q, _q_from_coord),
    ("pe_share", SHARE_LOGIT, _logistic),
    ("ec_share", SHARE_LOGIT, _logistic),
    ("x_share", SHARE_LOGIT, _logistic),
)


def optimize_finite_key(
    base: SetupParams,
    total_rounds: float,
    eps_tot_target: float,
    budget: OptimizationBudget | None = None,
    sweeps: int = 3,
    strict: bool = False,
) -> RateResult:
    """Maximize the gross finite-key rate over ``q``, ``p_PE`` and the security split.

    Coordinate-wise search started from the asymptotic optimum in ``q``;
    each coordinate is maximized by :func:`maximize_scalar` in turn for up to
    ``sweeps`` passes. The security split is built from budget shares, so the
    constraint ``eps_total == eps_tot_target`` holds by construction.

    With no positive key length the result has rate 0 and meta ``feasible``
    False, or :class:`InfeasibleError` is raised when ``strict``.
    """
    if not eps_tot_target > 0:
        raise ValueError("eps_tot_target must be positive")
    if total_rounds < 1:
        raise ValueError("total_rounds must be >= 1")
    budget = budget or OptimizationBudget()
    coord_budget = OptimizationBudget(
        max(8, budget.coarse_grid_points // 3), budget.refine_iterations, max(budget.tolerance, 1e-6)
    )

    start_q = optimize_q_asymptotic(base, budget).params.q
    # optima sit near pe_share -> 1 and EC:PA = 1:2; start close to them
    point = FiniteKeyPoint(min(start_q, _q_from_coord(LOG_ONE_MINUS_Q[0])), 0.05, 0.99, 0.5, 1.0 / 3.0)
    best = _evaluate(base, total_rounds, eps_tot_target, point)

    for _ in range(sweeps):
        previous = best.rate
        for name, bounds, to_value in _COORDS:

            def objective(u, name=name, to_value=to_value):
                trial = FiniteKeyPoint(**{**point.__dict__, name: to_value(u)})
                return _evaluate(base, total_rounds, eps_tot_target, trial).rate

            u, f = maximize_scalar(objective, *bounds, coord_budget)
            if f > best.rate:
                point = FiniteKeyPoint(**{**point.__dict__, name: to_value(u)})
                best = _evaluate(base, total_rounds, eps_tot_target, point)
        if best.rate <= 0.0 or best.rate - previous <= budget.tolerance * best.rate:
            break

    split = point.split(eps_tot_target, base.n_parties)
    meta = {
        **best.meta,
        **point.__dict__,
        **split.__dict__,
        "eps_tot": eps_total(split, base.n_parties),
        "feasible": best.rate > 0.0,
    }
    if strict and best.rate <= 0.0:
        raise InfeasibleError(f"no positive key length at L={total_rounds:g}")
    return RateResult(best.rate, best.params, meta)


def _search_rounds(
    accept: Callable[[float], bool], start: float, rel_precision: float, max_doublings: int
) -> float:
    # smallest accepted L: doubling from start, then bisection in log L
    lo = None
    hi = float(start)
    for _ in range(max_doublings):
        if accept(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise InfeasibleError(f"criterion not met below L={hi:g}")
    if lo is None:
        return hi
    while hi / lo > 1.0 + rel_precision:
        mid = math.sqrt(lo * hi)
        if accept(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _click_floor(base: SetupParams, budget: OptimizationBudget) -> float:
    best = optimize_q_asymptotic(base, budget)
    if best.rate <= 0.0:
        raise InfeasibleError("asymptotic optimized rate is zero; no finite key exists")
    click_total = base.n_ports * best.meta["click_prob"]
    return 2.0 ** math.floor(math.log2(MIN_EXPECTED_CLICKS / click_total))


def minimum_rounds(
    base: SetupParams,
    fraction: float,
    eps_tot: float = 1e-8,
    budget: OptimizationBudget | None = None,
    rel_precision: float = 0.05,
    max_doublings: int = 80,
) -> int:
    """Smallest ``L`` with optimized finite-key rate ``>= fraction * r`` (and positive).

    ``r`` is the optimized asymptotic rate. The search doubles ``L`` from the
    click threshold and then bisects in ``log L`` to ``rel_precision``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    budget = budget or OptimizationBudget()
    target = fraction * optimize_q_asymptotic(base, budget).rate
    start = _click_floor(base, budget)

    def accept(rounds: float) -> bool:
        rate = optimize_finite_key(base, rounds, eps_tot, budget).rate
        return rate > 0.0 and rate >= target

    return math.ceil(_search_rounds(accept, start, rel_precision, max_doublings))


def feasibility_floor(
    base: SetupParams,
    eps_tot: float = 1e-8,
    budget: OptimizationBudget | None = None,
    rel_precision: float = 0.05,
    max_doublings: int = 80,
) -> int:
    """Smallest ``L`` (same search as :func:`minimum_rounds`) with a positive optimized key."""
    budget = budget or OptimizationBudget()
    start = _click_floor(base, budget)

    def accept(rounds: float) -> bool:
        return optimize_finite_key(base, rounds, eps_tot, budget).rate > 0.0

    return math.ceil(_search_rounds(accept, start, rel_precision, max_doublings))
