"""Finite-key secret key length and its statistical ingredients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .special_math import binary_entropy, ln_hypergeometric_cells

GAMMA_RESIDUAL_TOL = 1e-12
GAMMA_MAX_ITER = 200


class NoRootError(ValueError):
    """The tail-bound equation has no root in ``(0, 1 - lambda_m]``.

    ``side`` is ``"low"`` when the equation already holds at ``gamma = 0``
    and ``"high"`` when it still fails at the largest admissible ``gamma``.
    """

    def __init__(self, message: str, side: str):
        super().__init__(message)
        self.side = side


@dataclass(frozen=True)
class SecuritySplit:
    """Partition of the security budget: ``eps_x``, ``eps_z``, ``eps_ec``, ``eps_pa``."""

    eps_x: float
    eps_z: float
    eps_ec: float
    eps_pa: float

    def __post_init__(self):
        for name in ("eps_x", "eps_z", "eps_ec", "eps_pa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)!r}")

    @classmethod
    def from_shares(
        cls, eps_tot: float, n_parties: int, pe_share: float, x_share: float, ec_share: float
    ) -> SecuritySplit:
        """Split ``eps_tot`` so that :func:`eps_total` reproduces it.

        ``pe_share`` of the budget goes to ``2 eps_pe``; of ``eps_pe^2`` a
        fraction ``x_share`` is ``(N-1) eps_x`` and the rest ``eps_z``; the
        remaining budget is divided ``ec_share : 1 - ec_share`` between error
        correction and privacy amplification.
        """
        for name, v in (("pe_share", pe_share), ("x_share", x_share), ("ec_share", ec_share)):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
        pe = 0.5 * pe_share * eps_tot
        pe2 = pe * pe
        rest = eps_tot - 2.0 * pe
        return cls(
            eps_x=x_share * pe2 / (n_parties - 1),
            eps_z=(1.0 - x_share) * pe2,
            eps_ec=ec_share * rest,
            eps_pa=rest - ec_share * rest,
        )


@dataclass(frozen=True)
class RoundCounts:
    """Round accounting: ``L`` rounds, PE probability, ``m`` PE samples, ``n`` key bits."""

    total_rounds: int
    pe_prob: float
    pe_samples: int
    key_rounds: int

    def __post_init__(self):
        if self.total_rounds <= 0:
            raise ValueError("total_rounds must be positive")
        if not 0.0 <= self.pe_prob <= 1.0:
            raise ValueError(f"pe_prob must lie in [0, 1], got {self.pe_prob!r}")
        if self.pe_samples < 1 or self.key_rounds < 1:
            raise ValueError(
                f"need at least one PE sample and one key round, got m={self.pe_samples}, n={self.key_rounds}"
            )

    @classmethod
    def expected(cls, total_rounds: float, pe_prob: float, click_prob_total: float) -> RoundCounts:
        """Counts at their expected values; ``click_prob_total`` is ``M p_j``."""
        clicks = click_prob_total * total_rounds
        m = round(clicks * pe_prob)
        n = round(clicks) - 2 * m
        return cls(int(total_rounds), pe_prob, int(m), int(n))


@dataclass(frozen=True)
class ObservedFrequencies:
    """Observed phase-error frequency and per-pair QBER frequencies (pairs ``(1, i)``)."""

    qz_m: float
    qber_m_per_pair: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "qber_m_per_pair", tuple(self.qber_m_per_pair))
        for v in (self.qz_m, *self.qber_m_per_pair):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"frequencies must lie in [0, 1], got {v!r}")
        if not self.qber_m_per_pair:
            raise ValueError("need at least one pair QBER")


def tail_equation_residual(gamma: float, n: int, m: int, lambda_m: float, eps: float) -> float:
    """LHS - RHS of the sampling tail-bound equation, in the log domain.

    The equation reads ``ln C(n(L+g)+mL, mL) + ln C((n+m)(1-L)-ng, m(1-L))
    = ln C(n+m, m) + ln eps``; its left side minus ``ln C(n+m, m)`` is a log
    hypergeometric probability. It is evaluated from the four table cells,
    each formed without subtracting large numbers.
    """
    return (
        ln_hypergeometric_cells(
            m * lambda_m,
            n * (lambda_m + gamma),
            m * (1.0 - lambda_m),
            max(0.0, n * (1.0 - lambda_m - gamma)),
        )
        - math.log(eps)
    )


def gamma_correction(n: int, m: int, lambda_m: float, eps: float) -> float:
    """Statistical correction ``gamma`` bounding the unseen frequency with confidence ``1 - eps``.

    Solved by bisection on ``[0, 1 - lambda_m]``; the residual decreases
    monotonically in ``gamma`` on this bracket.
    """
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be >= 1, got n={n!r}, m={m!r}")
    if not 0.0 <= lambda_m <= 1.0:
        raise ValueError(f"lambda_m must lie in [0, 1], got {lambda_m!r}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    if lambda_m == 1.0:
        return 0.0

    lo, hi = 0.0, 1.0 - lambda_m
    f_lo = tail_equation_residual(lo, n, m, lambda_m, eps)
    if f_lo <= 0.0:
        raise NoRootError(f"tail equation satisfied already at gamma=0 (residual {f_lo:.3g})", "low")
    f_hi = tail_equation_residual(hi, n, m, lambda_m, eps)
    if f_hi > 0.0:
        raise NoRootError(
            f"tail equation unsatisfiable for gamma <= {hi:.3g} (residual {f_hi:.3g})", "high"
        )
    if f_hi >= -GAMMA_RESIDUAL_TOL:
        return hi

    for _ in range(GAMMA_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = tail_equation_residual(mid, n, m, lambda_m, eps)
        if abs(f_mid) <= GAMMA_RESIDUAL_TOL:
            return mid
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    # float resolution reached; hi keeps the bound on the conservative side
    return hi


def eps_pe(split: SecuritySplit, n_parties: int) -> float:
    return math.sqrt((n_parties - 1) * split.eps_x + split.eps_z)


def eps_total(split: SecuritySplit, n_parties: int) -> float:
    return 2.0 * eps_pe(split, n_parties) + split.eps_ec + split.eps_pa


def safe_gamma(n: int, m: int, freq: float, eps: float) -> float:
    """:func:`gamma_correction`, falling back to the trivial bound when no root exists."""
    try:
        return gamma_correction(n, m, freq, eps)
    except NoRootError as err:
        # "high": no sample-based bound at this confidence; "low": nothing to add
        return 1.0 - freq if err.side == "high" else 0.0


def key_length(
    freqs: ObservedFrequencies,
    counts: RoundCounts,
    split: SecuritySplit,
    n_parties: int,
    correction: Callable[[int, int, float, float], float] = safe_gamma,
) -> float:
    """Secure key length in bits, clamped at zero.

    Corrected error frequencies are capped at 1/2 before the entropy is
    taken, so that worse observations never lengthen the key.
    ``correction(n, m, freq, eps)`` supplies the statistical correction;
    pass ``lambda *_: 0.0`` for the infinite-sample limit.
    """
    pe = eps_pe(split, n_parties)
    if 2 * (n_parties - 1) * pe >= 1.0:
        raise ValueError(f"2(N-1) eps_pe = {2 * (n_parties - 1) * pe!r} must be < 1")
    n, m = counts.key_rounds, counts.pe_samples

    def h_bounded(freq: float, eps: float) -> float:
        return binary_entropy(min(0.5, freq + correction(n, m, freq, eps)))

    h_z = h_bounded(freqs.qz_m, split.eps_z)
    h_x = max(h_bounded(f, split.eps_x) for f in freqs.qber_m_per_pair)
    ec_cost = math.log2(2 * (n_parties - 1) / split.eps_ec)
    pa_cost = 2.0 * math.log2((1.0 - 2 * (n_parties - 1) * pe) / (2.0 * split.eps_pa))
    return max(0.0, n * (1.0 - h_z - h_x) - ec_cost - pa_cost)


def net_key_length(gross: float, total_rounds: float, pe_prob: float) -> float:
    """Key length after paying back the ``L h(p_PE)`` preshared bits."""
    if gross < 0:
        raise ValueError("gross key length must be nonnegative")
    return max(0.0, gross - total_rounds * binary_entropy(pe_prob))


def frequencies_from_rates(qz: float, qbers: Sequence[float] | float, n_parties: int) -> ObservedFrequencies:
    """Observed frequencies equal to the model probabilities (honest, expected-value case)."""
    if isinstance(qbers, (int, float)):
        qbers = [float(qbers)] * (n_parties - 1)
    return ObservedFrequencies(qz, tuple(qbers))
