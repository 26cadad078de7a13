"""Brute-force Fock-space simulation of one round of the optical setup.

The joint state of the N qubits and all optical modes is stored sparsely as a
map ``(qubit_bits, occupations) -> amplitude``. Every optical stage acts as a
linear map on creation operators, ``a_i^dag -> sum_o V[i, o] b_o^dag``, and is
applied by expanding each Fock term photon by photon (a creation operator on
``|n>`` contributes ``sqrt(n + 1)``). Nothing in here reuses the closed-form
sums of :mod:`tfcka.channel_model`; the two are meant to be checked against
each other.

Mode layout of the occupation vector (length ``2M + N``)::

    port1_P, port1_Pperp, ..., portM_P, portM_Pperp, loss1, ..., lossN

Before the multiport, port ``k`` holds the input signal entering that port;
afterwards it holds the output signal.
"""

from __future__ import annotations

import cmath
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .channel_model import ChannelStatistics, SetupParams

PRUNE_THRESHOLD = 1e-15
MIN_CONDITIONING_PROB = 1e-300
MAX_PARTIES = 6
MAX_PORTS = 8


class ZeroProbabilityError(ValueError):
    """Raised when conditioning on an event of (numerically) zero probability."""


class StateSizeError(ValueError):
    """Raised when the requested setup exceeds the brute-force guard."""


class ModeIndex(NamedTuple):
    """Named optical mode; ``index`` is 1-based (port ``j`` or channel ``k``)."""

    kind: str  # "P", "Pperp" or "loss"
    index: int

    def position(self, n_ports: int, n_parties: int) -> int:
        if self.kind in ("P", "Pperp"):
            if not 1 <= self.index <= n_ports:
                raise ValueError(f"port index {self.index} outside 1..{n_ports}")
            return 2 * (self.index - 1) + (self.kind == "Pperp")
        if self.kind == "loss":
            if not 1 <= self.index <= n_parties:
                raise ValueError(f"loss channel {self.index} outside 1..{n_parties}")
            return 2 * n_ports + self.index - 1
        raise ValueError(f"unknown mode kind {self.kind!r}")


@dataclass
class SparseFockState:
    """Joint qubit/optical state.

    ``input_ports[k]`` is the (1-based) port fed by party ``k + 1``.
    """

    n_parties: int
    n_ports: int
    input_ports: tuple[int, ...]
    amplitudes: dict[tuple[tuple[int, ...], tuple[int, ...]], complex] = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return 2 * self.n_ports + self.n_parties

    def mode(self, kind: str, index: int) -> int:
        return ModeIndex(kind, index).position(self.n_ports, self.n_parties)

    def norm(self) -> float:
        return math.sqrt(math.fsum(abs(a) ** 2 for a in self.amplitudes.values()))

    def copy_with(self, amplitudes) -> SparseFockState:
        return SparseFockState(self.n_parties, self.n_ports, self.input_ports, dict(amplitudes))

    def port_photons(self, occupations: Sequence[int], port: int) -> int:
        i = 2 * (port - 1)
        return occupations[i] + occupations[i + 1]

    def check_photon_bound(self) -> None:
        for (bits, occ), _ in self.amplitudes.items():
            if sum(occ) > sum(bits):
                raise AssertionError(f"term {bits}|{occ} carries more photons than excited qubits")


def _prune(amplitudes: dict) -> dict:
    return {k: a for k, a in amplitudes.items() if abs(a) >= PRUNE_THRESHOLD}


def _transform(state: SparseFockState, mapping: dict[int, list[tuple[int, complex]]]) -> SparseFockState:
    """Apply a linear map on creation operators.

    ``mapping[i]`` lists ``(o, V[i, o])``. Every target ``o`` must itself be
    a key of ``mapping`` (add identity entries as needed), so the mapped modes
    can be rebuilt from vacuum; unmapped modes pass through untouched.
    """
    mapped = sorted(mapping)
    for src, targets in mapping.items():
        for dst, _ in targets:
            if dst not in mapping:
                raise ValueError(f"target mode {dst} of mode {src} is not in the mapped set")
    slot = {m: i for i, m in enumerate(mapped)}
    cache: dict[tuple[int, ...], dict[tuple[int, ...], complex]] = {}

    def expand(sub: tuple[int, ...]) -> dict[tuple[int, ...], complex]:
        norm = 1.0
        for n in sub:
            norm *= math.factorial(n)
        partial = {(0,) * len(mapped): 1.0 / math.sqrt(norm)}
        for src, n in zip(mapped, sub):
            for _ in range(n):
                nxt: dict[tuple[int, ...], complex] = defaultdict(complex)
                for occ, c in partial.items():
                    for dst, v in mapping[src]:
                        s = slot[dst]
                        new = list(occ)
                        new[s] += 1
                        nxt[tuple(new)] += c * v * math.sqrt(new[s])
                partial = nxt
        return partial

    out: dict = defaultdict(complex)
    for (bits, occ), amp in state.amplitudes.items():
        sub = tuple(occ[m] for m in mapped)
        if sub not in cache:
            cache[sub] = expand(sub)
        base = list(occ)
        for sub_out, c in cache[sub].items():
            for m, n in zip(mapped, sub_out):
                base[m] = n
            out[(bits, tuple(base))] += amp * c
    return state.copy_with(_prune(out))


def prepare_initial(
    n_parties: int,
    q: float,
    phi: float = 0.0,
    n_ports: int | None = None,
    input_ports: Sequence[int] | None = None,
) -> SparseFockState:
    """Product of the per-party states ``sqrt(q)|0>|vac> + sqrt(1-q) e^{i phi_k}|1>|1ph>``.

    Party 1 carries no phase offset; parties 2..N carry ``phi``. Photons start
    in the P polarization of the party's input port (ports ``1..N`` unless
    ``input_ports`` says otherwise).
    """
    if n_parties < 2:
        raise ValueError("need at least two parties")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    n_ports = n_parties if n_ports is None else n_ports
    if input_ports is None:
        input_ports = tuple(range(1, n_parties + 1))
    input_ports = tuple(input_ports)
    if len(input_ports) != n_parties or len(set(input_ports)) != n_parties:
        raise ValueError("input_ports must list one distinct port per party")
    state = SparseFockState(n_parties, n_ports, input_ports)

    amp0 = math.sqrt(q)
    amp1 = math.sqrt(1.0 - q)
    amplitudes = {}
    for pattern in range(2**n_parties):
        bits = tuple((pattern >> (n_parties - 1 - k)) & 1 for k in range(n_parties))
        occ = [0] * state.n_modes
        amp: complex = 1.0
        for k, b in enumerate(bits):
            if b:
                amp *= amp1 * (cmath.exp(1j * phi) if k > 0 else 1.0)
                occ[state.mode("P", input_ports[k])] = 1
            else:
                amp *= amp0
        amplitudes[(bits, tuple(occ))] = complex(amp)
    return state.copy_with(_prune(amplitudes))


def apply_loss(state: SparseFockState, t: float) -> SparseFockState:
    """Channel loss as a beam splitter: ``a_k^dag -> sqrt(t) a_k^dag + sqrt(1-t) l_k^dag``.

    Must run before the polarization rotation (input P-perp modes empty).
    """
    mapping: dict[int, list[tuple[int, complex]]] = {}
    for k, port in enumerate(state.input_ports, start=1):
        a = state.mode("P", port)
        loss = state.mode("loss", k)
        mapping[a] = [(a, math.sqrt(t)), (loss, math.sqrt(1.0 - t))]
        mapping[loss] = [(loss, 1.0)]
    for (_, occ) in state.amplitudes:
        for port in state.input_ports:
            if occ[state.mode("Pperp", port)]:
                raise ValueError("apply_loss expects the input P-perp modes to be empty")
    return _transform(state, mapping)


def apply_polarization_misalignment(state: SparseFockState, theta: float) -> SparseFockState:
    """Rotate the polarization of parties 2..N by ``theta`` relative to party 1."""
    c, s = math.cos(theta), math.sin(theta)
    mapping: dict[int, list[tuple[int, complex]]] = {}
    for port in state.input_ports[1:]:
        p, pp = state.mode("P", port), state.mode("Pperp", port)
        mapping[p] = [(p, c), (pp, -s)]
        mapping[pp] = [(p, s), (pp, c)]
    if not mapping:
        return state.copy_with(state.amplitudes)
    return _transform(state, mapping)


def multiport_unitary(n_ports: int) -> np.ndarray:
    """Discrete-Fourier multiport ``U[k, j] = exp(2 pi i k j / M) / sqrt(M)`` (0-based)."""
    k = np.arange(n_ports)
    return np.exp(2j * np.pi * np.outer(k, k) / n_ports) / np.sqrt(n_ports)


def apply_multiport(state: SparseFockState, n_ports: int | None = None) -> SparseFockState:
    """Send every port through the multiport, each polarization independently."""
    m = state.n_ports if n_ports is None else n_ports
    if m != state.n_ports:
        raise ValueError(f"state was prepared for {state.n_ports} ports, got {m}")
    u = multiport_unitary(m)
    mapping: dict[int, list[tuple[int, complex]]] = {}
    for pol in ("P", "Pperp"):
        for i in range(1, m + 1):
            mapping[state.mode(pol, i)] = [
                (state.mode(pol, j), complex(u[i - 1, j - 1])) for j in range(1, m + 1)
            ]
    return _transform(state, mapping)


def _density_from_terms(n_parties: int, terms: Iterable[tuple[tuple[int, ...], tuple[int, ...], complex]]):
    dim = 2**n_parties
    by_optics: dict[tuple[int, ...], np.ndarray] = {}
    for bits, occ, amp in terms:
        vec = by_optics.get(occ)
        if vec is None:
            vec = by_optics[occ] = np.zeros(dim, dtype=complex)
        vec[bits_to_index(bits)] += amp
    rho = np.zeros((dim, dim), dtype=complex)
    for vec in by_optics.values():
        rho += np.outer(vec, vec.conj())
    return rho


def bits_to_index(bits: Sequence[int]) -> int:
    """Party 1 is the most significant bit, matching ``|b_1 b_2 ... b_N>``."""
    idx = 0
    for b in bits:
        idx = (idx << 1) | b
    return idx


def _normalized(rho: np.ndarray) -> tuple[float, np.ndarray]:
    prob = float(np.real(np.trace(rho)))
    if prob < MIN_CONDITIONING_PROB:
        raise ZeroProbabilityError(f"conditioning event has probability {prob!r}")
    return prob, rho / prob


def conditional_click_state(state: SparseFockState, j: int) -> tuple[float, np.ndarray]:
    """Post-select on photons only at port ``j`` and trace out all optical modes.

    Returns ``(p_j, rho_j)`` with ``rho_j`` normalized.
    """
    if not 1 <= j <= state.n_ports:
        raise ValueError(f"port {j} outside 1..{state.n_ports}")
    others = [p for p in range(1, state.n_ports + 1) if p != j]
    selected = (
        (bits, occ, amp)
        for (bits, occ), amp in state.amplitudes.items()
        if state.port_photons(occ, j) > 0 and all(state.port_photons(occ, p) == 0 for p in others)
    )
    return _normalized(_density_from_terms(state.n_parties, selected))


def no_click_conditional_state(state: SparseFockState) -> tuple[float, np.ndarray]:
    """Post-select on vacuum at every output port."""
    ports = range(1, state.n_ports + 1)
    selected = (
        (bits, occ, amp)
        for (bits, occ), amp in state.amplitudes.items()
        if all(state.port_photons(occ, p) == 0 for p in ports)
    )
    return _normalized(_density_from_terms(state.n_parties, selected))


def click_pattern_probabilities(state: SparseFockState) -> dict[str, float]:
    """Probabilities of the disjoint detection patterns (photon-induced only).

    Keys: ``"only_<j>"`` for each port, ``"none"`` and ``"multi"``.
    """
    acc: dict[str, list[float]] = defaultdict(list)
    for (_, occ), amp in state.amplitudes.items():
        lit = [p for p in range(1, state.n_ports + 1) if state.port_photons(occ, p) > 0]
        key = "none" if not lit else f"only_{lit[0]}" if len(lit) == 1 else "multi"
        acc[key].append(abs(amp) ** 2)
    out = {f"only_{j}": 0.0 for j in range(1, state.n_ports + 1)}
    out.update(none=0.0, multi=0.0)
    out.update({k: math.fsum(v) for k, v in acc.items()})
    return out


def measurement_angles(n_parties: int, j: int, n_ports: int) -> list[float]:
    """Key-generation angles ``phi_k = arg U[k, j] = 2 pi (k-1)(j-1) / M``; ``phi_1 = 0``."""
    return [2.0 * math.pi * (k * (j - 1) % n_ports) / n_ports for k in range(n_parties)]


def _pair_marginal(rho: np.ndarray, n_parties: int, a: int, b: int) -> np.ndarray:
    tensor = rho.reshape((2,) * (2 * n_parties))
    keep = [a, b]
    rest = [i for i in range(n_parties) if i not in keep]
    perm = keep + rest + [n_parties + i for i in keep] + [n_parties + i for i in rest]
    tensor = tensor.transpose(perm).reshape(4, 2 ** (n_parties - 2), 4, 2 ** (n_parties - 2))
    return np.einsum("ikjk->ij", tensor)


def _xy_eigenvector(angle: float, outcome: int) -> np.ndarray:
    return np.array([1.0, outcome * cmath.exp(1j * angle)]) / math.sqrt(2.0)


def measure_statistics(
    rho: np.ndarray,
    j: int,
    n_ports: int,
    angles: Sequence[float] | None = None,
) -> tuple[list[float], float]:
    """QBER of every pair ``(1, k)`` and the phase-error rate of ``rho``.

    Each party measures ``cos(a) X + sin(a) Y`` by projecting on its
    eigenvectors ``(|0> + lambda e^{ia}|1>)/sqrt(2)``. By default the angles
    compensate the multiport phase of port ``j``; pass ``angles`` to use
    arbitrary ones. ``qber[k - 2]`` is the pair ``(1, k)``.

    The phase-error rate is ``Pr[prod_k Z_k = +1]``, the total weight of the
    even-Hamming-weight diagonal entries.
    """
    dim = rho.shape[0]
    n_parties = dim.bit_length() - 1
    if angles is None:
        angles = measurement_angles(n_parties, j, n_ports)
    qbers = []
    for k in range(1, n_parties):
        pair = _pair_marginal(rho, n_parties, 0, k)
        disagree = 0.0
        for lam1, lamk in ((1, -1), (-1, 1)):
            v = np.kron(_xy_eigenvector(angles[0], lam1), _xy_eigenvector(angles[k], lamk))
            disagree += float(np.real(v.conj() @ pair @ v))
        qbers.append(disagree)
    diag = np.real(np.diag(rho))
    even = [i for i in range(dim) if bin(i).count("1") % 2 == 0]
    phase_error = float(math.fsum(diag[even]))
    return qbers, phase_error


def run_pipeline(params: SetupParams, input_ports: Sequence[int] | None = None) -> SparseFockState:
    """State after preparation, loss, misalignment and the multiport."""
    n, m = params.n_parties, params.n_ports
    if n > MAX_PARTIES or m > MAX_PORTS:
        raise StateSizeError(f"oracle limited to N <= {MAX_PARTIES}, M <= {MAX_PORTS}; got N={n}, M={m}")
    state = prepare_initial(n, params.q, params.phi, n_ports=m, input_ports=input_ports)
    state = apply_loss(state, params.t)
    state = apply_polarization_misalignment(state, params.theta)
    return apply_multiport(state)


def oracle_statistics(params: SetupParams, j: int = 1) -> ChannelStatistics:
    """Photon-only ``(p_j, max_k QBER, Q_Z)`` from the full simulation."""
    state = run_pipeline(params)
    prob, rho = conditional_click_state(state, j)
    qbers, phase_error = measure_statistics(rho, j, params.n_ports)
    return ChannelStatistics(prob, max(qbers), phase_error)


def oracle_dark_count_statistics(params: SetupParams, j: int = 1) -> ChannelStatistics:
    """Dark-count-mixed statistics assembled from simulated click and no-click branches."""
    state = run_pipeline(params)
    quiet = (1.0 - params.p_dark) ** (params.n_ports - 1)
    parts = []  # (weight, qber, phase_error)
    try:
        prob, rho = conditional_click_state(state, j)
        qbers, qz = measure_statistics(rho, j, params.n_ports)
        parts.append((prob * quiet, max(qbers), qz))
    except ZeroProbabilityError:
        pass
    if params.p_dark > 0.0:
        try:
            prob0, rho0 = no_click_conditional_state(state)
            qbers0, qz0 = measure_statistics(rho0, j, params.n_ports)
            parts.append((prob0 * params.p_dark * quiet, max(qbers0), qz0))
        except ZeroProbabilityError:
            pass
    total = math.fsum(w for w, _, _ in parts)
    if total <= 0.0:
        raise ZeroProbabilityError("no single-click event is possible")
    return ChannelStatistics(
        total,
        math.fsum(w * x for w, x, _ in parts) / total,
        math.fsum(w * z for w, _, z in parts) / total,
    )


def w_state(n_parties: int, j: int = 1, n_ports: int | None = None) -> np.ndarray:
    """Density matrix of the single-excitation state with port-``j`` multiport phases.

    For ``j = 1`` this is the plain ``|W_N>``.
    """
    n_ports = n_parties if n_ports is None else n_ports
    vec = np.zeros(2**n_parties, dtype=complex)
    for k in range(n_parties):
        bits = [0] * n_parties
        bits[k] = 1
        vec[bits_to_index(bits)] = cmath.exp(2j * math.pi * (k * (j - 1) % n_ports) / n_ports)
    vec /= math.sqrt(n_parties)
    return np.outer(vec, vec.conj())


def dump_state(state: SparseFockState, fp: IO[str]) -> None:
    """Write one term per line: ``bitstring | occupation-csv | re | im``."""
    fp.write(f"# N={state.n_parties} M={state.n_ports} ports={','.join(map(str, state.input_ports))}\n")
    for (bits, occ), amp in sorted(state.amplitudes.items()):
        fp.write(
            f"{''.join(map(str, bits))} | {','.join(map(str, occ))} | {amp.real:.17g} | {amp.imag:.17g}\n"
        )


def load_state(fp: IO[str]) -> SparseFockState:
    header = fp.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    state = SparseFockState(
        int(meta["N"]), int(meta["M"]), tuple(int(p) for p in meta["ports"].split(","))
    )
    for line in fp:
        if not line.strip():
            continue
        bits, occ, re, im = (part.strip() for part in line.split("|"))
        key = (tuple(int(c) for c in bits), tuple(int(x) for x in occ.split(",")))
        state.amplitudes[key] = complex(float(re), float(im))
    return state
