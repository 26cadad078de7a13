"""Command-line sweeps producing the rate curves as CSV or JSON.

Every subcommand expands its flags into a list of parameter points, evaluates
them (optionally in a process pool) and writes one row per point, in input
order. Settings are taken from flags, then from the ``key = value`` file named
by ``--config`` or ``$TFCKA_CONFIG``, then from built-in defaults.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .channel_model import (
    SetupParams,
    UndefinedStatisticsError,
    base_statistics,
    loss_db_to_transmittance,
    single_click_probability,
)
from .fock_oracle import (
    MAX_PARTIES,
    MAX_PORTS,
    ZeroProbabilityError,
    click_pattern_probabilities,
    dump_state,
    oracle_statistics,
    run_pipeline,
)
from .optimizer import (
    InfeasibleError,
    OptimizationBudget,
    minimum_rounds,
    optimize_finite_key,
    optimize_q_asymptotic,
)
from .rates import asymptotic_rate_or_zero, direct_transmission_bound, subgroup_optimized_rate

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2

ORACLE_TOL = 1e-10
CONFIG_ENV = "TFCKA_CONFIG"

COMMANDS = ("sweep-asymptotic", "sweep-finite", "lmin", "subgroup-opt", "verify-oracle")

# shared defaults are the reference-simulation settings
_SHARED_DEFAULTS = {
    "pd": "1e-9",
    "misalign": "0.02",
    "eps_tot": "1e-8",
    "format": "csv",
    "out": "-",
    "jobs": str(os.cpu_count() or 1),
    "fraction": "0.1",
    "grid_points": "48",
}
_COMMAND_DEFAULTS = {
    "sweep-asymptotic": {"n": "2,3,5,9", "m": "auto,10", "loss_db": "0:60:1", "q": "auto"},
    "sweep-finite": {"n": "2,3", "m": "auto", "loss_db": "20", "rounds": "1e7:1e14:log10"},
    "lmin": {"n": "2,3,4,5", "m": "auto", "loss_db": "1,20,40"},
    "subgroup-opt": {"n": "5", "m": "auto", "loss_db": "0:60:1", "q": "0.995,0.998,0.999"},
    "verify-oracle": {
        "n": "2,3,4",
        "m": "auto:6",
        # transmittances 0.1, 0.5, 0.9
        "loss_db": ",".join(repr(-10.0 * math.log10(t)) for t in (0.1, 0.5, 0.9)),
        "q": "0.5,0.9,0.99",
        "pd": "0",
        "misalign": ",".join(repr(x) for x in (0.0, 0.02, math.sin(0.3) ** 2)),
    },
}

_COLUMNS = {
    "sweep-asymptotic": [
        "n_parties", "n_ports", "loss_db", "t", "q_star", "p_j", "qber", "q_z", "rate", "direct_bound",
    ],
    "sweep-finite": [
        "n_parties", "n_ports", "loss_db", "t", "rounds", "rate", "net_rate", "q", "pe_prob",
        "eps_x", "eps_z", "eps_ec", "eps_pa", "eps_tot", "feasible",
    ],
    "lmin": ["n_parties", "n_ports", "loss_db", "t", "fraction", "asymptotic_rate", "l_min", "status"],
    "subgroup-opt": [
        "n_parties", "n_ports", "loss_db", "t", "q", "rate", "divisor", "group_size", "full_group_rate",
        "direct_bound",
    ],
    "verify-oracle": [
        "n_parties", "n_ports", "loss_db", "t", "q", "theta", "phi",
        "p_j", "qber", "q_z", "oracle_p_j", "oracle_qber", "oracle_q_z",
        "abs_diff_p_j", "abs_diff_qber", "abs_diff_q_z", "status",
    ],
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- parsing


def parse_int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as err:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from err
    if not values:
        raise UsageError("empty integer list")
    return values


def parse_float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as err:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from err
    if not values:
        raise UsageError("empty number list")
    return values


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` (inclusive, linear) or a comma list."""
    if ":" not in text:
        return parse_float_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as err:
        raise UsageError(f"bad range {text!r}") from err
    if not step > 0 or stop < start:
        raise UsageError(f"range needs step > 0 and stop >= start, got {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


def parse_rounds(text: str) -> list[float]:
    """``start:stop:log10`` / ``start:stop:log2`` (multiplicative steps) or a comma list."""
    parts = text.split(":")
    if len(parts) == 3 and parts[2] in ("log10", "log2"):
        try:
            start, stop = float(parts[0]), float(parts[1])
        except ValueError as err:
            raise UsageError(f"bad rounds range {text!r}") from err
        if not 1 <= start <= stop:
            raise UsageError(f"rounds range needs 1 <= start <= stop, got {text!r}")
        base = 10.0 if parts[2] == "log10" else 2.0
        lo, hi = math.log(start, base), math.log(stop, base)
        count = int(math.floor(hi - lo + 1e-9)) + 1
        return [float(round(base ** (lo + i))) for i in range(count)]
    values = parse_range(text)
    if any(v < 1 for v in values):
        raise UsageError("rounds must be >= 1")
    return values


def resolve_ports(text: str, n_parties: int) -> list[int]:
    """Port counts for ``n_parties``: ``auto`` is M = N, ``auto:K`` is M = N..K."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if item == "auto":
            out.append(n_parties)
        elif item.startswith("auto:"):
            top = parse_int_list(item[5:])[0]
            out.extend(range(n_parties, top + 1))
        else:
            out.extend(parse_int_list(item))
    seen = []
    for m in out:
        if m not in seen:
            seen.append(m)
    if not seen:
        raise UsageError(f"port spec {text!r} gives no port count for N={n_parties}")
    return seen


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    config = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read config file {path}: {err}") from err
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        config[key.replace("-", "_")] = value
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfcka",
        description="Key rates of single-photon-interference conference key agreement.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        # None means "not given", so config and defaults can fill in
        p.add_argument("--n", help="party counts, e.g. 2,3,5")
        p.add_argument("--m", help="port counts: auto (M=N), auto:K (M=N..K) or integers")
        p.add_argument("--loss-db", dest="loss_db", help="start:stop:step or a comma list, in dB")
        p.add_argument("--pd", help="dark-count probability per detector")
        p.add_argument("--misalign", help="sin^2 of the polarization and phase misalignment")
        p.add_argument("--q", help="auto or fixed value(s) of q")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--out", help="output file, - for stdout")
        p.add_argument("--jobs", help="worker processes")
        p.add_argument("--config", help=f"key = value config file (default ${CONFIG_ENV})")
        p.add_argument("--grid-points", dest="grid_points", help="coarse grid size of each 1-D search")
        if name in ("sweep-finite", "lmin"):
            p.add_argument("--eps-tot", dest="eps_tot", help="total security parameter")
        if name == "sweep-finite":
            p.add_argument("--rounds", help="start:stop:log10 or a comma list")
        if name == "lmin":
            p.add_argument("--fraction", help="target fraction of the asymptotic rate")
        if name == "verify-oracle":
            p.add_argument("--dump-dir", dest="dump_dir", help="write each simulated state here")
    return parser


def resolve_settings(args: argparse.Namespace, environ=os.environ) -> dict[str, str]:
    settings = {**_SHARED_DEFAULTS, **_COMMAND_DEFAULTS[args.command]}
    config_path = args.config or environ.get(CONFIG_ENV)
    if config_path:
        settings.update(read_config(config_path))
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config"):
            settings[key] = value
    return settings


# ---------------------------------------------------------------- points


def _angle(misalign: float) -> float:
    if not 0.0 <= misalign <= 1.0:
        raise UsageError(f"misalign is sin^2 of an angle and must lie in [0, 1], got {misalign!r}")
    return math.asin(math.sqrt(misalign))


def _q_values(text: str) -> list[float] | None:
    if text.strip() == "auto":
        return None
    values = parse_float_list(text)
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise UsageError("q must lie in [0, 1]")
    return values


def _single_float(settings, key) -> float:
    try:
        return float(settings[key])
    except ValueError as err:
        raise UsageError(f"--{key.replace('_', '-')} expects a number, got {settings[key]!r}") from err


def _setups(settings) -> list[tuple[int, int, float]]:
    out = []
    losses = parse_range(settings["loss_db"])
    if any(x < 0 for x in losses):
        raise UsageError("losses must be nonnegative dB")
    for n in parse_int_list(settings["n"]):
        if n < 2:
            raise UsageError("party counts must be >= 2")
        for m in resolve_ports(settings["m"], n):
            if m < n:
                raise UsageError(f"port count {m} is smaller than party count {n}")
            for loss in losses:
                out.append((n, m, loss))
    return out


def _base(n, m, loss, settings) -> SetupParams:
    angle = _angle(_single_float(settings, "misalign"))
    return SetupParams(n, m, 0.5, loss_db_to_transmittance(loss), angle, angle, _single_float(settings, "pd"))


def _budget(settings) -> OptimizationBudget:
    return OptimizationBudget(coarse_grid_points=int(settings["grid_points"]))


def build_tasks(command: str, settings: dict[str, str]) -> list[tuple]:
    if command == "sweep-asymptotic":
        qs = _q_values(settings["q"])
        return [
            (_base(n, m, loss, settings), loss, q, _budget(settings))
            for n, m, loss in _setups(settings)
            for q in (qs or [None])
        ]
    if command == "sweep-finite":
        eps = _single_float(settings, "eps_tot")
        return [
            (_base(n, m, loss, settings), loss, rounds, eps, _budget(settings))
            for n, m, loss in _setups(settings)
            for rounds in parse_rounds(settings["rounds"])
        ]
    if command == "lmin":
        fraction = _single_float(settings, "fraction")
        if not 0.0 < fraction < 1.0:
            raise UsageError("fraction must lie in (0, 1)")
        eps = _single_float(settings, "eps_tot")
        return [
            (_base(n, m, loss, settings), loss, fraction, eps, _budget(settings))
            for n, m, loss in _setups(settings)
        ]
    if command == "subgroup-opt":
        qs = _q_values(settings["q"])
        return [
            (_base(n, m, loss, settings), loss, q, _budget(settings))
            for n, m, loss in _setups(settings)
            for q in (qs or [None])
        ]
    if command == "verify-oracle":
        qs = _q_values(settings["q"])
        if qs is None:
            raise UsageError("verify-oracle needs explicit q values")
        angles = [_angle(x) for x in parse_float_list(settings["misalign"])]
        pd = _single_float(settings, "pd")
        tasks = []
        for n, m, loss in _setups(settings):
            if n > MAX_PARTIES or m > MAX_PORTS:
                raise UsageError(f"oracle supports N <= {MAX_PARTIES}, M <= {MAX_PORTS}; got N={n}, M={m}")
            for q, theta, phi in itertools.product(qs, angles, angles):
                params = SetupParams(n, m, q, loss_db_to_transmittance(loss), theta, phi, pd)
                tasks.append((params, loss, settings.get("dump_dir")))
        return tasks
    raise UsageError(f"unknown command {command!r}")


# ---------------------------------------------------------------- evaluation


def _bound(n, t):
    return math.inf if t >= 1.0 else direct_transmission_bound(n, t).rate


def eval_asymptotic(task) -> dict[str, Any]:
    base, loss, q, budget = task
    if q is None:
        res = optimize_q_asymptotic(base, budget)
    else:
        res = asymptotic_rate_or_zero(base.replace(q=q))
    return {
        "n_parties": base.n_parties,
        "n_ports": base.n_ports,
        "loss_db": loss,
        "t": base.t,
        "q_star": res.params.q,
        "p_j": res.meta.get("click_prob", math.nan),
        "qber": res.meta.get("qber", math.nan),
        "q_z": res.meta.get("phase_error", math.nan),
        "rate": res.rate,
        "direct_bound": _bound(base.n_parties, base.t),
    }


def eval_finite(task) -> dict[str, Any]:
    base, loss, rounds, eps, budget = task
    res = optimize_finite_key(base, rounds, eps, budget)
    m = res.meta
    return {
        "n_parties": base.n_parties,
        "n_ports": base.n_ports,
        "loss_db": loss,
        "t": base.t,
        "rounds": int(rounds),
        "rate": res.rate,
        "net_rate": m["net_rate"],
        "q": m["q"],
        "pe_prob": m["pe_prob"],
        "eps_x": m["eps_x"],
        "eps_z": m["eps_z"],
        "eps_ec": m["eps_ec"],
        "eps_pa": m["eps_pa"],
        "eps_tot": m["eps_tot"],
        "feasible": bool(m["feasible"]),
    }


def eval_lmin(task) -> dict[str, Any]:
    base, loss, fraction, eps, budget = task
    asym = optimize_q_asymptotic(base, budget).rate
    try:
        l_min, status = minimum_rounds(base, fraction, eps, budget), "ok"
    except InfeasibleError:
        l_min, status = None, "infeasible"
    return {
        "n_parties": base.n_parties,
        "n_ports": base.n_ports,
        "loss_db": loss,
        "t": base.t,
        "fraction": fraction,
        "asymptotic_rate": asym,
        "l_min": l_min,
        "status": status,
    }


def eval_subgroup(task) -> dict[str, Any]:
    base, loss, q, budget = task

    def rate_fn(size: int) -> float:
        params = base.replace(n_parties=size)
        if q is None:
            return optimize_q_asymptotic(params, budget).rate
        return asymptotic_rate_or_zero(params.replace(q=q)).rate

    res = subgroup_optimized_rate(base.n_parties, rate_fn)
    return {
        "n_parties": base.n_parties,
        "n_ports": base.n_ports,
        "loss_db": loss,
        "t": base.t,
        "q": "auto" if q is None else q,
        "rate": res.rate,
        "divisor": res.meta["divisor"],
        "group_size": res.meta["group_size"],
        "full_group_rate": res.meta["scaled_rates"][base.n_parties - 1],
        "direct_bound": _bound(base.n_parties, base.t),
    }


def eval_oracle(task) -> dict[str, Any]:
    params, loss, dump_dir = task
    row = {
        "n_parties": params.n_parties,
        "n_ports": params.n_ports,
        "loss_db": loss,
        "t": params.t,
        "q": params.q,
        "theta": params.theta,
        "phi": params.phi,
    }
    if dump_dir:
        name = (
            f"state_N{params.n_parties}_M{params.n_ports}_q{params.q:.17g}_t{params.t:.17g}"
            f"_th{params.theta:.17g}_ph{params.phi:.17g}.txt"
        )
        with open(Path(dump_dir) / name, "w") as fp:
            dump_state(run_pipeline(params), fp)
    try:
        analytic = base_statistics(params)
    except UndefinedStatisticsError:
        analytic = None
    try:
        oracle = oracle_statistics(params)
    except ZeroProbabilityError:
        oracle = None
    if analytic is None or oracle is None:
        p_a = single_click_probability(params)
        p_o = click_pattern_probabilities(run_pipeline(params))["only_1"]
        nan = math.nan
        row.update(
            p_j=p_a, qber=nan, q_z=nan, oracle_p_j=p_o, oracle_qber=nan, oracle_q_z=nan,
            abs_diff_p_j=abs(p_a - p_o), abs_diff_qber=nan, abs_diff_q_z=nan,
        )
        same_side = (analytic is None) == (oracle is None)
        row["status"] = "undefined" if same_side and abs(p_a - p_o) <= ORACLE_TOL else "FAIL"
        return row
    diffs = {
        "p_j": abs(analytic.click_prob - oracle.click_prob),
        "qber": abs(analytic.qber - oracle.qber),
        "q_z": abs(analytic.phase_error - oracle.phase_error),
    }
    row.update(
        p_j=analytic.click_prob, qber=analytic.qber, q_z=analytic.phase_error,
        oracle_p_j=oracle.click_prob, oracle_qber=oracle.qber, oracle_q_z=oracle.phase_error,
        **{f"abs_diff_{k}": v for k, v in diffs.items()},
    )
    row["status"] = "ok" if max(diffs.values()) <= ORACLE_TOL else "FAIL"
    return row


_EVALUATORS: dict[str, Callable[[tuple], dict[str, Any]]] = {
    "sweep-asymptotic": eval_asymptotic,
    "sweep-finite": eval_finite,
    "lmin": eval_lmin,
    "subgroup-opt": eval_subgroup,
    "verify-oracle": eval_oracle,
}


def run_tasks(command: str, tasks: Sequence[tuple], jobs: int) -> list[dict[str, Any]]:
    """Evaluate in order; the pool's ``map`` keeps results in task order."""
    fn = _EVALUATORS[command]
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# ---------------------------------------------------------------- output


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return None
        # round-trip through the 17-digit form so CSV and JSON agree
        return float(f"{value:.17g}")
    return value


def render(rows: Sequence[dict[str, Any]], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        payload = [{c: _json_value(row[c]) for c in columns} for row in rows]
        return json.dumps(payload, indent=1) + "\n"
    lines = [",".join(columns)]
    lines.extend(",".join(format_value(row[c]) for c in columns) for row in rows)
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename it into place."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fp:
            fp.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = resolve_settings(args)
        if settings["format"] not in ("csv", "json"):
            raise UsageError(f"unknown format {settings['format']!r}")
        try:
            jobs = int(settings["jobs"])
            int(settings["grid_points"])
        except ValueError as err:
            raise UsageError(str(err)) from err
        tasks = build_tasks(args.command, settings)
        if settings.get("dump_dir"):
            Path(settings["dump_dir"]).mkdir(parents=True, exist_ok=True)
    except (UsageError, ValueError) as err:
        print(f"tfcka: error: {err}", file=sys.stderr)
        return EXIT_USAGE

    rows = run_tasks(args.command, tasks, jobs)
    text = render(rows, _COLUMNS[args.command], settings["format"])
    if settings["out"] == "-":
        sys.stdout.write(text)
    else:
        write_atomic(settings["out"], text)

    if args.command == "verify-oracle":
        failures = [row for row in rows if row["status"] == "FAIL"]
        for row in failures:
            point = ", ".join(f"{k}={format_value(row[k])}" for k in ("n_parties", "n_ports", "q", "t", "theta", "phi"))
            print(f"tfcka: oracle mismatch at {point}", file=sys.stderr)
        if failures:
            return EXIT_VERIFY_FAILED
    return EXIT_OK
