"""Command-line drivers: evolve, table1, bench, trotter-compare, qoc.

Metrics go out as CSV with a versioned comment line; MPO dumps and QOC
results as JSON.  Output is buffered and only written once a command has
finished, so a failure never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import itertools
import json
import math
import operator
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .evolution import (
    ControlFunction,
    EvolutionConfig,
    UnsupportedOrderError,
    assemble_magnus_mpo,
    chebyshev_exp,
    dense_reference,
    infidelity,
    magnus_word_expansion,
    solve_tdse_dense,
    solve_tdse_mpo,
)
from .models import Convergence, IsingSpec, convergence_check, ising_norm_bounds
from .mpo import DENSE_CAP, BondProfile, Mpo, mpo_to_dense, save_mpo
from .qoc import (
    QocProblem,
    build_objective,
    export_polynomial,
    load_polynomial,
    minimize_objective,
    verify_solution,
)
from .trotter import DEFAULT_BOND_BUDGET, BondBudgetError, TrotterConfig, trotter_evolution

CSV_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_PARSE = 2
EXIT_CONVERGENCE = 3
EXIT_UNSUPPORTED = 4

DEFAULT_REFERENCE_CAP = 8
MATERIALIZE_BUDGET = 100_000

# Reference bond dimensions as (mantissa, exponent), three significant figures truncated.
TABLE1_PRINTED = {
    (1, 1): (7, 0), (1, 2): (4.3, 1), (1, 3): (2.59, 2), (1, 4): (1.55, 3),
    (2, 1): (2.5, 1), (2, 2): (6.01, 2), (2, 3): (1.44, 4), (2, 4): (3.46, 5),
    (3, 1): (1.87, 2), (3, 2): (3.47, 4), (3, 3): (6.46, 6), (3, 4): (1.20, 9),
}  # fmt: skip


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunRecord:
    command: str
    config: dict
    wall_ms: float
    element_count: int
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.wall_ms < 0:
            raise ValueError("wall_ms must be non-negative")
        if self.element_count <= 0:
            raise ValueError("element_count must be positive")


# -- parsing helpers ---------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_CONSTS = {"pi": math.pi, "e": math.e}


def parse_real(value: Any) -> float:
    """Number or arithmetic string such as ``"pi/4"`` or ``"1/16"``."""
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"not a number: {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(f"unsupported expression {value!r}")

    try:
        result = ev(ast.parse(value, mode="eval"))
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {value!r}") from exc
    if not math.isfinite(result):
        raise ValueError(f"{value!r} is not finite")
    return result


def _as_list(value: Any) -> list:
    return list(value) if isinstance(value, list) else [value]


def load_json(path: str) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_PARSE) from exc
    if not isinstance(obj, dict):
        raise CliError("config must be a JSON object", EXIT_PARSE)
    return obj


class CsvBuffer:
    def __init__(self, command: str, columns: Sequence[str], note: str = ""):
        self._buf = io.StringIO()
        comment = f"# mpoprop-csv v{CSV_SCHEMA_VERSION} command={command}"
        self._buf.write(comment + (f" {note}" if note else "") + "\n")
        self._writer = csv.writer(self._buf, lineterminator="\n")
        self._writer.writerow(columns)

    def row(self, values: Sequence[Any]) -> None:
        self._writer.writerow([_fmt(v) for v in values])

    def getvalue(self) -> str:
        return self._buf.getvalue()


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "NA"
    return str(v)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    def measure(self, fn: Callable[[], Any]) -> tuple[Any, float]:
        start = time.perf_counter()
        result = fn()
        elapsed = (time.perf_counter() - start) * 1e3
        return result, (elapsed if self.enabled else 0.0)


def _map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _guard(cfg: EvolutionConfig, args) -> None:
    H0, Hc = cfg.hamiltonians()
    status = convergence_check(
        H0, Hc, cfg.control, cfg.T, dense_cap=args.reference_cap, norm_bounds=ising_norm_bounds(cfg.spec)
    )
    if status is Convergence.VIOLATED and not args.force:
        raise CliError(
            f"N={cfg.N} T={cfg.T}: integral of ||H|| reaches pi; Magnus series may diverge (use --force)",
            EXIT_CONVERGENCE,
        )
    if status is not Convergence.OK:
        print(f"warning: N={cfg.N} T={cfg.T}: convergence {status.value}", file=sys.stderr)


# -- evolve ----------------------------------------------------------------------------

EVOLVE_COLUMNS = ["N", "n", "p", "T", "bond_max", "element_count", "wall_ms", "infidelity"]


@dataclass(frozen=True)
class _EvolveTask:
    cfg_dict: dict
    reference_cap: int
    reference_tol: float
    timing: bool
    dump: str | None


def _run_evolve(task: _EvolveTask) -> tuple[list, RunRecord]:
    cfg = EvolutionConfig.from_dict(task.cfg_dict)
    U, ms = _Clock(task.timing).measure(lambda: solve_tdse_mpo(cfg))
    eps = None
    if cfg.N <= task.reference_cap:
        eps = infidelity(_reference(cfg, task.reference_tol, task.reference_cap), U, task.reference_cap)
    if task.dump:
        save_mpo(U, task.dump)
    row = [cfg.N, cfg.magnus_order, cfg.chebyshev_order, cfg.T, U.bond_max, U.element_count, ms, eps]
    return row, RunRecord("evolve", cfg.to_dict(), ms, U.element_count, {"infidelity": eps})


_REFERENCE_CACHE: dict = {}


def _reference(cfg: EvolutionConfig, tol: float, cap: int) -> np.ndarray:
    key = (cfg.spec, cfg.control.coeffs, cfg.T, tol)
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[key] = dense_reference(cfg, tol=tol, cap=cap)
    return _REFERENCE_CACHE[key]


def _evolve_configs(obj: dict) -> list[dict]:
    try:
        Ts = [parse_real(t) for t in _as_list(obj["T"])]
        ps = [int(p) for p in _as_list(obj.get("chebyshev_order", 3))]
        ns = [int(n) for n in _as_list(obj.get("magnus_order", 1))]
        base = {"N": int(obj["N"]), "J": parse_real(obj.get("J", 1.0)), "control": [parse_real(c) for c in obj["control"]]}
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid evolve config: {exc}", EXIT_PARSE) from exc
    return [dict(base, T=T, magnus_order=n, chebyshev_order=p) for T, n, p in itertools.product(Ts, ns, ps)]


def _build_configs(dicts: list[dict]) -> list[EvolutionConfig]:
    try:
        return [EvolutionConfig.from_dict(d) for d in dicts]
    except UnsupportedOrderError as exc:
        raise CliError(str(exc), EXIT_UNSUPPORTED) from exc
    except ValueError as exc:
        raise CliError(f"invalid evolve config: {exc}", EXIT_PARSE) from exc


def cmd_evolve(args) -> str:
    dicts = _evolve_configs(load_json(args.config))
    configs = _build_configs(dicts)
    for cfg in configs:
        _guard(cfg, args)
    if args.save_mpo and len(dicts) != 1:
        raise CliError("--save-mpo needs a single (T, n, p) point", EXIT_PARSE)
    tasks = [
        _EvolveTask(d, args.reference_cap, args.reference_tol, not args.no_timing, args.save_mpo) for d in dicts
    ]
    out = CsvBuffer("evolve", EVOLVE_COLUMNS)
    for row, _ in _map(_run_evolve, tasks, args.workers):
        out.row(row)
    return out.getvalue()


# -- table1 ------------------------------------------------------------------------------

TABLE1_CONTROL = (1.0, -1.0, 1.0)
TABLE1_T = 0.1


def truncate_sig(value: int, digits: int = 3) -> tuple[float, int]:
    """Leading ``digits`` significant figures by truncation, as (mantissa, exponent)."""
    exponent = len(str(value)) - 1
    lead = int(str(value)[:digits])
    mantissa = lead / 10 ** (min(digits, exponent + 1) - 1)
    return round(mantissa, digits), exponent


def geometric_bond(B: int, p: int) -> int:
    return sum(B**k for k in range(p + 1))


def structural_bond(n: int, p: int, N: int = 4, bond0: int = 3, bondc: int = 3) -> int:
    ws = magnus_word_expansion(n, ControlFunction.numeric(TABLE1_CONTROL), TABLE1_T)
    omega = assemble_magnus_mpo(BondProfile((bond0,) * (N - 1)), BondProfile((bondc,) * (N - 1)), ws)
    return chebyshev_exp(omega, p).bond_max


def _synthetic_mpo(N: int, bond: int, rng: np.random.Generator) -> Mpo:
    dims = [1] + [bond] * (N - 1) + [1]
    return Mpo.from_arrays(
        [rng.normal(size=(2, 2, dims[i], dims[i + 1])) + 1j * rng.normal(size=(2, 2, dims[i], dims[i + 1])) for i in range(N)]
    )


def materialized_bond(n: int, p: int, N: int, rng: np.random.Generator, bond0: int = 3, bondc: int = 3) -> int:
    ws = magnus_word_expansion(n, ControlFunction.numeric(TABLE1_CONTROL), TABLE1_T)
    omega = assemble_magnus_mpo(_synthetic_mpo(N, bond0, rng), _synthetic_mpo(N, bondc, rng), ws)
    return chebyshev_exp(omega, p).bond_max


def cmd_table1(args) -> tuple[str, int]:
    rng = np.random.default_rng(args.seed)
    out = CsvBuffer("table1", ["n", "p", "bond_max", "mode", "printed", "match"])
    mismatches = 0
    for n, p in itertools.product(range(1, 4), range(1, 5)):
        bond = structural_bond(n, p)
        mode = "structural"
        if 4 * bond * bond <= args.materialize_budget:
            real = materialized_bond(n, p, 4, rng)
            if real != bond:
                mismatches += 1
            bond = real
            mode = "materialized"
        mant, exp = TABLE1_PRINTED[(n, p)]
        ok = truncate_sig(bond) == (round(mant, 3), exp)
        mismatches += not ok
        out.row([n, p, bond, mode, f"{mant}e{exp}", "yes" if ok else "no"])
    return out.getvalue(), EXIT_MISMATCH if mismatches else EXIT_OK


# -- bench ---------------------------------------------------------------------------------

BENCH_CONTROL = (1.0, -1.0, 1.0)


def _parse_range(text: str) -> list[int]:
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise CliError(f"bad N range {text!r}", EXIT_PARSE) from exc


def linear_fit_r2(xs: Sequence[float], ys: Sequence[float]) -> float:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    total = np.sum((ys - ys.mean()) ** 2)
    return 1.0 if total == 0 else float(1 - resid @ resid / total)


def cmd_bench(args) -> tuple[str, int]:
    if args.repeats < 1:
        raise CliError("repeats must be at least 1", EXIT_PARSE)
    clock = _Clock(not args.no_timing)
    out = CsvBuffer(
        "bench", ["path", "N", "repeats", "wall_ms_mean", "wall_ms_std", "element_count_mean", "element_count_std"]
    )
    mpo_counts = {}
    for N in _parse_range(args.N):
        cfg = EvolutionConfig(IsingSpec(N), ControlFunction.numeric(BENCH_CONTROL), 1 / (2 * N), 1, args.p)
        paths = [("mpo", lambda: solve_tdse_mpo(cfg), lambda U: U.element_count)]
        if N <= args.dense_cap:
            paths.append(("dense", lambda: solve_tdse_dense(cfg, args.dense_cap), lambda U: U.size))
        for name, run, count in paths:
            times, counts = [], []
            for _ in range(args.repeats):
                U, ms = clock.measure(run)
                times.append(ms)
                counts.append(count(U))
            if name == "mpo":
                mpo_counts[N] = counts[0]
            out.row([name, N, args.repeats, float(np.mean(times)), float(np.std(times)), float(np.mean(counts)), float(np.std(counts))])
    fit_ns = [N for N in mpo_counts if N >= 6]
    code = EXIT_OK
    if len(fit_ns) >= 2:
        r2 = linear_fit_r2(fit_ns, [mpo_counts[N] for N in fit_ns])
        print(f"mpo element_count linear fit over N>=6: R^2 = {r2:.12f}", file=sys.stderr)
        if r2 < 0.999:
            code = EXIT_MISMATCH
    return out.getvalue(), code


# -- trotter-compare --------------------------------------------------------------------------


def cmd_trotter_compare(args) -> str:
    obj = load_json(args.config)
    try:
        base = _evolve_configs(dict(obj, chebyshev_order=obj.get("chebyshev_order", 3), magnus_order=obj.get("magnus_order", 1)))
        Ks = [int(k) for k in _as_list(obj.get("K", list(range(1, 8))))]
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid trotter config: {exc}", EXIT_PARSE) from exc
    if len(base) != 1:
        raise CliError("trotter-compare takes a single T and order pair", EXIT_PARSE)
    (cfg,) = _build_configs(base)
    if cfg.N > args.dense_cap or cfg.N > args.reference_cap:
        raise CliError("trotter-compare needs N within the dense reference cap", EXIT_UNSUPPORTED)
    _guard(cfg, args)
    clock = _Clock(not args.no_timing)
    U_ref = _reference(cfg, args.reference_tol, args.reference_cap)
    out = CsvBuffer("trotter-compare", ["method", "order", "bond_max", "nominal_bond", "infidelity", "wall_ms"])
    U, ms = clock.measure(lambda: solve_tdse_mpo(cfg))
    out.row([f"magnus{cfg.magnus_order}+chebyshev", cfg.chebyshev_order, U.bond_max, U.bond_max, infidelity(U_ref, U), ms])
    for K in Ks:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tcfg = TrotterConfig(cfg.spec, cfg.control, cfg.T, K, args.bond_budget)
        try:
            U, ms = clock.measure(lambda: trotter_evolution(tcfg, override_budget=args.force))
        except BondBudgetError as exc:
            raise CliError(f"{exc} (use --force or raise --bond-budget)", EXIT_CONVERGENCE) from exc
        out.row(["trotter", K, U.bond_max, tcfg.nominal_bond, infidelity(U_ref, U), ms])
    return out.getvalue()


# -- qoc ----------------------------------------------------------------------------------------


def problem_from_dict(obj: dict) -> QocProblem:
    try:
        kind = obj.get("kind", "cz")
        N = int(obj["N"])
        n = int(obj.get("magnus_order", 2))
        T = parse_real(obj.get("T", "pi/4"))
        J = parse_real(obj.get("J", 1.0))
        if kind == "cz":
            return QocProblem.cz(N, int(obj.get("m", 3)), n, T, J)
        if kind == "forward":
            return QocProblem.forward(N, [parse_real(v) for v in obj["x_bar"]], n, T, J)
    except UnsupportedOrderError as exc:
        raise CliError(str(exc), EXIT_UNSUPPORTED) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid qoc problem: {exc}", EXIT_PARSE) from exc
    raise CliError(f"unknown problem kind {kind!r}", EXIT_PARSE)


def cmd_qoc(args) -> str:
    obj = load_json(args.problem)
    problem = problem_from_dict(obj)
    poly_path = Path(args.poly) if args.poly else (Path(args.out).with_suffix(".poly") if args.out else Path("qoc_objective.poly"))
    objective = build_objective(problem)
    export_polynomial(objective, poly_path)
    if load_polynomial(poly_path) != objective:
        raise CliError("exported polynomial failed to round-trip", EXIT_MISMATCH)
    result: dict[str, Any] = {
        "format": "mpoprop-qoc",
        "version": 1,
        "problem": {"N": problem.spec.N, "J": problem.spec.J, "m": problem.m, "magnus_order": problem.magnus_order, "T": problem.T},
        "variables": list(objective.variables),
        "degree": objective.degree,
        "terms": len(objective.poly),
        "polynomial_file": str(poly_path),
    }
    if args.solve:
        box = (-args.box, args.box)
        res = minimize_objective(objective, args.strategy, box, seed=args.seed)
        x = [float(v) for v in res.x]
        status = convergence_check(
            *_qoc_hamiltonians(problem), ControlFunction.numeric(x), problem.T,
            dense_cap=args.reference_cap, norm_bounds=ising_norm_bounds(problem.spec),
        )
        if status is not Convergence.OK:
            print(f"warning: recovered control has convergence status {status.value}", file=sys.stderr)
        eps = verify_solution(problem, x, tol=args.reference_tol, cap=args.reference_cap) if problem.spec.N <= args.reference_cap else None
        result.update({"x": x, "objective": res.value, "converged": res.converged, "convergence": status.value, "infidelity": eps})
    return json.dumps(result, indent=2) + "\n"


def _qoc_hamiltonians(problem: QocProblem):
    return EvolutionConfig(problem.spec, ControlFunction.numeric([0.0]), problem.T).hamiltonians()


# -- entry point --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--force", action="store_true", help="skip the convergence and bond-budget guards")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--dense-cap", type=int, default=DENSE_CAP)
    common.add_argument("--reference-cap", type=int, default=DEFAULT_REFERENCE_CAP, help="largest N for the dense reference integrator")
    common.add_argument("--reference-tol", type=float, default=1e-10)
    common.add_argument("--bond-budget", type=int, default=DEFAULT_BOND_BUDGET)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 for byte-reproducible output")
    common.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="mpoprop", description="MPO Magnus/Chebyshev propagators for controlled spin chains")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", parents=[common], help="propagate one config or a (T, n, p) sweep")
    p.add_argument("config")
    p.add_argument("--save-mpo", help="write the propagator MPO as JSON")

    p = sub.add_parser("table1", parents=[common], help="bond dimensions for Magnus x Chebyshev orders")
    p.add_argument("--materialize-budget", type=int, default=MATERIALIZE_BUDGET)

    p = sub.add_parser("bench", parents=[common], help="wall time and element counts against N")
    p.add_argument("--N", default="4:12", help="range lo:hi or comma list")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--p", type=int, default=3, help="Chebyshev order")

    p = sub.add_parser("trotter-compare", parents=[common], help="Trotter steps against Magnus/Chebyshev")
    p.add_argument("config")

    p = sub.add_parser("qoc", parents=[common], help="build, export and optionally minimize the gate objective")
    p.add_argument("problem")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--export-only", action="store_true")
    mode.add_argument("--solve", action="store_true")
    p.add_argument("--poly", help="polynomial output path")
    p.add_argument("--strategy", default="grid+descent", choices=["grid+descent", "multistart-descent"])
    p.add_argument("--box", type=float, default=1.0, help="search box half-width")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evolve":
            text, code = cmd_evolve(args), EXIT_OK
        elif args.command == "table1":
            text, code = cmd_table1(args)
        elif args.command == "bench":
            text, code = cmd_bench(args)
        elif args.command == "trotter-compare":
            text, code = cmd_trotter_compare(args), EXIT_OK
        else:
            text, code = cmd_qoc(args), EXIT_OK
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except UnsupportedOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    _emit(text, args.out)
    return code
