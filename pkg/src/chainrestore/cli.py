"""Command-line driver: find-t0, optimize-restorer, build-zero-order, simulate-transfer, verify."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .basis import Partition, popcount
from .channel import (
    coherence_orders,
    kraus_set,
    random_density_matrix,
    receiver_state,
    transfer_tensor,
    verify_non_mixing,
)
from .config import ConfigError, RunConfig, load_config
from .errors import InfeasibleStateError, NumericalError, OptimizationFailure, SearchFailure
from .evolution import compose_w, evolution_operator, find_t0
from .fullspace import full_receiver_state
from .hamiltonian import ChainSpec
from .restorer import (
    ParameterLayout,
    RestoringProblem,
    constraint_index,
    label_pair,
    materialize_unitary,
    optimize_restorer,
    parse_pair,
    scale_factor_table,
)
from .zeroorder import (
    ZeroOrderMode,
    ZeroOrderSpec,
    assemble_sender_state,
    exchange_extremes,
    optimize_zero_order_offdiag,
    solve_zero_order_tensor,
)

log = logging.getLogger("chainrestore")

MODES = ("find-t0", "optimize-restorer", "build-zero-order", "simulate-transfer", "verify")
RESTORE_TOL = 1e-9
CONSERVATION_TOL = 1e-10
LAMBDA_REPRO_TOL = 1e-10
ORACLE_TOL = 1e-10
NON_MIXING_TOL = 1e-12
COMPLETENESS_TOL = 1e-10
TRACE_TOL = 1e-12


def _resolve_t0(cfg: RunConfig, stored: dict | None = None) -> tuple[float, dict]:
    if cfg.time.t0 is None and stored and "t0" in stored:
        return float(stored["t0"]), {"t0": float(stored["t0"]), "t0_source": "solution"}
    if cfg.time.t0 is not None:
        return cfg.time.t0, {"t0": cfg.time.t0, "t0_source": "config"}
    search = find_t0(cfg.chain, cfg.partition, cfg.time.t_max, cfg.time.grid_step)
    return search.t0, {"t0": search.t0, "t0_source": "search", "t0_amplitude": search.amplitude}


def _write_histogram(path: Path, centres, counts) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["lambda_min_bin", "count"])
        for c, k in zip(centres, counts):
            wr.writerow([repr(float(c)), int(k)])


def _phi_from(cfg: RunConfig, path: Path | None) -> tuple[np.ndarray, dict]:
    layout = ParameterLayout(cfg.partition.n_extended_receiver, cfg.partition.n)
    if path is None:
        return np.zeros(layout.size), {"phi_source": "zero"}
    phi, doc = serialize.load_solution(path, cfg.partition)
    return phi, {"phi_source": str(path.name), "stored": doc}


def _zero_spec(cfg: RunConfig) -> ZeroOrderSpec:
    n = cfg.partition.n
    free = frozenset(tuple(sorted(parse_pair(f, n))) for f in cfg.zero_order.free_offdiag)
    return ZeroOrderSpec(cfg.zero_order.mode, free, cfg.zero_order.rho00)


# --- modes -----------------------------------------------------------------


def run_find_t0(cfg: RunConfig, out: Path, seed: int, restarts: int) -> dict:
    search = find_t0(cfg.chain, cfg.partition, cfg.time.t_max, cfg.time.grid_step)
    search.curve.to_csv(out / "amplitude_curve.csv")
    return {"t0": search.t0, "amplitude": search.amplitude, "t_max": cfg.time.t_max, "grid_step": cfg.time.grid_step}


def run_optimize(cfg: RunConfig, out: Path, seed: int, restarts: int) -> dict:
    t0, t_info = _resolve_t0(cfg)
    v = evolution_operator(cfg.chain, t0, cfg.partition.n)
    o = cfg.optimize
    res = optimize_restorer(
        v, cfg.partition, objective=cfg.objective_pairs(), restarts=restarts, seed=seed,
        ascent_steps=o.ascent_steps, fix_objective=o.fix_objective, phase2_restarts=o.phase2_restarts,
    )
    best = res.best
    centres, counts = res.histogram(o.histogram_bins)
    _write_histogram(out / "lambda_min_histogram.csv", centres, counts)
    extra = {"objective_entries": [label_pair(cfg.partition.n, *p) for p in cfg.objective_pairs()], "seed": seed}
    serialize.write_json(out / "solution.json", serialize.solution_to_json(best, cfg.chain, cfg.partition, t0, extra))
    return {
        **t_info,
        "best_phase1_objective": res.best_objective,
        "objective": best.objective,
        "lambda_min": best.lambda_min,
        "lambda_min_entry": best.lambda_min_entry,
        "residual_norm": best.residual_norm,
        "restart_index": best.restart_index,
        "phase": best.phase,
        "converged_restarts": res.converged_restarts,
        "attempted_restarts": res.attempted_restarts,
        "lambdas": best.lambdas.to_json(),
    }


def run_zero_order(cfg: RunConfig, out: Path, seed: int, restarts: int) -> dict:
    t0, t_info = _resolve_t0(cfg)
    n = cfg.partition.n
    v = evolution_operator(cfg.chain, t0, n)
    problem = RestoringProblem(v, cfg.partition)
    zspec = _zero_spec(cfg)
    report = dict(t_info)
    if cfg.zero_order.restore_offdiag:
        free = sorted(zspec.free_offdiag) or None
        opt = optimize_zero_order_offdiag(
            v, cfg.partition, restarts=restarts, seed=seed, free_offdiag=free, mode=zspec.mode,
            ascent_steps=cfg.optimize.ascent_steps, problem=problem,
        )
        sol = opt.solution
        serialize.write_json(out / "solution.json", serialize.solution_to_json(opt.search.best, cfg.chain, cfg.partition, t0, {"seed": seed}))
        report.update(phi_source="optimized", converged_restarts=opt.search.converged_restarts)
        phi = opt.phi
    else:
        phi, info = _phi_from(cfg, cfg.zero_order.solution)
        if info.get("stored") and cfg.time.t0 is None:
            t0, t_info = _resolve_t0(cfg, info["stored"])
            v = evolution_operator(cfg.chain, t0, n)
            problem = RestoringProblem(v, cfg.partition)
            report = dict(t_info)
        report["phi_source"] = info["phi_source"]
        sol = solve_zero_order_tensor(problem.transfer_at(phi), n, zspec)
    w = compose_w(v, materialize_unitary(problem.layout.split(phi), cfg.partition.n_extended_receiver).blocks, cfg.partition)
    rho_r = receiver_state(sol.rho0, w, cfg.partition)
    if zspec.mode is ZeroOrderMode.PERFECT_WITH_EXCHANGE:
        rho_r = exchange_extremes(rho_r)
    serialize.write_json(out / "sender_state.json", serialize.matrix_to_json(sol.rho0))
    serialize.write_json(out / "receiver_state.json", serialize.matrix_to_json(rho_r))
    mid = [i for i in range(1 << n) if 0 < popcount(i) < n]
    report.update(
        mode=zspec.mode.value,
        residual=sol.residual,
        condition_number=sol.condition_number,
        free_offdiag={label_pair(n, *p): {"re": l.real, "im": l.imag, "modulus": abs(l), "phase": float(np.angle(l))}
                      for p, l in sol.lambda0.items()},
        middle_diagonal_transfer_error=float(max((abs(rho_r[i, i] - sol.rho0[i, i]) for i in mid), default=0.0)),
    )
    return report


def _random_free_entries(n: int, mode: ZeroOrderMode, free0: frozenset, rng: np.random.Generator, scale: float):
    full = (1 << n) - 1
    hi, off = {}, {}
    for a in range(1 << n):
        for b in range(1 << n):
            if mode is ZeroOrderMode.PERFECT_WITH_EXCHANGE and {a, b} & {0, full}:
                continue
            z = scale * complex(rng.standard_normal(), rng.standard_normal())
            if popcount(b) > popcount(a):
                hi[(a, b)] = z
            elif (a, b) in free0:
                off[(a, b)] = z
    return hi, off


def _protocol_state(rho0, n, zspec: ZeroOrderSpec, rng, scale: float) -> np.ndarray:
    """0-order solution plus random free entries, shrunk if needed to stay positive."""
    hi, off = _random_free_entries(n, zspec.mode, zspec.free_offdiag, rng, scale)
    try:
        return assemble_sender_state(rho0, hi, off)
    except InfeasibleStateError as exc:
        shrink = 0.9 * (exc.shrink_factor or 0.0)
        return assemble_sender_state(rho0, {k: shrink * x for k, x in hi.items()}, {k: shrink * x for k, x in off.items()})


def run_simulate(cfg: RunConfig, out: Path, seed: int, restarts: int) -> dict:
    phi, info = _phi_from(cfg, cfg.simulate.solution)
    t0, t_info = _resolve_t0(cfg, info.get("stored"))
    n = cfg.partition.n
    v = evolution_operator(cfg.chain, t0, n)
    u = materialize_unitary(ParameterLayout(cfg.partition.n_extended_receiver, n).split(phi), cfg.partition.n_extended_receiver)
    w = compose_w(v, u.blocks, cfg.partition)
    t = transfer_tensor(w, cfg.partition)
    table = scale_factor_table(t, n)
    lam_err = None
    if "stored" in info:
        stored = {(e["order"], *parse_pair(e["entry"], n)): complex(e["re"], e["im"]) for e in info["stored"]["lambdas"]}
        lam_err = max(abs(table.values[k] - val) for k, val in stored.items())
    zspec = _zero_spec(cfg)
    zsol = solve_zero_order_tensor(t, n, zspec)
    completeness = kraus_set(w, cfg.partition, tol=np.inf).completeness_error()

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51]))
    orders = coherence_orders(n)
    lam = np.einsum("nmnm->nm", t)
    full = (1 << n) - 1
    # 0-order entries expected to arrive unchanged (free off-diagonals: scaled by lambda^(0))
    is_mid = np.array([0 < popcount(i) < n for i in range(1 << n)])
    zero_mask = orders == 0
    if zspec.mode is ZeroOrderMode.ALMOST_PERFECT:
        zero_mask &= np.outer(is_mid, is_mid)
    free_mask = np.zeros_like(zero_mask)
    for a, b in zspec.free_offdiag:
        free_mask[a, b] = free_mask[b, a] = True
    worst = {"restoring": 0.0, "conservation": 0.0, "trace": 0.0, "zero_order": 0.0}
    for trial in range(cfg.simulate.trials):
        rho_s = _protocol_state(zsol.rho0, n, zspec, rng, cfg.simulate.higher_scale)
        rho_r = receiver_state(rho_s, w, cfg.partition)
        restored = np.where(orders != 0, rho_r - lam * rho_s, 0.0)
        worst["restoring"] = max(worst["restoring"], float(np.abs(restored).max()))
        worst["conservation"] = max(worst["conservation"], float(abs(rho_s[0, 0] + rho_s[full, full] - rho_r[0, 0] - rho_r[full, full])))
        worst["trace"] = max(worst["trace"], float(abs(np.trace(rho_r) - 1)))
        shown = exchange_extremes(rho_r) if zspec.mode is ZeroOrderMode.PERFECT_WITH_EXCHANGE else rho_r
        target = np.where(free_mask, lam * rho_s, rho_s)
        zero_err = float(np.abs(np.where(zero_mask, shown - target, 0)).max())
        worst["zero_order"] = max(worst["zero_order"], float(zero_err))
        if trial == 0:
            serialize.write_json(out / "sender_state.json", serialize.matrix_to_json(rho_s))
            serialize.write_json(out / "receiver_state.json", serialize.matrix_to_json(shown))
    checks = {
        "restoring": worst["restoring"] <= RESTORE_TOL,
        "conservation": worst["conservation"] <= CONSERVATION_TOL,
        "trace": worst["trace"] <= TRACE_TOL,
        "kraus_completeness": completeness <= COMPLETENESS_TOL,
        "zero_order": worst["zero_order"] <= RESTORE_TOL,
    }
    if lam_err is not None:
        checks["lambda_reproduction"] = lam_err <= LAMBDA_REPRO_TOL
    return {
        **t_info,
        "phi_source": info["phi_source"],
        "zero_order_mode": zspec.mode.value,
        "trials": cfg.simulate.trials,
        "max_restoring_residual": worst["restoring"],
        "max_conservation_residual": worst["conservation"],
        "max_trace_error": worst["trace"],
        "max_zero_order_error": worst["zero_order"],
        "kraus_completeness_error": completeness,
        "lambda_reproduction_error": lam_err,
        "lambdas": table.to_json(),
        "checks": checks,
        "passed": all(checks.values()),
    }


def _verify_chain(cfg: RunConfig, n_spins: int, seed: int, restarts: int) -> dict:
    n = cfg.partition.n
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_spins]))
    spec = ChainSpec(n_spins, tuple(rng.uniform(0.5, 1.5, n_spins - 1)), cfg.chain.coupling_mode)
    part = Partition(n_spins, n, n, min(2 * n, n_spins - n))
    layout = ParameterLayout(part.n_extended_receiver, n)
    oracle = completeness = trace = 0.0
    for _ in range(cfg.verify.trials):
        t = float(rng.uniform(0.5, 10.0))
        rho = random_density_matrix(1 << n, rng)
        u = materialize_unitary(layout.split(rng.uniform(0, 2 * np.pi, layout.size)), part.n_extended_receiver)
        w = compose_w(evolution_operator(spec, t, n), u.blocks, part)
        fast = receiver_state(rho, w, part)
        oracle = max(oracle, float(np.abs(fast - full_receiver_state(rho, spec, part, t, u.blocks)).max()))
        completeness = max(completeness, kraus_set(w, part, tol=np.inf).completeness_error())
        trace = max(trace, float(abs(np.trace(fast) - 1)))
    nm = verify_non_mixing(spec, part, float(rng.uniform(0.5, 10.0)), cfg.verify.trials, seed=seed, threshold=NON_MIXING_TOL)
    result = {
        "oracle_max_error": oracle,
        "kraus_completeness_error": completeness,
        "trace_error": trace,
        "non_mixing_max_leakage": max(nm.max_leakage.values()),
    }
    checks = {
        "oracle": oracle <= ORACLE_TOL,
        "kraus_completeness": completeness <= COMPLETENESS_TOL,
        "trace": trace <= TRACE_TOL,
        "non_mixing": nm.passed,
    }
    # restoring needs more parameters than real equations
    n_eq = 2 * len(constraint_index(n))
    if layout.size > n_eq:
        t0 = find_t0(spec, part, t_max=20.0).t0
        v = evolution_operator(spec, t0, n)
        res = optimize_restorer(v, part, restarts=restarts, seed=seed, ascent_steps=0, fix_objective=False)
        phi = res.best.phi
        w = compose_w(v, materialize_unitary(layout.split(phi), part.n_extended_receiver).blocks, part)
        t_tensor = transfer_tensor(w, part)
        lam = np.einsum("nmnm->nm", t_tensor)
        orders = coherence_orders(n)
        full = (1 << n) - 1
        zspec = ZeroOrderSpec(rho00=0.25)
        zsol = solve_zero_order_tensor(t_tensor, n, zspec)
        mid = np.array([0 < popcount(i) < n for i in range(1 << n)])
        mid_mask = (orders == 0) & np.outer(mid, mid)
        restore = cons = zero_err = 0.0
        for _ in range(10):
            rho = _protocol_state(zsol.rho0, n, zspec, rng, 0.05)
            rr = receiver_state(rho, w, part)
            restore = max(restore, float(np.abs(np.where(orders != 0, rr - lam * rho, 0)).max()))
            cons = max(cons, float(abs(rho[0, 0] + rho[full, full] - rr[0, 0] - rr[full, full])))
            zero_err = max(zero_err, float(np.abs(np.where(mid_mask, rr - rho, 0)).max()))
        result.update(restoring_residual=restore, conservation_residual=cons, zero_order_substitution_error=zero_err,
                      t0=t0, restoring_converged=res.converged_restarts)
        checks.update(restoring=restore <= RESTORE_TOL, conservation=cons <= CONSERVATION_TOL,
                      zero_order_substitution=zero_err <= ORACLE_TOL)
    result["checks"] = checks
    result["passed"] = all(checks.values())
    return result


def run_verify(cfg: RunConfig, out: Path, seed: int, restarts: int) -> dict:
    chains = {str(ns): _verify_chain(cfg, ns, seed, cfg.verify.restarts) for ns in cfg.verify.n_spins}
    return {"chains": chains, "passed": all(c["passed"] for c in chains.values())}


RUNNERS = {
    "find-t0": run_find_t0,
    "optimize-restorer": run_optimize,
    "build-zero-order": run_zero_order,
    "simulate-transfer": run_simulate,
    "verify": run_verify,
}


def config_summary(cfg: RunConfig) -> dict:
    return {
        "chain": serialize.chain_to_json(cfg.chain),
        "partition": serialize.partition_to_json(cfg.partition),
        "time": {"t0": cfg.time.t0, "t_max": cfg.time.t_max, "grid_step": cfg.time.grid_step},
        "optimize": {k: v for k, v in dataclasses.asdict(cfg.optimize).items()},
        "zero_order": {
            "mode": cfg.zero_order.mode.value,
            "rho00": cfg.zero_order.rho00,
            "restore_offdiag": cfg.zero_order.restore_offdiag,
            "free_offdiag": list(cfg.zero_order.free_offdiag),
        },
    }


def run(cfg: RunConfig, mode: str, out: Path, seed: int | None = None, restarts: int | None = None) -> dict:
    if mode not in RUNNERS:
        raise ValueError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.optimize.seed if seed is None else seed
    restarts = cfg.optimize.restarts if restarts is None else restarts
    if restarts < 1:
        raise ConfigError("--restarts", "must be >= 1")
    results = RUNNERS[mode](cfg, out, seed, restarts)
    report = {
        "schema_version": serialize.SCHEMA_VERSION,
        "mode": mode,
        "seed": seed,
        "restarts": restarts,
        "config": config_summary(cfg),
        "results": results,
    }
    serialize.write_json(out / "report.json", report)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainrestore", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, type=Path, help="INI run configuration")
        p.add_argument("--seed", type=int, help="override optimize.seed")
        p.add_argument("--restarts", type=int, help="override optimize.restarts")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        report = run(cfg, args.mode, args.out, args.seed, args.restarts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, OptimizationFailure, SearchFailure, InfeasibleStateError) as exc:
        print(f"{args.mode} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    passed = report["results"].get("passed", True)
    print(f"{args.mode}: {'ok' if passed else 'checks failed'}; report written to {args.out / 'report.json'}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
