#!/usr/bin/env python3
"""
Experiment harness for the SMP/LOCC simulator.

Each experiment id maps to a per-instance worker that appends result rows. Every
instance draws from its own counter-based generator (Philox keyed by the run
seed, the experiment id and the instance number), so results do not depend on
the order in which instances finish. Instances run concurrently in worker
threads; rows are sorted by instance before they are written.
"""

import asyncio
import csv
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional

import numpy as np

from ensembles import (
    random_bits,
    random_density_matrix,
    random_effect,
    random_gentle_effects,
    random_ket,
    random_povm,
    random_two_value_kraus,
)
from errors import (
    DegenerateBranchError,
    HypothesisViolation,
    ReplayIntegrityError,
    SamplingExhaustedError,
    SimulationError,
    UsageError,
)
from fingerprints import all_bitstrings, swap_accept_prob, swap_circuit_sim
from measurements import Instrument, Povm
from protocols import (
    ambainis_eq_protocol,
    chain_protocol,
    drhm_locc_protocol,
    drhm_two_value_rounds,
    fingerprint_eq_protocol,
    hm_output_correct,
    hm_protocol,
    incoherent_one_way,
    matching_family,
    random_locc_protocol,
    random_one_way_protocol,
    rhm_hybrid_protocol,
    run_locc_exact,
    total_variation,
)
from run_logger import RunLogger
from sim_config import (
    CSV_SIGNIFICANT_DIGITS,
    EXPERIMENT_DEFAULTS,
    PLOT_SUFFIX,
    SUMMARY_SUFFIX,
    TOL,
    WORKERS,
)
from transforms import (
    HashingEqProtocol,
    PublicCoinProtocol,
    b_side_conditionals,
    both_sides_envelope,
    clamp_depth_excess,
    clamp_table,
    decode_message,
    encode_message,
    locc1_to_hybrid,
    newman_derandomize,
    newman_t,
    one_side_bound,
    output_distribution_both_replaced,
    perturb_table,
    ratio_conditionals,
    reconstruct_estimates,
    replace_round_trip,
    sequential_conditionals,
    simulate_both_replaced,
    simulate_from_tables,
    union_bound_check,
    value_table,
)

logger = logging.getLogger(__name__)

CheckKind = Literal["eq", "le", "ge", "stat", "info"]
COLUMNS = ["experiment", "instance", "seed", "metric", "check", "measured", "bound", "passed"]

# Failures inside the simulated regime; anything else is a bug
OUT_OF_REGIME = (DegenerateBranchError, ReplayIntegrityError, SamplingExhaustedError)
# Experiments whose delta must be strictly positive
POSITIVE_DELTA = {"replace", "both-replaced", "newman"}
WORST_CASE_PATTERNS = ("plus", "minus", "alternating")


@dataclass
class ExperimentConfig:
    """One experiment run: id, merged parameters, seed and output path."""
    experiment: str
    seed: int
    out: Path
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def success_fraction(self) -> float:
        return float(self.params.get("success_fraction", 1.0))


@dataclass(frozen=True)
class ResultRow:
    """A single measured quantity; bound-check rows carry both measured value and bound."""
    experiment: str
    instance: int
    seed: int
    metric: str
    check: CheckKind
    measured: float
    bound: float
    passed: bool

    def as_record(self) -> List[str]:
        return [self.experiment, str(self.instance), str(self.seed), self.metric, self.check,
                format_number(self.measured), format_number(self.bound), "1" if self.passed else "0"]


def format_number(value: float) -> str:
    return format(float(value), f".{CSV_SIGNIFICANT_DIGITS}g")


class RowBuilder:
    """Collects the rows of one instance."""

    def __init__(self, experiment: str, instance: int, seed: int):
        self.experiment = experiment
        self.instance = instance
        self.seed = seed
        self.rows: List[ResultRow] = []

    def _add(self, metric: str, check: CheckKind, measured: float, bound: float, passed: bool):
        self.rows.append(ResultRow(self.experiment, self.instance, self.seed, metric, check,
                                   float(measured), float(bound), bool(passed)))

    def eq(self, metric: str, measured: float, expected: float, tol: float = TOL):
        self._add(metric, "eq", measured, expected, abs(measured - expected) <= tol)

    def le(self, metric: str, measured: float, bound: float, tol: float = TOL):
        self._add(metric, "le", measured, bound, measured <= bound + tol)

    def ge(self, metric: str, measured: float, bound: float, tol: float = TOL):
        self._add(metric, "ge", measured, bound, measured >= bound - tol)

    def stat(self, metric: str, measured: float, bound: float, passed: bool):
        self._add(metric, "stat", measured, bound, passed)

    def info(self, metric: str, measured: float, bound: float = math.nan):
        self._add(metric, "info", measured, bound, True)


def instance_rng(seed: int, experiment: str, instance: int) -> np.random.Generator:
    """Counter-based stream for one instance, independent of execution order."""
    key = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(experiment.encode()), instance))
    return np.random.Generator(np.random.Philox(key))


def max_outcome_gap(p: Dict[Any, float], q: Dict[Any, float]) -> float:
    return max((abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q)), default=0.0)


def _random_locc_instance(rounds: int, max_qubits: int, rng: np.random.Generator):
    qa, qb = (int(q) for q in rng.integers(1, max_qubits + 1, 2))
    protocol = random_locc_protocol(rounds, (2 ** qa, 2 ** qb), rng)
    return protocol, random_density_matrix(2 ** qa, rng), random_density_matrix(2 ** qb, rng)


# ---------------------------------------------------------------------------
# Experiment workers
# ---------------------------------------------------------------------------

def fingerprint_eq_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    k = params["k"]
    if instance == params["instances"]:
        # Exhaustive instance over every input pair of the small code.
        n = params["exhaustive_n"]
        protocol = fingerprint_eq_protocol(n, k)
        worst = 0.0
        for x in all_bitstrings(n):
            for y in all_bitstrings(n):
                expected = 1.0 if x == y else (5 / 8) ** k
                worst = max(worst, abs(protocol.accept_prob(x, y) - expected))
        rows.le("exhaustive_max_deviation", worst, 1e-9, tol=0.0)
        return

    n = params["n"]
    protocol = fingerprint_eq_protocol(n, k)
    single = fingerprint_eq_protocol(n, 1)
    x = random_bits(n, rng)
    y = x
    while y == x:
        y = random_bits(n, rng)
    rows.eq("accept_equal", protocol.accept_prob(x, x), 1.0)
    if protocol.code.kind == "hadamard":
        rows.eq("accept_unequal_single", single.accept_prob(x, y), 5 / 8)
        rows.eq("accept_unequal_k", protocol.accept_prob(x, y), (5 / 8) ** k)
    else:
        rows.info("accept_unequal_single", single.accept_prob(x, y))
        rows.info("accept_unequal_k", protocol.accept_prob(x, y))
    rows.eq("accept_unequal_circuit", protocol.accept_prob_circuit(x, y), protocol.accept_prob(x, y))

    dim = 2 ** int(rng.integers(1, 5))
    a, b = random_ket(dim, rng), random_ket(dim, rng)
    rows.eq("swap_random_kets", swap_circuit_sim(a, b), swap_accept_prob(abs(np.vdot(a, b))))
    rows.info("message_qubits", protocol.message_qubits)


def ambainis_eq_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    n = params["n"]
    protocol = ambainis_eq_protocol(n, params["reps"])
    x = format(instance, f"0{n}b")
    rows.eq("accept_equal", protocol.accept_prob(x, x), 1.0)
    min_reject = min(protocol.reject_prob(x, y) for y in all_bitstrings(n) if y != x)
    rows.ge("min_reject_single", min_reject, protocol.relative_distance)
    rows.info("message_bits", protocol.message_bits)


def hm_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    n = params["n"]
    matching = matching_family(n)[instance]
    rhm = rhm_hybrid_protocol(n)
    worst = worst_rhm = 0.0
    for x in all_bitstrings(n):
        dist = hm_protocol(n, x, matching)
        worst = max(worst, 1 - sum(p for out, p in dist.items() if hm_output_correct(x, matching, out)))
        hybrid = rhm.output_distribution(x, instance)
        worst_rhm = max(worst_rhm, 1 - sum(p for out, p in hybrid.items() if hm_output_correct(x, matching, out)))
    rows.le("max_error", worst, 0.0)
    rows.le("rhm_max_error", worst_rhm, 0.0)
    rows.info("rhm_bob_bits", rhm.bob_bits)


def drhm_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    n = params["n"]
    m1, m2 = divmod(instance, n - 1)
    worst = worst_tv = 0.0
    rounds = 0
    for x1 in all_bitstrings(n):
        for x2 in all_bitstrings(n):
            run = drhm_locc_protocol(n, x1, m2, x2, m1)
            dist = run.run().output_distribution()
            worst = max(worst, 1 - sum(p for out, p in dist.items() if run.is_correct(out)))
            two_value = drhm_two_value_rounds(n, x1, m2, x2, m1)
            worst_tv = max(worst_tv, total_variation(dist, two_value.run().output_distribution()))
            rounds = two_value.rounds
    rows.le("max_error", worst, 0.0)
    rows.le("two_value_max_tv", worst_tv, 1e-9, tol=0.0)
    rows.eq("two_value_rounds", rounds, 2 * int(math.log2(n)) + 2 * math.ceil(math.log2(n - 1)))


def ratio_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    d = int(rng.integers(2, params["max_dim"] + 1))
    length = int(rng.integers(1, params["max_length"] + 1))
    chain = [Instrument(tuple(random_two_value_kraus(d, rng))) for _ in range(length)]
    protocol = chain_protocol(chain)
    rho = random_density_matrix(d, rng)
    vt = value_table(protocol, rho, "A")
    # Ref_B idles on a trivial system, so its outcome is always 0.
    history = tuple(int(rng.integers(0, 2)) if i % 2 == 0 else 0 for i in range(protocol.num_steps))
    try:
        ratios = ratio_conditionals(vt, history)
    except DegenerateBranchError as e:
        logger.info(f"ratio instance {instance} skipped: {e}")
        rows.info("rejected_degenerate", 1.0)
        return
    sequential = sequential_conditionals(protocol, rho, history, "A")
    rows.le("max_ratio_gap", max(abs(a - b) for a, b in zip(ratios, sequential)), 1e-9, tol=0.0)
    rows.le("branching_consistency", vt.consistency_error(), 1e-9, tol=0.0)


def clamp_sim_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    rounds = 1 + instance % 3
    delta = params["delta"]
    protocol, rho_a, rho_b = _random_locc_instance(rounds, params["max_qubits"], rng)
    truth = run_locc_exact(protocol, rho_a, rho_b).accept_prob()
    vt = value_table(protocol, rho_a, "A")
    b_conditionals = b_side_conditionals(protocol, rho_b)
    rows.le("exact_table_gap", abs(simulate_from_tables(clamp_table(vt), b_conditionals) - truth), 1e-9, tol=0.0)

    worst = excess = 0.0
    for _ in range(params["draws"]):
        ct = clamp_table(perturb_table(vt, delta, rng))
        worst = max(worst, abs(simulate_from_tables(ct, b_conditionals) - truth))
        excess = max(excess, clamp_depth_excess(vt, ct, delta))
    worst_independent = 0.0
    for pattern in WORST_CASE_PATTERNS:
        noisy = perturb_table(vt, delta, pattern=pattern)
        ct = clamp_table(noisy)
        worst = max(worst, abs(simulate_from_tables(ct, b_conditionals) - truth))
        excess = max(excess, clamp_depth_excess(vt, ct, delta))
        independent = clamp_table(noisy, rule="independent")
        worst_independent = max(worst_independent, abs(simulate_from_tables(independent, b_conditionals) - truth))
    rows.le(f"max_error_r{rounds}", worst, one_side_bound(rounds, delta))
    rows.le("depth_bound_excess", excess, 0.0)
    rows.info("independent_rule_max_error", worst_independent, one_side_bound(rounds, delta))


def replace_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    q, r, c, delta = params["q"], params["r"], params["c"], params["delta"]
    dim = 2 ** q
    rho = random_density_matrix(dim, rng)
    effects = [random_effect(dim, rng) for _ in range(2 ** c)]
    report = replace_round_trip(rho, effects, delta, r)
    msg = report.message
    rows.le("round_trip_deviation", report.max_state_deviation, 1e-10, tol=0.0)
    rows.le("message_pairs", msg.t, msg.t_bound, tol=0.0)
    replayed = reconstruct_estimates(decode_message(encode_message(msg)), effects)
    rows.le("replay_gap", float(np.max(np.abs(replayed - report.estimates))), 1e-10, tol=0.0)
    rows.stat("max_estimate_error", report.max_estimate_error, delta, report.max_estimate_error <= delta)
    rows.info("message_bits", msg.bit_length)
    rows.info("implied_constant", msg.implied_constant)


def both_replaced_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    rounds = 1 + instance % 3
    delta = params["delta"]
    protocol, rho_a, rho_b = _random_locc_instance(rounds, params["max_qubits"], rng)
    transcript = run_locc_exact(protocol, rho_a, rho_b)
    truth = transcript.accept_prob()
    vt_a = value_table(protocol, rho_a, "A")
    vt_b = value_table(protocol, rho_b, "B")
    ct_a, ct_b = clamp_table(vt_a), clamp_table(vt_b)
    rows.le("exact_table_gap", abs(simulate_both_replaced(ct_a, ct_b) - truth), 1e-9, tol=0.0)
    rows.le("exact_output_tv", total_variation(output_distribution_both_replaced(ct_a, ct_b),
                                               transcript.output_distribution()), 1e-9, tol=0.0)

    worst = 0.0
    for _ in range(params["draws"]):
        noisy_a = clamp_table(perturb_table(vt_a, delta, rng))
        noisy_b = clamp_table(perturb_table(vt_b, delta, rng))
        worst = max(worst, abs(simulate_both_replaced(noisy_a, noisy_b) - truth))
    for pattern in WORST_CASE_PATTERNS:
        noisy_a = clamp_table(perturb_table(vt_a, delta, pattern=pattern))
        noisy_b = clamp_table(perturb_table(vt_b, delta, pattern=pattern))
        worst = max(worst, abs(simulate_both_replaced(noisy_a, noisy_b) - truth))
    rows.le(f"max_error_r{rounds}", worst, both_sides_envelope(rounds, delta))
    rows.info("second_order_claim", worst, 2 ** (2 * rounds) * rounds ** 2 * delta ** 2)


def locc1_hybrid_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    n = params["n"]
    if instance % 5 == 4:
        # Incoherent one-way configuration: Bob's message is |y>.
        qa = int(rng.integers(1, params["max_qubits"] + 1))
        outcomes = int(rng.integers(2, params["max_outcomes"] + 1))
        alice_states = {x: random_density_matrix(2 ** qa, rng) for x in all_bitstrings(n)}
        ref_a = Povm(tuple(random_povm(2 ** qa, outcomes, rng)))
        protocol = incoherent_one_way(alice_states, n, ref_a, lambda a, y: (a + y.count("1")) % 2 == 0)
    else:
        protocol = random_one_way_protocol(n, rng, params["max_qubits"], params["max_outcomes"])

    hybrid = locc1_to_hybrid(protocol)
    worst = max(max_outcome_gap(hybrid.output_distribution(x, y), protocol.output_distribution(x, y))
                for x in protocol.xs for y in protocol.ys)
    rows.le("max_outcome_deviation", worst, 1e-9, tol=0.0)
    rows.eq("classical_bits", hybrid.classical_bits, hybrid.outcome_bits + hybrid.branch_bits)
    rows.info("outcome_bits", hybrid.outcome_bits)
    rows.info("branch_bits", hybrid.branch_bits)
    decoded = hybrid.decode(hybrid.alice_message(protocol.xs[0], rng))
    rows.eq("decoded_outcome_valid", float(0 <= decoded < len(protocol.ref_a)), 1.0)

    if len(protocol.ref_a) == 2:
        layered = locc1_to_hybrid(protocol, mode="layered")
        worst = max(max_outcome_gap(layered.output_distribution(x, y), protocol.output_distribution(x, y))
                    for x in protocol.xs for y in protocol.ys)
        rows.le("layered_max_outcome_deviation", worst, 1e-9, tol=0.0)


def newman_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    n, epsilon, delta = params["n"], params["epsilon"], params["delta"]
    xs = ys = all_bitstrings(n)
    protocol = HashingEqProtocol.for_error(n, epsilon)
    derandomized = newman_derandomize(protocol, xs, ys, epsilon, delta, rng)
    rows.eq("t", derandomized.t, newman_t(len(xs), len(ys), delta))
    rows.le("max_error", derandomized.max_error, epsilon + delta, tol=0.0)
    rows.stat("first_sample_success", derandomized.attempts, 1, derandomized.attempts == 1)

    # Spot check the vectorised error matrix against per-coin evaluation.
    spot = xs[:2]
    fast = protocol.error_matrix(derandomized.coins, spot, ys)
    slow = PublicCoinProtocol.error_matrix(protocol, derandomized.coins, spot, ys)
    rows.le("error_matrix_gap", float(np.max(np.abs(fast - slow))), 1e-12, tol=0.0)
    rows.eq("accept_equal", derandomized.accept_prob(xs[0], xs[0]), 1.0)
    rows.info("index_bits", derandomized.index_bits)


def union_bound_worker(params: Dict[str, Any], instance: int, rows: RowBuilder, rng: np.random.Generator):
    dim = int(rng.integers(2, params["max_dim"] + 1))
    steps = int(rng.integers(1, params["max_steps"] + 1))
    rho = random_density_matrix(dim, rng)
    effects, deltas = random_gentle_effects(rho, steps, params["max_delta"], rng)
    chain = [Instrument.luders((e, np.eye(dim) - e)) for e in effects]
    result = union_bound_check(chain, rho, delta=float(max(deltas)))
    rows.ge("all_success_prob", result.success_prob, result.bound)
    rows.info("delta", result.delta)


@dataclass(frozen=True)
class Experiment:
    name: str
    instances: Callable[[Dict[str, Any]], int]
    worker: Callable[[Dict[str, Any], int, RowBuilder, np.random.Generator], None]


EXPERIMENTS: Dict[str, Experiment] = {
    e.name: e for e in [
        Experiment("fingerprint-eq", lambda p: p["instances"] + 1, fingerprint_eq_worker),
        Experiment("ambainis-eq", lambda p: 2 ** p["n"], ambainis_eq_worker),
        Experiment("hm", lambda p: p["n"] - 1, hm_worker),
        Experiment("drhm", lambda p: (p["n"] - 1) ** 2, drhm_worker),
        Experiment("ratio", lambda p: p["instances"], ratio_worker),
        Experiment("clamp-sim", lambda p: p["instances"], clamp_sim_worker),
        Experiment("replace", lambda p: p["instances"], replace_worker),
        Experiment("both-replaced", lambda p: p["instances"], both_replaced_worker),
        Experiment("locc1-hybrid", lambda p: p["instances"], locc1_hybrid_worker),
        Experiment("newman", lambda p: p["instances"], newman_worker),
        Experiment("union-bound", lambda p: p["instances"], union_bound_worker),
    ]
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _coerce(experiment: str, key: str, value: Any) -> Any:
    default = EXPERIMENT_DEFAULTS[experiment][key]
    try:
        if isinstance(default, int):
            coerced = int(value)
            if isinstance(value, float) and value != coerced:
                raise ValueError(value)
            return coerced
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{experiment}: parameter {key} expects {type(default).__name__}, got {value!r}")


def load_config_file(path: Path) -> Dict[str, Any]:
    """Load a flat JSON object of parameter overrides."""
    try:
        with open(path, 'r') as f:
            settings = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config file {path}: {e}")
    if not isinstance(settings, dict) or any(isinstance(v, (dict, list)) for v in settings.values()):
        raise UsageError(f"config file {path} must hold a flat key/value object")
    return settings


def parse_param(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects key=value, got {text!r}")
    return key.strip(), value.strip()


def build_config(experiment: str, seed: int, out: Path,
                 overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults for ``experiment`` merged with ``overrides``; unknown ids or keys are usage errors."""
    if experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    params = dict(EXPERIMENT_DEFAULTS[experiment])
    for key, value in (overrides or {}).items():
        if key not in params:
            raise UsageError(f"{experiment}: unknown parameter {key!r} (known: {', '.join(sorted(params))})")
        params[key] = _coerce(experiment, key, value)
    for key, value in params.items():
        if isinstance(value, int) and value < 0:
            raise UsageError(f"{experiment}: parameter {key} must be nonnegative")
    if "delta" in params:
        if experiment in POSITIVE_DELTA and not 0 < params["delta"] < 1:
            raise UsageError(f"{experiment}: delta must lie in (0, 1)")
        if not 0 <= params["delta"] < 1:
            raise UsageError(f"{experiment}: delta must lie in [0, 1)")
    if "epsilon" in params and not 0 < params["epsilon"] < 1:
        raise UsageError(f"{experiment}: epsilon must lie in (0, 1)")
    return ExperimentConfig(experiment=experiment, seed=int(seed), out=Path(out), params=params)


# ---------------------------------------------------------------------------
# Running and writing
# ---------------------------------------------------------------------------

def _run_instance(cfg: ExperimentConfig, instance: int, run_log: Optional[RunLogger]) -> List[ResultRow]:
    rows = RowBuilder(cfg.experiment, instance, cfg.seed)
    rng = instance_rng(cfg.seed, cfg.experiment, instance)
    try:
        EXPERIMENTS[cfg.experiment].worker(cfg.params, instance, rows, rng)
    except HypothesisViolation as e:
        logger.info(f"{cfg.experiment} instance {instance} rejected: {e}")
        rows.info("rejected", 1.0)
        if run_log:
            run_log.log_instance_error(cfg.experiment, instance, "rejected", e)
    except OUT_OF_REGIME as e:
        logger.warning(f"{cfg.experiment} instance {instance} out of regime: {e}")
        rows.stat("out_of_regime", 1.0, 0.0, False)
        if run_log:
            run_log.log_instance_error(cfg.experiment, instance, "out_of_regime", e)
    except SimulationError as e:
        # Contract and resource failures are bugs, so they fail a hard check
        logger.error(f"{cfg.experiment} instance {instance} failed: {type(e).__name__}: {e}")
        rows.eq("simulation_error", 1.0, 0.0)
        if run_log:
            run_log.log_instance_error(cfg.experiment, instance, "error", e)
    return rows.rows


async def arun_experiment(cfg: ExperimentConfig, run_log: Optional[RunLogger] = None) -> List[ResultRow]:
    """Run every instance concurrently and write the sorted result table to ``cfg.out``."""
    experiment = EXPERIMENTS[cfg.experiment]
    count = experiment.instances(cfg.params)
    logger.info(f"Running {cfg.experiment}: {count} instances, seed {cfg.seed}")
    if run_log:
        run_log.log_start(cfg.experiment, cfg.seed, cfg.params)

    semaphore = asyncio.Semaphore(WORKERS)

    async def one(instance: int) -> List[ResultRow]:
        async with semaphore:
            return await asyncio.to_thread(_run_instance, cfg, instance, run_log)

    per_instance = await asyncio.gather(*(one(i) for i in range(count)))
    rows = [row for instance_rows in per_instance for row in instance_rows]
    rows.sort(key=lambda row: row.instance)
    write_table(cfg.out, rows)

    if run_log:
        for row in rows:
            if not row.passed:
                run_log.log_failed_check(row.experiment, row.instance, row.metric, row.measured, row.bound)
        summary = summarize(cfg.experiment, rows, cfg.success_fraction)
        run_log.log_end(cfg.experiment, len(rows), len(summary.failures), summary.passed)
    return rows


def run_experiment(cfg: ExperimentConfig, run_log: Optional[RunLogger] = None) -> List[ResultRow]:
    return asyncio.run(arun_experiment(cfg, run_log))


def write_table(path: Path, rows: List[ResultRow]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(row.as_record() for row in rows)


def read_table(path: Path) -> List[ResultRow]:
    with open(path, 'r', newline='', encoding='utf-8') as f:
        return [ResultRow(r["experiment"], int(r["instance"]), int(r["seed"]), r["metric"], r["check"],
                          float(r["measured"]), float(r["bound"]), r["passed"] == "1")
                for r in csv.DictReader(f)]


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSummary:
    experiment: str
    rows: int
    checks: int
    failures: List[ResultRow]
    stat_rows: int
    stat_passed: int
    required_fraction: float

    @property
    def stat_fraction(self) -> float:
        return self.stat_passed / self.stat_rows if self.stat_rows else 1.0

    @property
    def passed(self) -> bool:
        return not self.failures and self.stat_fraction >= self.required_fraction


def summarize(experiment: str, rows: List[ResultRow], required_fraction: float = 1.0) -> ExperimentSummary:
    """Hard checks must all pass; statistical rows must pass in at least ``required_fraction``."""
    hard = [row for row in rows if row.check in ("eq", "le", "ge")]
    stats = [row for row in rows if row.check == "stat"]
    return ExperimentSummary(
        experiment=experiment,
        rows=len(rows),
        checks=len(hard),
        failures=[row for row in hard if not row.passed],
        stat_rows=len(stats),
        stat_passed=sum(row.passed for row in stats),
        required_fraction=required_fraction,
    )


def emit_summary(tables: Dict[str, List[ResultRow]], stem: Path,
                 required_fractions: Optional[Dict[str, float]] = None) -> List[ExperimentSummary]:
    """Write ``<stem>.summary.csv`` and ``<stem>.plot.csv`` and report every failing check."""
    required_fractions = required_fractions or {}
    summaries = [summarize(name, rows, required_fractions.get(name, 1.0)) for name, rows in sorted(tables.items())]

    stem.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{stem}{SUMMARY_SUFFIX}", 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["experiment", "rows", "checks", "failures", "stat_rows", "stat_pass_fraction",
                         "required_fraction", "passed"])
        for s in summaries:
            writer.writerow([s.experiment, s.rows, s.checks, len(s.failures), s.stat_rows,
                             format_number(s.stat_fraction), format_number(s.required_fraction),
                             "1" if s.passed else "0"])

    with open(f"{stem}{PLOT_SUFFIX}", 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x", "y", "series"])
        for name, rows in sorted(tables.items()):
            for row in rows:
                if math.isfinite(row.measured):
                    writer.writerow([row.instance, format_number(row.measured), f"{name}:{row.metric}"])

    for s in summaries:
        if s.passed:
            logger.info(f"{s.experiment}: PASS ({s.checks} checks, stat pass {s.stat_fraction:.2f})")
            continue
        if s.stat_fraction < s.required_fraction:
            logger.error(f"{s.experiment}: FAIL (stat pass {s.stat_fraction:.2f} < {s.required_fraction:.2f})")
        if s.failures:
            logger.error(f"{s.experiment}: FAIL ({len(s.failures)} failed checks)")
        for row in s.failures:
            logger.error(f"  {row.experiment} instance {row.instance}: {row.metric} "
                         f"measured {format_number(row.measured)} vs bound {format_number(row.bound)}")
    return summaries


def print_summary(summaries: List[ExperimentSummary]) -> None:
    print("=" * 80)
    for s in summaries:
        mark = "✅ PASS" if s.passed else "❌ FAIL"
        line = f"{mark}  {s.experiment:<15} {s.checks:>6} checks, {len(s.failures)} failed"
        if s.stat_rows:
            line += f", statistical {s.stat_passed}/{s.stat_rows} (need {s.required_fraction:.0%})"
        print(line)
        for row in s.failures:
            print(f"     instance {row.instance}: {row.metric} measured {format_number(row.measured)}"
                  f" vs bound {format_number(row.bound)}")
    print("=" * 80)
