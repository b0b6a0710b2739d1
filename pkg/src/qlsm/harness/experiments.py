"""Experiment drivers: pricing runs against the exact oracle, cost-scaling
studies, and the bound-validation suite. Reports are deterministic given
(config, seed) and serialize to JSON plus flat CSV tables."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from ..basis import (gbm_tail_bound, hermite, hermite_tail_bound,
                     vandermonde_gram, vandermonde_sigma_min_bound)
from ..chain import enumerate_paths
from ..dp import (CoefficientRule, continuation_values, exact_approximation_error,
                  optimal_stopping_times, payoff_at_times, snell_envelope,
                  weighted_l2_norm)
from ..errors import CapExceeded, ConfigError
from ..lsm_classical import choose_sample_count, classical_cost_units, run_classical_lsm
from ..lsm_quantum import run_quantum_lsm
from ..qsim.fixed_point import FixedPointFormat
from .config import ExperimentConfig


@dataclass(eq=False)
class ExperimentReport:
    """One experiment's outputs: raw per-trial rows plus derived summaries."""

    kind: str
    config: ExperimentConfig
    exact_value: float | None = None
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        return {
            "kind": self.kind,
            "config": json.loads(self.config.to_json()),
            "exact_value": self.exact_value,
            "rows": self.rows,
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, indent=2)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / f"{self.kind}.json"
        csv_path = out / f"{self.kind}.csv"
        json_path.write_text(self.to_json())
        with csv_path.open("w", newline="") as fh:
            if self.rows:
                fields = sorted({k for row in self.rows for k in row})
                writer = csv.DictWriter(fh, fieldnames=fields, restval="")
                writer.writeheader()
                for row in self.rows:
                    writer.writerow(row)
        return json_path, csv_path


def _trial_seeds(base_seed: int, count: int) -> list:
    return list(np.random.SeedSequence(base_seed).spawn(count))


def run_price(config: ExperimentConfig) -> ExperimentReport:
    """Price with the selected algorithm(s); compare to the exact oracle."""
    config.validate()
    chain = config.build_chain()
    payoff = config.build_payoff()
    basis = config.build_basis()
    report = ExperimentReport(kind="price", config=config)

    oracle_value = None
    try:
        table = snell_envelope(chain, payoff)
        oracle_value = table.value0
    except CapExceeded:
        table = None
    report.exact_value = oracle_value

    if config.algorithm == "oracle":
        if table is None:
            raise ConfigError("oracle run needs the chain under the enumeration cap")
        report.summary = {
            "value": table.value0,
            "continuation0": table.continuation0,
            "per_step_values": [v.tolist() for v in table.values],
        }
        return report

    seeds = _trial_seeds(config.seed, config.trials)
    weights = config.cost_weights()
    failures = {"classical": 0, "quantum": 0}
    for trial, seed in enumerate(seeds):
        if config.algorithm in ("classical", "both"):
            n_paths = config.path_count or choose_sample_count(
                basis.size, config.epsilon, config.delta)
            run = run_classical_lsm(chain, payoff, basis, n_paths, seed)
            row = {
                "trial": trial, "algorithm": "classical", "estimate": run.estimate,
                "cost_units": classical_cost_units(
                    run, weights.sample_step, weights.payoff_query, weights.basis_query),
                "paths": n_paths,
            }
            if oracle_value is not None:
                row["abs_error"] = abs(run.estimate - oracle_value)
                failures["classical"] += row["abs_error"] > config.epsilon
            report.rows.append(row)
        if config.algorithm in ("quantum", "both"):
            run = run_quantum_lsm(
                chain, payoff, basis, config.epsilon, config.delta,
                sigma_min_lower=config.sigma_min_lower, seed=seed,
                sigma_min_oracle=config.sigma_min_oracle, weights=weights)
            row = {
                "trial": trial, "algorithm": "quantum", "estimate": run.estimate,
                "cost_units": run.ledger.total_units(chain.horizon, weights),
                "grover": run.ledger.grover_applications,
            }
            if oracle_value is not None:
                row["abs_error"] = abs(run.estimate - oracle_value)
                failures["quantum"] += row["abs_error"] > config.epsilon
            report.rows.append(row)

    for algo in ("classical", "quantum"):
        rows = [r for r in report.rows if r["algorithm"] == algo]
        if rows:
            ests = np.array([r["estimate"] for r in rows])
            report.summary[algo] = {
                "mean_estimate": float(ests.mean()),
                "std_estimate": float(ests.std()),
                "mean_cost_units": float(np.mean([r["cost_units"] for r in rows])),
                "exceed_epsilon_rate": failures[algo] / len(rows)
                if oracle_value is not None else None,
            }
    if chain.diagnostics is not None:
        report.summary["discretization"] = [
            {"step": d.step, "mean_error": d.mean_error,
             "variance_error": d.variance_error, "dropped_mass": d.dropped_mass,
             "tolerance": d.tolerance}
            for d in chain.diagnostics
        ]
    return report


def _fit_slope(log_x: np.ndarray, log_y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope with a two-sigma half-width."""
    coeffs, residuals, *_ = np.polyfit(log_x, log_y, 1, full=True)
    slope = float(coeffs[0])
    n = len(log_x)
    if n <= 2 or not len(residuals):
        return slope, 0.0
    var = float(residuals[0]) / (n - 2)
    spread = float(np.sum((log_x - log_x.mean()) ** 2))
    return slope, 2.0 * math.sqrt(var / spread)


def run_scaling(config: ExperimentConfig, epsilon_grid: list[float]) -> ExperimentReport:
    """Cost-versus-accuracy study for both algorithms over an epsilon grid."""
    config.validate()
    if len(epsilon_grid) < 4:
        raise ConfigError("epsilon grid needs at least 4 points")
    chain = config.build_chain()
    payoff = config.build_payoff()
    basis = config.build_basis()
    weights = config.cost_weights()
    from ..lsm_quantum import oracle_sigma_min

    sigma_min = (config.sigma_min_lower if config.sigma_min_lower is not None
                 else oracle_sigma_min(basis, chain))
    for eps in epsilon_grid:
        if eps > sigma_min / 2.0:
            raise ConfigError(
                f"epsilon {eps} exceeds sigma_min/2 = {sigma_min / 2.0}")

    report = ExperimentReport(kind="scaling", config=config)
    table = snell_envelope(chain, payoff)
    report.exact_value = table.value0
    seeds = _trial_seeds(config.seed, 2 * len(epsilon_grid))
    q_costs, c_costs = [], []
    for i, eps in enumerate(sorted(epsilon_grid, reverse=True)):
        qrun = run_quantum_lsm(chain, payoff, basis, eps, config.delta,
                               sigma_min_lower=sigma_min, seed=seeds[2 * i],
                               weights=weights)
        n_paths = choose_sample_count(basis.size, eps, config.delta)
        crun = run_classical_lsm(chain, payoff, basis, n_paths, seeds[2 * i + 1])
        q_cost = qrun.ledger.total_units(chain.horizon, weights)
        c_cost = classical_cost_units(crun, weights.sample_step,
                                      weights.payoff_query, weights.basis_query)
        q_costs.append(q_cost)
        c_costs.append(c_cost)
        report.rows.append({
            "epsilon": eps, "quantum_cost": q_cost, "classical_cost": c_cost,
            "classical_paths": n_paths,
            "quantum_estimate": qrun.estimate, "classical_estimate": crun.estimate,
            "cost_ratio": c_cost / q_cost,
        })
    log_inv_eps = np.log([1.0 / r["epsilon"] for r in report.rows])
    q_slope, q_ci = _fit_slope(log_inv_eps, np.log(q_costs))
    c_slope, c_ci = _fit_slope(log_inv_eps, np.log(c_costs))
    ratios = [r["cost_ratio"] for r in report.rows]
    report.summary = {
        "quantum_slope": q_slope, "quantum_slope_halfwidth": q_ci,
        "classical_slope": c_slope, "classical_slope_halfwidth": c_ci,
        "ratio_monotone_increasing": all(a < b for a, b in zip(ratios, ratios[1:])),
    }
    return report


# -- bound validation ---------------------------------------------------------


def _check(name: str, lhs: float, rhs: float, note: str = "") -> dict:
    return {"check": name, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
            "passed": bool(lhs <= rhs), "note": note}


def _hermite_weighted_integral(k: int, l: int, lower: float) -> float:
    val, _ = quad(lambda x: hermite(k, x) * hermite(l, x) * math.exp(-x * x),
                  lower, np.inf, limit=200)
    return val


def _gauss_hermite_gram(k: int, l: int) -> float:
    nodes, weights = np.polynomial.hermite.hermgauss(96)
    return float(np.sum(weights * hermite(k, nodes) * hermite(l, nodes))
                 / math.sqrt(math.pi))


def _lognormal_moment(order: int, t: float) -> float:
    nodes, weights = np.polynomial.hermite.hermgauss(96)
    # E[x^order] with x = exp(sqrt(2t) y - t/2) under the e^{-y^2} weight.
    return float(np.sum(weights * np.exp(order * (math.sqrt(2 * t) * nodes - t / 2)))
                 / math.sqrt(math.pi))


def _lognormal_tail_integral(k: int, lam: float, t: float) -> float:
    val, _ = quad(lambda u: math.exp(k * u - (u + t / 2) ** 2 / (2 * t))
                  / math.sqrt(2 * math.pi * t),
                  math.log(lam), np.inf, limit=200)
    return val


def validate_bounds(config: ExperimentConfig) -> ExperimentReport:
    """Numerical audit of every closed-form bound the package relies on."""
    config.validate()
    report = ExperimentReport(kind="bounds", config=config)
    rows = report.rows
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))

    # Orthonormality of the Hermite family under the Gaussian weight.
    worst = 0.0
    for k in range(7):
        for l in range(k + 1):
            target = math.factorial(k) * 2**k if k == l else 0.0
            got = _gauss_hermite_gram(k, l)
            scale = math.sqrt((math.factorial(k) * 2**k) * (math.factorial(l) * 2**l))
            worst = max(worst, abs(got - target) / scale)
    rows.append(_check("hermite-orthonormality(normalized)", worst, 1e-8))

    # One-sided Hermite tail integrals against both bound forms. The exact
    # form is tight at k=l=0, so the comparison carries the quadrature
    # oracle's own tolerance.
    slack = 1e-7
    for lam in (2.0, 4.0, 6.0):
        worst_exact, worst_simple, worst_order = -math.inf, -math.inf, -math.inf
        for k in range(7):
            for l in range(k + 1):
                integral = abs(_hermite_weighted_integral(k, l, lam))
                exact_form, simple_form = hermite_tail_bound(k, l, lam)
                worst_exact = max(worst_exact, integral - exact_form * (1 + slack))
                worst_simple = max(worst_simple, integral - simple_form * (1 + slack))
                worst_order = max(worst_order, exact_form - simple_form)
        rows.append(_check(f"hermite-tail<=exact-form(lam={lam})", worst_exact, 1e-30,
                           note="quadrature slack 1e-7 relative"))
        rows.append(_check(f"hermite-tail<=simplified(lam={lam})", worst_simple, 1e-30,
                           note="quadrature slack 1e-7 relative"))
        rows.append(_check(f"exact-form<=simplified(lam={lam})", worst_order, 0.0))

    # Vandermonde-power sigma_min bounds against dense SVD.
    for t in (0.5, 1.0):
        for d in (1, 2):
            for q in (1, 2, 3, 4):
                mat = vandermonde_gram(q, d, t)
                smin = float(np.linalg.svd(mat, compute_uv=False)[-1])
                sharp, simple = vandermonde_sigma_min_bound(q, d, t)
                rows.append(_check(f"sigma-min-sharp(q={q},d={d},t={t})",
                                   1.0 / smin, sharp))
                rows.append(_check(f"sigma-min-simple(q={q},d={d},t={t})",
                                   1.0 / smin, simple))

    # Log-normal tail bound in its validity regime.
    for t in (0.5, 1.0):
        for k in range(5):
            for factor in (1.05, math.e):
                lam = math.exp(t * (k - 0.5)) * factor
                integral = _lognormal_tail_integral(k, lam, t)
                bound = gbm_tail_bound(k, lam, t)
                rows.append(_check(f"lognormal-tail(k={k},t={t},f={factor:.2f})",
                                   integral, bound))

    # Closed-form Gram entries against quadrature.
    for t in (0.5, 1.0):
        worst_rel = 0.0
        for k in range(4):
            for l in range(4):
                target = math.exp(k * l * t)
                shift = math.exp(-(k * (k - 1) + l * (l - 1)) * t / 2.0)
                got = shift * _lognormal_moment(k + l, t)
                worst_rel = max(worst_rel, abs(got - target) / target)
        rows.append(_check(f"gbm-gram-quadrature(t={t})", worst_rel, 1e-6))

    # Linear-system sensitivity bound on random perturbed systems.
    sens_fail = 0
    for _ in range(1000):
        m = int(rng.integers(2, 6))
        mat = rng.normal(size=(m, m))
        smin = float(np.linalg.svd(mat, compute_uv=False)[-1])
        if smin < 1e-6:
            continue
        vec = rng.normal(size=m)
        if np.linalg.norm(vec) < 1e-9:
            continue
        eps_a = rng.uniform(0, smin / 2.0)
        eps_b = rng.uniform(0, 1.0)
        d_mat = rng.normal(size=(m, m))
        d_mat *= eps_a / max(np.linalg.norm(d_mat, 2), 1e-300)
        d_vec = rng.normal(size=m)
        d_vec *= eps_b / max(np.linalg.norm(d_vec), 1e-300)
        x = np.linalg.solve(mat, vec)
        x_t = np.linalg.solve(mat + d_mat, vec + d_vec)
        lhs = float(np.linalg.norm(x - x_t))
        rhs = 2.0 / smin * (eps_a * np.linalg.norm(vec) / smin + eps_b)
        sens_fail += lhs > rhs
    rows.append(_check("sensitivity-bound-failures", float(sens_fail), 0.0))

    # Error-propagation inequalities for approximate stopping rules.
    propagation_fail = _stopping_error_propagation_failures(config, rng, instances=20)
    rows.append(_check("stopping-error-propagation-failures", float(propagation_fail), 0.0))

    # Instantiated end-to-end bounds on the configured instance.
    rows.extend(_instantiated_error_bound_checks(config))

    report.summary = {
        "all_passed": all(r["passed"] for r in rows),
        "failed": [r["check"] for r in rows if not r["passed"]],
    }
    return report


def _random_small_chain(rng: np.random.Generator, horizon: int, n_states: int):
    from ..chain import MarkovChainSpec

    grids = tuple(np.sort(rng.uniform(-1.5, 1.5, size=(n_states, 1)), axis=0)
                  for _ in range(horizon))
    init = rng.dirichlet(np.ones(n_states))
    mats = tuple(np.stack([rng.dirichlet(np.ones(n_states)) for _ in range(n_states)])
                 for _ in range(horizon - 1))
    return MarkovChainSpec(dimension=1, horizon=horizon, initial_state=[0.0],
                           grids=grids, initial_distribution=init, transitions=mats)


def _stopping_error_propagation_failures(config: ExperimentConfig,
                                         rng: np.random.Generator,
                                         instances: int = 20) -> int:
    from ..basis import monomial_basis
    from ..payoff import table_payoff

    failures = 0
    for _ in range(instances):
        horizon = int(rng.integers(2, 5))
        n_states = int(rng.integers(2, 5))
        chain = _random_small_chain(rng, horizon, n_states)
        tables = {t: rng.uniform(0, 1, size=n_states) for t in range(1, horizon + 1)}
        payoff = table_payoff(tables, start_value=float(rng.uniform(0, 1)))
        basis = monomial_basis(1, 1, horizon)
        coeffs = {t: rng.normal(scale=0.7, size=basis.size)
                  for t in range(1, horizon)}
        rule = CoefficientRule(basis=basis, coefficients=coeffs)
        fitted_gap = {}
        for k in range(1, horizon):
            approx = basis.evaluate(k, chain.grid(k)) @ coeffs[k]
            target = continuation_values(chain, payoff, rule, k)
            fitted_gap[k] = weighted_l2_norm(chain, k, approx - target)
        for t in range(1, horizon):
            exact_target = continuation_values(chain, payoff, "optimal", t)
            approx = basis.evaluate(t, chain.grid(t)) @ coeffs[t]
            lhs1 = weighted_l2_norm(chain, t, approx - exact_target)
            rhs1 = 2.0 * sum(fitted_gap[k] for k in range(t, horizon))
            approx_target = continuation_values(chain, payoff, rule, t)
            lhs2 = weighted_l2_norm(chain, t, approx_target - exact_target)
            rhs2 = 2.0 * sum(fitted_gap[k] for k in range(t + 1, horizon))
            failures += (lhs1 > rhs1 + 1e-12) + (lhs2 > rhs2 + 1e-12)
    return failures


def _instantiated_error_bound_checks(config: ExperimentConfig) -> list[dict]:
    from ..basis import l2_norm_bound
    from ..lsm_quantum import oracle_sigma_min

    rows = []
    chain = config.build_chain()
    payoff = config.build_payoff()
    basis = config.build_basis()
    try:
        table = snell_envelope(chain, payoff)
    except CapExceeded:
        return rows
    horizon, m = chain.horizon, basis.size
    bound_r = payoff.bound_for(chain)
    ell = l2_norm_bound(basis, chain) if horizon > 1 else 1.0
    sigma_min = oracle_sigma_min(basis, chain) if horizon > 1 else 1.0
    eps = min(config.epsilon, sigma_min / 2.0)

    approx_err = 0.0
    for t in range(1, horizon):
        approx_err = max(approx_err, exact_approximation_error(chain, payoff, basis, t))

    n_paths = choose_sample_count(m, eps, config.delta)
    run = run_classical_lsm(chain, payoff, basis, n_paths,
                            np.random.SeedSequence(config.seed))
    rhs = 5.0**horizon * (4 * eps * m * bound_r * ell**2 / sigma_min**2 + approx_err)
    rows.append(_check("classical-error-bound(single-run)",
                       abs(run.estimate - table.value0), rhs,
                       note=f"failure budget {6 * m * m * math.exp(-2 * n_paths * eps**2 / m**2):.3g}"))

    qrun = run_quantum_lsm(chain, payoff, basis, eps, config.delta,
                           sigma_min_lower=sigma_min, seed=config.seed,
                           weights=config.cost_weights())
    fmt = FixedPointFormat()
    rule = CoefficientRule(basis=basis, coefficients=qrun.coefficients,
                           quantize=fmt.quantize)
    tail = 0.0
    for t in range(1, horizon):
        tail += exact_approximation_error(chain, payoff, basis, t, rule=rule)
    rhs_q = 8 * horizon * eps * m * bound_r * ell**2 / sigma_min**2 + 2 * tail
    rows.append(_check("quantum-error-bound(single-run)",
                       abs(qrun.estimate - table.value0), rhs_q,
                       note=f"failure budget {config.delta}"))
    return rows


def dump_oracle(config: ExperimentConfig) -> ExperimentReport:
    """Exact value table and optimal stop times for the configured instance."""
    config.validate()
    chain = config.build_chain()
    payoff = config.build_payoff()
    table = snell_envelope(chain, payoff)
    ensemble = enumerate_paths(chain)
    times = optimal_stopping_times(table, ensemble)
    collected = payoff_at_times(chain, payoff, ensemble, times[:, 0])
    report = ExperimentReport(kind="oracle", config=config, exact_value=table.value0)
    report.rows = [
        {"path": i, "probability": float(ensemble.probabilities[i]),
         "stop_time": int(times[i, 0]), "collected_payoff": float(collected[i])}
        for i in range(len(ensemble))
    ]
    report.summary = {
        "value": table.value0,
        "continuation0": table.continuation0,
        "expected_collected": float(np.sum(ensemble.probabilities * collected)),
        "per_step_values": [v.tolist() for v in table.values],
        "per_step_continuation": [v.tolist() for v in table.continuation],
    }
    return report
