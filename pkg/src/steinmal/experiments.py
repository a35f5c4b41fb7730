"""End-to-end experiment drivers behind the CLI.

Each driver runs one application, emits a CSV of rows plus a JSON summary
(provenance, constants, rate fits), and optionally renders SVG figures next
to them.  Outputs carry no wall-clock fields: identical configurations and
seeds give byte-identical files.

Rate fits quoted in the JSON are recomputed from the emitted CSV through an
independent reader path and must match the in-memory fit to 1e-9, guarding
the serialization round trip.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, chaos
from .chaos import ChaosVariable, build_gamma_kernels
from .estimators import (
    MehlerQuadrature,
    as_functional,
    validate_functional,
    cross_term,
    discrepancy_term,
    lognormal_coordinate_cross_term,
    lognormal_functional,
    lognormal_limit_constant,
    lognormal_swapped_bound,
    ou_smoothed_gradient,
    uniform_pair,
    uniform_pair_cross_term,
)
from .measures import GridSpec, TargetMeasure, measure_from_config, resolve_measure
from .reporting import write_csv, write_json
from .rng import GaussianSampler, chunk_rng
from .stein import (
    SteinSolution,
    make_test_family,
    median_prefactor,
    validate_test_function,
    verify_solution_bounds,
)
from .transport import SampleCloud, rate_fit, w1_exact

__all__ = ["ExperimentConfig", "config_from_file", "run_measure_report",
           "run_stein_verify", "run_gamma2d", "run_uniform", "run_lognormal",
           "run_selftest"]


@dataclass
class ExperimentConfig:
    """Schedules, sample sizes and output policy for one experiment run.

    Seeds are always explicit; there is no wall-clock default anywhere.
    """

    experiment: str = ""
    seed: int = 20240
    samples: int = 100_000
    disc_samples: int = 20_000
    w1_samples: int = 1000
    w1_reps: int = 8
    n_schedule: Optional[tuple] = None  # per-experiment default when unset
    m_rule: str = "sqrt"
    m_schedule: Optional[tuple] = None
    rho_schedule: tuple = (0.4, 0.2, 0.1, 0.05)
    i_schedule: tuple = (1, 4, 16)
    grid_points: int = 1023
    mehler_nodes: int = 32
    mehler_copies: int = 64
    measure: str = "uniform01"
    measure_config: Optional[str] = None
    out_dir: str = "."
    plots: bool = True
    quick: bool = False

    GAMMA_DEFAULT_N = (50, 100, 200, 400)
    LOGNORMAL_DEFAULT_N = (500, 1000, 2000)

    def __post_init__(self):
        if self.n_schedule is not None and not self.n_schedule:
            raise ValueError("n_schedule must be non-empty when given")
        if not self.rho_schedule or not self.i_schedule:
            raise ValueError("schedules must be non-empty")
        if self.m_schedule is not None and self.n_schedule is not None and \
                len(self.m_schedule) != len(self.n_schedule):
            raise ValueError("m_schedule must align with n_schedule")

    def sizes_for(self, experiment: str) -> tuple:
        if self.n_schedule is not None:
            return tuple(self.n_schedule)
        return (self.LOGNORMAL_DEFAULT_N if experiment == "lognormal"
                else self.GAMMA_DEFAULT_N)

    def effective(self) -> "ExperimentConfig":
        """Quick mode shrinks sample sizes and schedules for smoke runs."""
        if not self.quick:
            return self
        schedule = self.n_schedule
        if schedule is not None:
            schedule = tuple(schedule[:3])
        return replace(
            self,
            samples=max(2000, self.samples // 20),
            disc_samples=max(1000, self.disc_samples // 10),
            w1_samples=min(self.w1_samples, 256),
            w1_reps=min(self.w1_reps, 3),
            n_schedule=schedule,
            rho_schedule=tuple(self.rho_schedule[:3]),
            i_schedule=tuple(self.i_schedule[:2]),
            grid_points=min(self.grid_points, 255),
        )

    def mehler(self) -> MehlerQuadrature:
        return MehlerQuadrature.gauss_legendre(self.mehler_nodes,
                                               self.mehler_copies)

    def overlap_sizes(self, sizes: tuple) -> tuple:
        if self.m_schedule is not None:
            return tuple(self.m_schedule)
        if self.m_rule == "sqrt":
            return tuple(int(math.isqrt(n)) for n in sizes)
        if self.m_rule == "full":
            return tuple(sizes)
        raise ValueError(f"unknown overlap rule {self.m_rule!r}")

    def resolve_target(self) -> TargetMeasure:
        if self.measure_config:
            return measure_from_config(self.measure_config)
        return resolve_measure(self.measure)

    def provenance(self) -> dict:
        # deliberately excludes the worker count: execution layout must not
        # leak into outputs, which are byte-identical across worker counts
        return {
            "version": __version__,
            "seed": self.seed,
            "config": {
                "experiment": self.experiment,
                "samples": self.samples,
                "disc_samples": self.disc_samples,
                "w1_samples": self.w1_samples,
                "w1_reps": self.w1_reps,
                "n_schedule": (list(self.n_schedule)
                               if self.n_schedule is not None else None),
                "m_rule": self.m_rule,
                "m_schedule": list(self.m_schedule) if self.m_schedule else None,
                "rho_schedule": list(self.rho_schedule),
                "i_schedule": list(self.i_schedule),
                "grid_points": self.grid_points,
                "mehler_nodes": self.mehler_nodes,
                "mehler_copies": self.mehler_copies,
                "measure": self.measure,
                "quick": self.quick,
            },
        }


_CONFIG_TYPES = {
    "experiment": str, "seed": int, "samples": int, "disc_samples": int,
    "w1_samples": int, "w1_reps": int, "m_rule": str, "grid_points": int,
    "mehler_nodes": int, "mehler_copies": int, "measure": str,
    "measure_config": str, "out_dir": str, "plots": bool, "quick": bool,
}
_CONFIG_TUPLES = {"n_schedule": int, "m_schedule": int, "i_schedule": int,
                  "rho_schedule": float}


def config_from_file(path) -> ExperimentConfig:
    """Flat `key = value` file; lists are comma separated, '#' comments."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lower()
            if key in _CONFIG_TYPES:
                typ = _CONFIG_TYPES[key]
                if typ is bool:
                    values[key] = value.lower() in ("1", "true", "yes", "on")
                else:
                    values[key] = typ(value)
            elif key in _CONFIG_TUPLES:
                typ = _CONFIG_TUPLES[key]
                values[key] = tuple(typ(v.strip()) for v in value.split(","))
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return ExperimentConfig(**values)


def _read_csv_column(path, column: str) -> list:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [float(row[column]) for row in reader]


def _fit_payload(fit) -> dict:
    return {"slope": fit.slope, "intercept": fit.intercept,
            "residual_rms": fit.residual_rms, "points": fit.points}


def _reader_path_fit_check(path, x_column, y_column, reference) -> dict:
    """Recompute a rate fit from the CSV text and compare to the in-memory
    fit; mismatch means the serialization lost precision."""
    xs = _read_csv_column(path, x_column)
    ys = _read_csv_column(path, y_column)
    refit = rate_fit(list(zip(xs, ys)))
    delta = max(abs(refit.slope - reference.slope),
                abs(refit.intercept - reference.intercept))
    if delta > 1e-9:
        raise AssertionError(
            f"rate fit recomputed from {path} deviates by {delta!r}")
    return {"column": y_column, "max_deviation": delta, "status": "pass"}


# ----------------------------------------------------------------------
# measure tabulation and stein verification
# ----------------------------------------------------------------------
def run_measure_report(cfg: ExperimentConfig) -> dict:
    cfg = cfg.effective()
    measure = cfg.resolve_target()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = GridSpec(num_points=min(cfg.grid_points, 2047))
    levels = grid.quantile_levels()
    xs = np.unique(measure.quantile(levels))
    a_vals = measure.diffusion_on_grid(xs)
    s_vals = measure.stein_factor_on_grid(xs)
    p_vals = measure.pdf(xs)
    f_vals = measure.cdf(xs)
    sup_s, arg_s = measure.sup_stein_factor(GridSpec(num_points=cfg.grid_points))
    prefactor = median_prefactor(measure)
    conditions = measure.edge_condition_report()

    tag = measure.name.replace(":", "_").replace(",", "_")
    csv_path = out / f"measure_{tag}.csv"
    write_csv(csv_path, ["x", "pdf", "cdf", "a", "stein_factor"],
              list(zip(xs, p_vals, f_vals, a_vals, s_vals)))
    payload = {
        "measure": measure.name,
        "mean": measure.mean,
        "median": measure.median,
        "sup_stein_factor": sup_s,
        "sup_stein_factor_at": arg_s,
        "median_prefactor": prefactor,
        "edge_conditions": {
            "verdicts": conditions.verdicts,
            "lower_liminf": conditions.lower_liminf,
            "upper_liminf": conditions.upper_liminf,
            "lower_slope": conditions.lower_slope,
            "upper_slope": conditions.upper_slope,
            "ratio_extremes": list(conditions.ratio_extremes),
            "note": conditions.note,
        },
        "provenance": cfg.provenance(),
    }
    write_json(out / f"measure_{tag}.json", payload)
    if cfg.plots:
        from .plots import save_measure_profile
        save_measure_profile(out / f"measure_{tag}.svg", xs, a_vals, s_vals,
                             measure.name)
    return payload


def run_stein_verify(cfg: ExperimentConfig, out_file: Optional[str] = None) -> dict:
    cfg = cfg.effective()
    measure = cfg.resolve_target()
    grid = GridSpec(num_points=cfg.grid_points)
    reports = []
    for tf in make_test_family(measure):
        validate_test_function(tf, measure)
        y_values = [np.zeros(tf.dim_y)]
        if tf.dim_y:
            y_values.append(np.full(tf.dim_y, 0.9 * tf.y_box))
        for rep in verify_solution_bounds(measure, tf, grid, y_values=y_values):
            reports.append(rep.as_dict())
    payload = {
        "measure": measure.name,
        "grid_points": cfg.grid_points,
        "reports": reports,
        "all_passed": all(r["passed"] for r in reports),
        "provenance": cfg.provenance(),
    }
    if out_file:
        Path(out_file).parent.mkdir(parents=True, exist_ok=True)
        write_json(out_file, payload)
    return payload


# ----------------------------------------------------------------------
# application: overlapping second-chaos pair with a Gamma-law target
# ----------------------------------------------------------------------
def _gamma_pair_clouds(n_terms, overlap, n, seed):
    """Paired joint cloud (U, V) and product surrogate (G, V') clouds."""
    ku, kv, dim = build_gamma_kernels(n_terms, overlap)
    u_var = ChaosVariable.pure_second(ku)
    v_var = ChaosVariable.pure_second(kv)
    rng = chunk_rng(seed, 0)
    xi = rng.standard_normal((n, dim))
    joint = np.column_stack([u_var.value(xi), v_var.value(xi)])
    xi2 = rng.standard_normal((n, dim))
    g = rng.standard_normal(n) ** 2 - 1.0
    product = np.column_stack([g, v_var.value(xi2)])
    return joint, product


def run_gamma2d(cfg: ExperimentConfig) -> dict:
    cfg = cfg.effective()
    measure = resolve_measure("centered_gamma")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sup_s, _ = measure.sup_stein_factor(GridSpec(num_points=cfg.grid_points))
    prefactor = median_prefactor(measure)
    sizes = cfg.sizes_for("gamma2d")
    overlaps = cfg.overlap_sizes(sizes)
    rows = []
    w1_budget_ok = cfg.w1_samples <= 4096
    for k, (n_terms, overlap) in enumerate(zip(sizes, overlaps)):
        ku, kv, dim = build_gamma_kernels(n_terms, overlap)
        u_var = ChaosVariable.pure_second(ku)
        v_var = ChaosVariable.pure_second(kv)
        exact_uv = chaos.exact_cross_moment(n_terms, overlap)
        norm_matrix = chaos.contraction_norm_matrix(n_terms, overlap)
        norm_comb = chaos.contraction_norm_combinatorial(n_terms, overlap)
        m2_exact = chaos.gradient_inner_second_moment(n_terms, overlap)
        disc = discrepancy_term(measure, u_var, cfg.samples, cfg.seed + 10 * k)
        cross = cross_term(u_var, v_var, cfg.samples, cfg.seed + 10 * k + 1)
        cross_l2_exact = 0.5 * math.sqrt(m2_exact)
        rhs_l2 = sup_s * disc.config["l2_estimate"] + prefactor * cross_l2_exact
        rhs_l1 = sup_s * disc.estimate + prefactor * cross.estimate
        w1 = w1_base = float("nan")
        one_sided = True
        if w1_budget_ok:
            joint, product = _gamma_pair_clouds(n_terms, overlap,
                                                cfg.w1_samples,
                                                cfg.seed + 10 * k + 2)
            w1 = w1_exact(SampleCloud(joint, "joint"),
                          SampleCloud(product, "product"))
            _, product_b = _gamma_pair_clouds(n_terms, overlap, cfg.w1_samples,
                                              cfg.seed + 10 * k + 3)
            w1_base = w1_exact(SampleCloud(product, "product"),
                               SampleCloud(product_b, "product2"))
            rhs_se = math.hypot(sup_s * disc.config["l2_std_error"],
                                prefactor * cross.config["l2_std_error"])
            one_sided = bool(w1 <= rhs_l2 + 3.0 * rhs_se)
        rows.append({
            "N": n_terms, "m": overlap, "dimension": dim,
            "cross_moment_exact": exact_uv,
            "isometry_inner": chaos.isometry_inner(ku, kv),
            "contraction_norm_matrix": norm_matrix,
            "contraction_norm_combinatorial": norm_comb,
            "contraction_norm_ratio": (norm_comb / norm_matrix
                                       if norm_matrix else float("nan")),
            "second_moment_exact": m2_exact,
            "disc_l1": disc.estimate, "disc_l1_se": disc.std_error,
            "disc_l2": disc.config["l2_estimate"],
            "disc_l2_se": disc.config["l2_std_error"],
            "cross_l1": cross.estimate, "cross_l1_se": cross.std_error,
            "cross_l2": cross.config["l2_estimate"],
            "cross_l2_se": cross.config["l2_std_error"],
            "cross_l2_exact": cross_l2_exact,
            "violation_fraction": disc.config["violation_fraction"],
            "rhs_l1": rhs_l1, "rhs_l2": rhs_l2,
            "m_over_n": overlap / n_terms,
            "w1": w1, "w1_baseline": w1_base,
            "one_sided_pass": one_sided,
        })
    header = list(rows[0].keys())
    csv_path = out / "gamma2d.csv"
    write_csv(csv_path, header, [[row[h] for h in header] for row in rows])

    fits = {}
    checks = []
    if len(rows) >= 3:
        ns = [r["N"] for r in rows]
        disc_fit = rate_fit([(r["N"], r["disc_l1"]) for r in rows])
        cross_fit = rate_fit([(r["N"], r["cross_l2_exact"]) for r in rows])
        mn_fit = rate_fit([(r["N"], r["m_over_n"]) for r in rows])
        fits = {"disc_l1_vs_N": _fit_payload(disc_fit),
                "cross_l2_exact_vs_N": _fit_payload(cross_fit),
                "m_over_n_vs_N": _fit_payload(mn_fit)}
        checks.append(_reader_path_fit_check(csv_path, "N", "disc_l1", disc_fit))
        checks.append(_reader_path_fit_check(csv_path, "N", "cross_l2_exact",
                                             cross_fit))
        if cfg.plots:
            from .plots import save_loglog_plot
            save_loglog_plot(out / "gamma2d_rates.svg", ns, {
                "discrepancy (L1)": [r["disc_l1"] for r in rows],
                "cross term (L2, exact)": [r["cross_l2_exact"] for r in rows],
                "m/N": [r["m_over_n"] for r in rows],
            }, "N", "term size", "overlapping pair: bound terms vs N")
    payload = {
        "experiment": "gamma2d",
        "sup_stein_factor": sup_s,
        "median_prefactor": prefactor,
        "rows": rows,
        "rate_fits": fits,
        "csv_reader_checks": checks,
        "provenance": cfg.provenance(),
    }
    write_json(out / "gamma2d.json", payload)
    return payload


# ----------------------------------------------------------------------
# application: uniform pair with correlation knob
# ----------------------------------------------------------------------
def _uniform_clouds(rho, n, seed):
    rng = chunk_rng(seed, 0)
    root = math.sqrt(1.0 - rho * rho)

    def make(block):
        x = np.exp(-0.5 * (block[:, 0] ** 2 + block[:, 1] ** 2))
        u = rho * block[:, 0] + root * block[:, 2]
        y = np.exp(-0.5 * (u**2 + block[:, 3] ** 2))
        return x, y

    x_j, y_j = make(rng.standard_normal((n, 4)))
    joint = np.column_stack([x_j, y_j])
    x_p, _ = make(rng.standard_normal((n, 4)))
    _, y_p = make(rng.standard_normal((n, 4)))
    product = np.column_stack([x_p, y_p])
    return joint, product


def run_uniform(cfg: ExperimentConfig) -> dict:
    cfg = cfg.effective()
    measure = resolve_measure("uniform01")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sup_s, _ = measure.sup_stein_factor(GridSpec(num_points=cfg.grid_points))
    prefactor = median_prefactor(measure)
    quad = cfg.mehler()
    rows = []
    for k, rho in enumerate(cfg.rho_schedule):
        x_fn, y_fn = uniform_pair(rho)
        if k == 0:
            validate_functional(x_fn, seed=cfg.seed)
            validate_functional(y_fn, seed=cfg.seed)
        disc = discrepancy_term(measure, x_fn, cfg.disc_samples,
                                cfg.seed + 20 * k, quad)
        spec = uniform_pair_cross_term(rho, cfg.samples, cfg.seed + 20 * k + 1)
        generic = cross_term(x_fn, y_fn, cfg.disc_samples,
                             cfg.seed + 20 * k + 2, quad)
        agree_gap = abs(spec.estimate - generic.estimate)
        agree_se = math.hypot(spec.std_error, generic.std_error)
        rhs = sup_s * disc.estimate + prefactor * spec.estimate
        rhs_se = math.hypot(sup_s * disc.std_error,
                            prefactor * spec.std_error)
        w1s, bases = [], []
        for rep in range(cfg.w1_reps):
            joint, product = _uniform_clouds(rho, cfg.w1_samples,
                                             cfg.seed + 20 * k + 100 + rep)
            w1s.append(w1_exact(SampleCloud(joint), SampleCloud(product)))
            _, product_b = _uniform_clouds(rho, cfg.w1_samples,
                                           cfg.seed + 20 * k + 200 + rep)
            bases.append(w1_exact(SampleCloud(product), SampleCloud(product_b)))
        w1 = float(np.mean(w1s))
        w1_se = float(np.std(w1s, ddof=1) / math.sqrt(len(w1s))) \
            if len(w1s) > 1 else 0.0
        base = float(np.mean(bases))
        base_se = float(np.std(bases, ddof=1) / math.sqrt(len(bases))) \
            if len(bases) > 1 else 0.0
        excess = w1 - base
        excess_se = math.hypot(w1_se, base_se)
        rows.append({
            "rho": rho,
            "disc": disc.estimate, "disc_se": disc.std_error,
            "cross_specialized": spec.estimate,
            "cross_specialized_se": spec.std_error,
            "cross_generic": generic.estimate,
            "cross_generic_se": generic.std_error,
            "cross_agreement_gap_se": (agree_gap / agree_se
                                       if agree_se else 0.0),
            "cross_over_rho": (spec.estimate / abs(rho) if rho else 0.0),
            "rhs_l1": rhs, "rhs_l1_se": rhs_se,
            "w1": w1, "w1_se": w1_se,
            "w1_baseline": base, "w1_baseline_se": base_se,
            "w1_excess": excess, "w1_excess_se": excess_se,
            "one_sided_pass": excess <= rhs + 3.0 * math.hypot(rhs_se, excess_se),
        })
    header = list(rows[0].keys())
    csv_path = out / "uniform.csv"
    write_csv(csv_path, header, [[row[h] for h in header] for row in rows])
    fits = {}
    checks = []
    positive = [r for r in rows if r["rho"] > 0]
    if len(positive) >= 3:
        cross_fit = rate_fit([(r["rho"], r["cross_specialized"])
                              for r in positive])
        fits["cross_vs_rho"] = _fit_payload(cross_fit)
        checks.append(_reader_path_fit_check(csv_path, "rho",
                                             "cross_specialized", cross_fit))
    if cfg.plots:
        from .plots import save_line_plot
        rhos = [r["rho"] for r in rows]
        save_line_plot(out / "uniform_distance.svg", rhos, {
            "empirical W1": ([r["w1"] for r in rows],
                             [r["w1_se"] for r in rows]),
            "same-law baseline": ([r["w1_baseline"] for r in rows],
                                  [r["w1_baseline_se"] for r in rows]),
            "bound RHS": [r["rhs_l1"] for r in rows],
        }, "rho", "distance", "uniform pair: distance vs correlation")
    payload = {
        "experiment": "uniform",
        "sup_stein_factor": sup_s,
        "median_prefactor": prefactor,
        "rows": rows,
        "rate_fits": fits,
        "csv_reader_checks": checks,
        "provenance": cfg.provenance(),
    }
    write_json(out / "uniform.json", payload)
    return payload


# ----------------------------------------------------------------------
# application: lognormal limit of exponential chi-square functionals
# ----------------------------------------------------------------------
def run_lognormal(cfg: ExperimentConfig) -> dict:
    cfg = cfg.effective()
    measure = resolve_measure("lognormal01")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sup_s, _ = measure.sup_stein_factor(GridSpec(num_points=cfg.grid_points))
    prefactor = median_prefactor(measure)
    limit_const = lognormal_limit_constant()
    quad = cfg.mehler()
    n_schedule = tuple(sorted(set(cfg.sizes_for("lognormal"))))
    validate_functional(lognormal_functional(min(n_schedule)), seed=cfg.seed)
    disc_cache = {}
    for k, n_terms in enumerate(n_schedule):
        disc_cache[n_terms] = discrepancy_term(
            measure, lognormal_functional(n_terms), cfg.disc_samples,
            cfg.seed + 30 * k, quad)
    cross_cache = {}
    for k, n_terms in enumerate(n_schedule):
        cross_cache[n_terms] = lognormal_coordinate_cross_term(
            n_terms, cfg.samples, cfg.seed + 30 * k + 1,
            cross_check=(n_terms <= 64), cross_check_n=min(cfg.samples, 20000))
    rows = []
    for k, n_terms in enumerate(n_schedule):
        disc = disc_cache[n_terms]
        cross = cross_cache[n_terms]
        scaled = math.sqrt(2.0 * n_terms) * cross.estimate
        for j, i_size in enumerate(cfg.i_schedule):
            if i_size > n_terms:
                continue
            swapped = lognormal_swapped_bound(n_terms, i_size, cfg.samples,
                                              cfg.seed + 30 * k + 2 + j)
            rhs = sup_s * disc.estimate + prefactor * i_size * cross.estimate
            rhs_se = math.hypot(sup_s * disc.std_error,
                                prefactor * i_size * cross.std_error)
            rows.append({
                "N": n_terms, "i_size": i_size,
                "disc": disc.estimate, "disc_se": disc.std_error,
                "cross_per_coord": cross.estimate,
                "cross_per_coord_se": cross.std_error,
                "scaled_cross": scaled,
                "limit_constant": limit_const,
                "scaled_over_limit": scaled / limit_const,
                "total_cross": i_size * cross.estimate,
                "total_cross_se": i_size * cross.std_error,
                "swapped_total": swapped.estimate,
                "swapped_total_se": swapped.std_error,
                "swapped_per_term": swapped.config["per_term"],
                "swapped_per_term_se": swapped.config["per_term_std_error"],
                "rhs_l1": rhs, "rhs_l1_se": rhs_se,
            })
    header = list(rows[0].keys())
    csv_path = out / "lognormal.csv"
    write_csv(csv_path, header, [[row[h] for h in header] for row in rows])
    fits = {}
    checks = []
    if len(n_schedule) >= 3:
        base_rows = [r for r in rows if r["i_size"] == rows[0]["i_size"]]
        cross_fit = rate_fit([(r["N"], r["cross_per_coord"])
                              for r in base_rows])
        fits["cross_per_coord_vs_N"] = _fit_payload(cross_fit)
        checks.append(_reader_path_fit_check(
            csv_path, "N", "cross_per_coord",
            rate_fit([(r["N"], r["cross_per_coord"]) for r in rows])))
    if cfg.plots:
        from .plots import save_loglog_plot
        first_i = rows[0]["i_size"]
        base_rows = [r for r in rows if r["i_size"] == first_i]
        save_loglog_plot(out / "lognormal_rates.svg",
                         [r["N"] for r in base_rows], {
                             "cross term per coordinate":
                                 [r["cross_per_coord"] for r in base_rows],
                             "limit constant / sqrt(2N)":
                                 [limit_const / math.sqrt(2 * r["N"])
                                  for r in base_rows],
                         }, "N", "cross term",
                         "lognormal: per-coordinate cross term vs N")
    payload = {
        "experiment": "lognormal",
        "sup_stein_factor": sup_s,
        "median_prefactor": prefactor,
        "limit_constant": limit_const,
        "rows": rows,
        "rate_fits": fits,
        "csv_reader_checks": checks,
        "provenance": cfg.provenance(),
    }
    write_json(out / "lognormal.json", payload)
    return payload


# ----------------------------------------------------------------------
# selftest: the cross-module invariant suite
# ----------------------------------------------------------------------
def _selftest_checks(cfg: ExperimentConfig):
    quick = cfg.quick
    seed = cfg.seed
    n_mc = 20_000 if quick else 60_000

    def quadrature_closed_forms():
        from .quadrature import integrate
        sq = math.sqrt(2 * math.pi)
        gauss = integrate(lambda x: np.exp(-0.5 * x * x) / sq, -np.inf, np.inf)
        tail = integrate(lambda t: t * np.exp(-0.5 * t * t) / sq, 1.3, np.inf)
        ok = abs(gauss - 1.0) < 1e-10 and \
            abs(tail - math.exp(-0.5 * 1.3**2) / sq) < 1e-12
        return ok, f"gaussian mass {gauss!r}"

    def measure_diffusion_forms():
        names = ["uniform01", "gaussian"] if quick else \
            ["uniform01", "gaussian", "centered_gamma", "lognormal01"]
        worst = 0.0
        for name in names:
            m = resolve_measure(name)
            xs = np.unique(m.quantile(np.linspace(0.02, 0.98, 9)))
            for x in xs:
                left, right = m.diffusion_forms(float(x))
                worst = max(worst, abs(left - right) / abs(right))
        return worst < 1e-8, f"worst relative gap {worst:.2e}"

    def measure_fubini():
        worst = 0.0
        for name in ("uniform01", "gaussian", "centered_gamma"):
            m = resolve_measure(name)
            for q in (0.1, 0.5, 0.9):
                worst = max(worst, abs(m.fubini_residual(float(m.quantile(q)))))
        return worst < 1e-8, f"worst residual {worst:.2e}"

    def stein_residuals():
        worst = 0.0
        names = ["uniform01", "gaussian"] if quick else \
            ["uniform01", "gaussian", "centered_gamma", "lognormal01"]
        for name in names:
            m = resolve_measure(name)
            for tf in make_test_family(m):
                sol = SteinSolution(m, tf)
                rng = np.random.default_rng(seed)
                lo, hi = m.quantile_band(1e-4)
                for _ in range(2):
                    x = float(rng.uniform(lo + 0.05 * (hi - lo),
                                          hi - 0.05 * (hi - lo)))
                    y = rng.uniform(-1.0, 1.0, tf.dim_y)
                    worst = max(worst, abs(sol.residual(x, y)))
                    worst_rep = abs(sol.value(x, y) - sol.value_dual(x, y))
                    worst = max(worst, worst_rep)
        return worst < 1e-6, f"worst residual/representation gap {worst:.2e}"

    def stein_bound_suite():
        m = resolve_measure("uniform01")
        for tf in make_test_family(m):
            reports = verify_solution_bounds(m, tf, GridSpec(num_points=127))
            if not all(r.passed for r in reports):
                return False, f"bound violated for {tf.name}"
        return True, "all bounds hold"

    def chaos_key_identity():
        rng = np.random.default_rng(seed)
        trials = 200 if quick else 1000
        worst = 0.0
        for _ in range(trials):
            dim = int(rng.integers(2, 7))
            kernel = chaos.symmetrize(rng.standard_normal((dim, dim)))
            xi = rng.standard_normal(dim)
            lhs = chaos.divergence_linear(kernel, xi)
            rhs = ChaosVariable.pure_second(kernel).value(xi)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
        return worst <= 1e-12, f"worst relative gap {worst:.2e}"

    def chaos_product_identity():
        rng = np.random.default_rng(seed + 1)
        trials = 200 if quick else 1000
        worst = 0.0
        for _ in range(trials):
            dim = int(rng.integers(2, 7))
            k1 = chaos.symmetrize(rng.standard_normal((dim, dim)))
            k2 = chaos.symmetrize(rng.standard_normal((dim, dim)))
            xi = rng.standard_normal(dim)
            lhs, rhs = chaos.gradient_inner_identity(k1, k2, xi)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        return worst <= 1e-12, f"worst relative gap {worst:.2e}"

    def chaos_product_variance():
        # the second-moment route through contract1 must match Monte Carlo;
        # skipping the symmetrization in contract1 breaks it
        rng = np.random.default_rng(seed + 2)
        dim = 6
        k1 = chaos.symmetrize(rng.standard_normal((dim, dim)))
        k2 = chaos.symmetrize(rng.standard_normal((dim, dim)))
        q = chaos.contract1(k1, k2)
        tr = float(np.trace(chaos.contract1_raw(k1, k2)))
        expect = 16.0 * (tr * tr + 2.0 * float(np.sum(q * q)))
        xi = GaussianSampler(dim, seed + 3).sample(n_mc)
        inner = 4.0 * np.sum((xi @ k1) * (xi @ k2), axis=-1)
        sq = inner**2
        se = float(np.std(sq, ddof=1) / math.sqrt(len(sq)))
        gap = abs(float(np.mean(sq)) - expect)
        return gap <= 4 * se, \
            f"second moment gap {gap:.3e} vs 4 SE {4 * se:.3e}"

    def chaos_cross_moments():
        worst = 0.0
        ns = range(2, 13) if quick else range(2, 25)
        for n in ns:
            for m_sz in range(1, n + 1):
                ku, kv, _ = build_gamma_kernels(n, m_sz)
                worst = max(worst, abs(chaos.exact_cross_moment(n, m_sz) -
                                       chaos.isometry_inner(ku, kv)))
        return worst <= 1e-12, f"worst gap {worst:.2e}"

    def mehler_exact_path():
        rng = np.random.default_rng(seed + 4)
        kernel = chaos.symmetrize(rng.standard_normal((5, 5)))
        variable = ChaosVariable.pure_second(kernel)
        fn = as_functional(variable)
        xi = rng.standard_normal((64, 5))
        smoothed = ou_smoothed_gradient(fn, xi, cfg.mehler())
        exact = xi @ variable.second
        rel = float(np.max(np.abs(smoothed - exact)) /
                    np.max(np.abs(exact)))
        return rel < 1e-3, f"relative gap {rel:.2e}"

    def estimator_determinism():
        ku, kv, _ = build_gamma_kernels(8, 4)
        u_var = ChaosVariable.pure_second(ku)
        v_var = ChaosVariable.pure_second(kv)
        a = cross_term(u_var, v_var, 4000, seed + 5)
        b = cross_term(u_var, v_var, 4000, seed + 5)
        same = a.estimate == b.estimate and a.std_error == b.std_error
        return same, "bitwise identical repeat"

    def transport_metric():
        rng = np.random.default_rng(seed + 6)
        import itertools
        for n in (3, 5):
            a = SampleCloud(rng.standard_normal((n, 2)))
            b = SampleCloud(rng.standard_normal((n, 2)))
            best = min(
                sum(float(np.linalg.norm(a.data[i] - b.data[p[i]]))
                    for i in range(n)) / n
                for p in itertools.permutations(range(n)))
            if abs(w1_exact(a, b) - best) > 1e-12:
                return False, f"assignment vs brute force at n={n}"
        return True, "matches brute force"

    def rate_fit_exact():
        fit = rate_fit([(s, s**-0.5) for s in (10.0, 100.0, 1000.0)])
        return abs(fit.slope + 0.5) < 1e-12, f"slope {fit.slope!r}"

    def sampler_workers():
        import os
        sampler = GaussianSampler(5, seed + 7, chunk_size=512)
        saved = os.environ.get("STEINMAL_WORKERS")
        try:
            os.environ["STEINMAL_WORKERS"] = "1"
            a = sampler.sample(2048)
            os.environ["STEINMAL_WORKERS"] = "8"
            b = sampler.sample(2048)
        finally:
            if saved is None:
                os.environ.pop("STEINMAL_WORKERS", None)
            else:
                os.environ["STEINMAL_WORKERS"] = saved
        return a.tobytes() == b.tobytes(), "identical at 1 and 8 workers"

    def uniform_discrepancy_vanishes():
        m = resolve_measure("uniform01")
        x_fn, _ = uniform_pair(0.2)
        d = discrepancy_term(m, x_fn, 2000 if quick else 10000, seed + 8)
        return d.estimate <= 1e-2, f"discrepancy {d.estimate:.2e}"

    def lognormal_constant():
        value = lognormal_limit_constant()
        analytic = math.sqrt(2 / math.pi) * math.exp(0.5)
        return abs(value - analytic) < 1e-10, f"constant {value!r}"

    return [
        ("quadrature_closed_forms", quadrature_closed_forms),
        ("measure_diffusion_forms", measure_diffusion_forms),
        ("measure_fubini_identity", measure_fubini),
        ("stein_residuals", stein_residuals),
        ("stein_bound_suite", stein_bound_suite),
        ("chaos_key_identity", chaos_key_identity),
        ("chaos_product_identity", chaos_product_identity),
        ("chaos_product_variance", chaos_product_variance),
        ("chaos_cross_moments", chaos_cross_moments),
        ("mehler_exact_path", mehler_exact_path),
        ("estimator_determinism", estimator_determinism),
        ("transport_metric", transport_metric),
        ("rate_fit_exact", rate_fit_exact),
        ("sampler_worker_determinism", sampler_workers),
        ("uniform_discrepancy_vanishes", uniform_discrepancy_vanishes),
        ("lognormal_limit_constant", lognormal_constant),
    ]


def run_selftest(cfg: ExperimentConfig, stream=None) -> bool:
    """Run the invariant suite; prints one line per check, returns overall
    pass.  Any exception inside a check counts as a failure."""
    import sys
    stream = stream if stream is not None else sys.stdout
    results = []
    for name, check in _selftest_checks(cfg):
        try:
            ok, detail = check()
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        stream.write(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}\n")
    passed = all(ok for _, ok, _ in results)
    stream.write(f"selftest: {'PASS' if passed else 'FAIL'} "
                 f"({sum(ok for _, ok, _ in results)}/{len(results)})\n")
    out = Path(cfg.out_dir)
    if cfg.out_dir != ".":
        out.mkdir(parents=True, exist_ok=True)
    write_json(out / "selftest.json", {
        "checks": [{"name": n, "passed": bool(o), "detail": d}
                   for n, o, d in results],
        "passed": passed,
        "provenance": cfg.provenance(),
    })
    return passed
