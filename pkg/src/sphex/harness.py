"""Seeded Monte Carlo campaigns over the excursion statistics.

Eight experiment kinds reproduce the desk-scale-checkable claims:
``variance_scaling`` (excursion volume variance against eigenspace
dimension), ``bad_set`` (measure of coefficient vectors whose functional
strays from the Gaussian mean), ``kol_decay`` (Kolmogorov distance decay),
``supnorm`` (sup-norm sandwich and constant estimation), ``ldp``
(chi-square radius large deviations), ``nongaussian`` (rescaled limits
under perturbed coefficient laws), ``epc`` (excursion Euler
characteristic) and ``critical_density`` (critical point counts per kind).

Reproducibility contract: every replicate derives its generator from
``harmonics.stream(seed, replicate, purpose)`` where the purpose string
names the kind and cell, so cells may run in any order (or in parallel)
without changing a single draw, and rerunning a config bit-reproduces
every estimate.  A cell's samples are shared across the levels in
``u_list`` (common random numbers); distinct kinds and distinct ell never
share a stream.

Each run emits one CSV of records (fixed header, %.17g floats), a JSON
sidecar carrying the config hash and estimated constants, and, for kinds
with a power-law prediction, a ``rates.csv`` with the fitted slope.  The
``seconds`` column records measured wall time and is therefore the one
column excluded from byte-identity comparisons between repeated runs.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from . import theory
from .excursion import (
    excursion_volume,
    find_critical_points,
    kolmogorov_distance,
    euler_characteristic_morse,
    euler_characteristic_mesh,
    sup_norm,
)
from .harmonics import (
    GramSimulator,
    NonGaussianModel,
    evaluate_grid,
    sample_gaussian,
    sample_nongaussian,
    sample_unit_coefficients,
    stream,
)
from .specfun import HarmonicLevel, eigenspace_dim, gaussian
from .sphere_geom import SphereGrid, icosphere, iso_latitude_grid, quasi_uniform_grid

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "RateFit",
    "RecordRow",
    "estimate_constants",
    "fit_rate",
    "mesh_agreement",
    "parse_config_file",
    "run_experiment",
    "wilson_interval",
    "write_rates_csv",
    "write_record_csv",
    "write_sidecar_json",
    "KINDS",
]

KINDS = (
    "variance_scaling",
    "bad_set",
    "kol_decay",
    "supnorm",
    "ldp",
    "nongaussian",
    "epc",
    "critical_density",
)

_EXCEEDANCE_KINDS = {
    "bad_set",
    "kol_decay_exceedance",
    "supnorm_tail",
    "supnorm_lower",
}


@dataclass
class ExperimentConfig:
    """Parameters of one campaign.

    ``epsilon_rule`` is either ``const:<value>`` or ``pow:<s>`` meaning
    epsilon = s * n^(-1/3) at eigenspace dimension n; ``epsilon_sweep``
    lists multipliers applied to the rule's epsilon (bad_set and kol_decay
    report one exceedance row per multiplier).  ``centering`` selects
    whether bad_set deviations are measured from the pilot Gaussian mean
    or from the analytic limit 1 - Phi(u).  ``n_list`` (degrees of
    freedom) and ``a`` (threshold) apply to the ldp kind only, which has
    no sphere in it; its rows store n in the ell column.  ``grid_cap``
    bounds the point count of d >= 3 simulations, where factorizing the
    Gram matrix is the limiting cost.
    """

    kind: str
    ell_list: list[int]
    seed: int
    replicates: int
    dim: int = 2
    u_list: list[float] = field(default_factory=lambda: [0.0])
    grid_density: int = 20
    model: Optional[str] = None
    epsilon_rule: str = "pow:3.0"
    epsilon_sweep: list[float] = field(default_factory=lambda: [1.0])
    centering: str = "pilot"
    n_list: Optional[list[int]] = None
    a: float = 1.5
    grid_cap: int = 8000

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.kind == "ldp":
            if not self.n_list:
                raise ValueError("ldp requires n_list")
            if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
                raise ValueError("n_list must be strictly increasing")
            if self.a <= 1.0:
                raise ValueError("ldp threshold a must exceed 1")
        else:
            if not self.ell_list:
                raise ValueError("ell_list must be nonempty")
            if any(b <= a for a, b in zip(self.ell_list, self.ell_list[1:])):
                raise ValueError("ell_list must be strictly increasing")
        if self.replicates < 30:
            raise ValueError(
                "replicates must be >= 30 for standard errors to mean anything"
            )
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.grid_density < 1:
            raise ValueError("grid_density must be positive")
        if not self.u_list:
            raise ValueError("u_list must be nonempty")
        if self.centering not in ("pilot", "analytic"):
            raise ValueError(f"centering must be pilot|analytic, got {self.centering}")
        if self.kind == "nongaussian" and not self.model:
            raise ValueError("nongaussian requires a model")
        if not self.epsilon_sweep or any(s <= 0 for s in self.epsilon_sweep):
            raise ValueError("epsilon_sweep multipliers must be positive")
        _parse_epsilon_rule(self.epsilon_rule)  # validates

    def epsilon_base(self, n: int) -> float:
        mode, value = _parse_epsilon_rule(self.epsilon_rule)
        if mode == "const":
            return value
        return value * float(n) ** (-1.0 / 3.0)

    def config_hash(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in dataclass_fields(self)}
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _parse_epsilon_rule(rule: str) -> tuple[str, float]:
    mode, _, value = rule.partition(":")
    if mode not in ("const", "pow") or not value:
        raise ValueError(
            f"epsilon_rule must be 'const:<eps>' or 'pow:<s>', got {rule!r}"
        )
    v = float(value)
    if v <= 0:
        raise ValueError("epsilon_rule value must be positive")
    return mode, v


@dataclass
class RecordRow:
    kind: str
    dim: int
    ell: int
    u: Optional[float]
    epsilon: Optional[float]
    estimate: float
    stderr: float
    theory: Optional[float]
    replicates: int
    degenerate: int
    seconds: float


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: list[tuple[float, float]]

    def __post_init__(self) -> None:
        if len(self.points) < 3:
            raise ValueError("a rate fit needs at least 3 points")
        if not -1e-9 <= self.r_squared <= 1.0 + 1e-9:
            raise ValueError(f"r_squared out of range: {self.r_squared}")
        self.r_squared = min(max(self.r_squared, 0.0), 1.0)


@dataclass
class ExperimentRecord:
    config: ExperimentConfig
    config_hash: str
    rows: list[RecordRow]
    constants: dict
    rate_points: list[tuple[float, float]] = field(default_factory=list)
    fit: Optional[RateFit] = None


def fit_rate(pairs: Sequence[tuple[float, float]]) -> RateFit:
    """Ordinary least squares of log y on log x, closed form."""
    if len(pairs) < 3:
        raise ValueError("need at least 3 (x, y) pairs")
    if any(x <= 0 or y <= 0 for x, y in pairs):
        raise ValueError("all pairs must be positive for a log-log fit")
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    mx, my = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    if sxx == 0.0:
        raise ValueError("x values must not all coincide")
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - my) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(slope, intercept, r2, list(zip(lx.tolist(), ly.tolist())))


def wilson_interval(successes: int, total: int, z: float = 1.959963984540054
                    ) -> tuple[float, float]:
    """Wilson 95% (by default) confidence interval for a binomial fraction."""
    if total < 1:
        raise ValueError("total must be >= 1")
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.shape[0]
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n))


def _var_se(x: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its fourth-moment standard error."""
    n = x.shape[0]
    s2 = float(np.var(x, ddof=1))
    centered = x - np.mean(x)
    m4 = float(np.mean(centered**4))
    var_of_var = (m4 - s2 * s2 * (n - 3) / (n - 1)) / n
    return s2, math.sqrt(max(var_of_var, 0.0))


def _frac_se(count: int, total: int) -> tuple[float, float]:
    p = count / total
    # sample std of 0/1 draws over sqrt(n), with the unbiased variance
    if total > 1:
        se = math.sqrt(p * (1.0 - p) / (total - 1))
    else:
        se = 0.0
    return p, se


def _volume_rows(values: np.ndarray, weights: np.ndarray,
                 u_list: Sequence[float]) -> np.ndarray:
    """Excursion volume at each u for one sample's values."""
    if len(u_list) <= 4:
        return np.array(
            [float(np.dot(weights, values >= u)) for u in u_list]
        )
    return np.asarray(excursion_volume((values, weights), np.asarray(u_list)))


def _sphere_grid(config: ExperimentConfig, ell: int, floor: int = 4) -> SphereGrid:
    return iso_latitude_grid(max(floor, config.grid_density * ell * ell))


# ---------------------------------------------------------------------------
# kind implementations
# ---------------------------------------------------------------------------


def _run_variance_scaling(config: ExperimentConfig) -> ExperimentRecord:
    rows: list[RecordRow] = []
    constants: dict = {}
    rate_points: list[tuple[float, float]] = []
    u_arr = list(config.u_list)
    for ell in config.ell_list:
        t0 = time.perf_counter()
        level = HarmonicLevel(ell, config.dim)
        grid = _sphere_grid(config, ell)
        vols = np.empty((config.replicates, len(u_arr)))
        for rep in range(config.replicates):
            rng = stream(config.seed, rep, f"variance_scaling:ell={ell}")
            coeffs = sample_gaussian(level, rng)
            vals = evaluate_grid(coeffs, grid)
            vols[rep] = _volume_rows(vals, grid.weights, u_arr)
        elapsed = time.perf_counter() - t0
        per_u_var = []
        for j, u in enumerate(u_arr):
            mean, mean_se = _mean_se(vols[:, j])
            var, var_se = _var_se(vols[:, j])
            per_u_var.append(var)
            rows.append(RecordRow(
                "variance_scaling", config.dim, ell, u, None,
                var, var_se, None, config.replicates, 0, elapsed,
            ))
            rows.append(RecordRow(
                "variance_scaling_mean", config.dim, ell, u, None,
                mean, mean_se, theory.excursion_mean_limit(u),
                config.replicates, 0, elapsed,
            ))
        rate_points.append((float(level.n), max(per_u_var)))
    fit = fit_rate(rate_points) if len(rate_points) >= 3 else None
    if fit is not None:
        constants["variance_slope"] = fit.slope
        constants["variance_r_squared"] = fit.r_squared
    return ExperimentRecord(config, config.config_hash(), rows, constants,
                            rate_points, fit)


def _pilot_statistics(config: ExperimentConfig, level: HarmonicLevel,
                      grid: SphereGrid) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-ensemble pilot mean and variance of the volume functional."""
    u_arr = list(config.u_list)
    vols = np.empty((config.replicates, len(u_arr)))
    for rep in range(config.replicates):
        rng = stream(config.seed, rep, f"bad_set.pilot:ell={level.ell}")
        coeffs = sample_gaussian(level, rng)
        vals = evaluate_grid(coeffs, grid)
        vols[rep] = _volume_rows(vals, grid.weights, u_arr)
    return vols.mean(axis=0), vols.var(axis=0, ddof=1)


def _fit_regularity_constant(u_list: Sequence[float], psi: np.ndarray) -> float:
    """Estimate of the regularity constant from the pilot mean curve.

    The constant bounds (1 + |u|)|d/du E g(T, u)|; the derivative is taken
    by central differences on the u grid.  Falls back to 1 when the grid
    is too coarse to differentiate.
    """
    u = np.asarray(u_list, dtype=float)
    if u.shape[0] < 3:
        return 1.0
    order = np.argsort(u)
    u_s, psi_s = u[order], psi[order]
    deriv = np.gradient(psi_s, u_s)
    c = float(np.max(np.abs(deriv) * (1.0 + np.abs(u_s))))
    return max(c, 0.05)


def _run_bad_set(config: ExperimentConfig) -> ExperimentRecord:
    rows: list[RecordRow] = []
    constants: dict = {"per_ell": {}}
    u_arr = list(config.u_list)
    eps_ceiling = 1.0 - 1e-9
    for ell in config.ell_list:
        t0 = time.perf_counter()
        level = HarmonicLevel(ell, config.dim)
        grid = _sphere_grid(config, ell)
        psi_hat, var_hat = _pilot_statistics(config, level, grid)
        sigma_sq_sup = float(np.max(var_hat))
        c_hat = _fit_regularity_constant(u_arr, psi_hat)
        center = (
            psi_hat
            if config.centering == "pilot"
            else np.array([theory.excursion_mean_limit(u) for u in u_arr])
        )
        devs = np.empty((config.replicates, len(u_arr)))
        for rep in range(config.replicates):
            rng = stream(config.seed, rep, f"bad_set.main:ell={ell}")
            coeffs = sample_unit_coefficients(level, rng)
            vals = evaluate_grid(coeffs, grid)
            devs[rep] = np.abs(_volume_rows(vals, grid.weights, u_arr) - center)
        elapsed = time.perf_counter() - t0
        n = level.n
        eps_base = config.epsilon_base(n)
        local_bounds = {}
        sigma_interp = _variance_interpolant(u_arr, var_hat)
        wilson = {}
        for j, u in enumerate(u_arr):
            for mult in config.epsilon_sweep:
                # the functional is [0, 1]-valued, so the bound's domain
                # caps usable epsilon just below 1
                eps = min(max(mult * eps_base, 1e-12), eps_ceiling)
                count = int(np.count_nonzero(devs[:, j] > eps))
                frac, se = _frac_se(count, config.replicates)
                bound = theory.bad_set_bound(eps, n, sigma_sq_sup, c_hat)
                rows.append(RecordRow(
                    "bad_set", config.dim, ell, u, eps,
                    frac, se, bound, config.replicates, 0, elapsed,
                ))
                wilson[f"u={u:g},eps={eps:.6g}"] = wilson_interval(
                    count, config.replicates
                )
                local_bounds[f"u={u:g},eps={eps:.6g}"] = theory.bad_set_bound_local(
                    eps, n, sigma_interp, c_hat, u
                )
        constants["per_ell"][str(ell)] = {
            "c_hat": c_hat,
            "sigma_sq_sup": sigma_sq_sup,
            "pilot_mean": dict(zip(map(str, u_arr), psi_hat.tolist())),
            "pilot_var": dict(zip(map(str, u_arr), var_hat.tolist())),
            "local_bounds": local_bounds,
            "wilson_intervals": wilson,
            "vacuous_bound": bool(
                theory.bad_set_bound(
                    min(max(config.epsilon_base(n), 1e-12), eps_ceiling),
                    n, sigma_sq_sup, c_hat,
                ) > 1.0
            ),
        }
    return ExperimentRecord(config, config.config_hash(), rows, constants)


def _variance_interpolant(u_list: Sequence[float],
                          var_hat: np.ndarray) -> Callable[[float], float]:
    u = np.asarray(u_list, dtype=float)
    order = np.argsort(u)
    u_s, v_s = u[order], np.asarray(var_hat)[order]

    def sigma_sq_at(x: float) -> float:
        return float(np.interp(x, u_s, v_s))

    return sigma_sq_at


def _run_kol_decay(config: ExperimentConfig) -> ExperimentRecord:
    rows: list[RecordRow] = []
    constants: dict = {"per_ell": {}}
    rate_points: list[tuple[float, float]] = []
    rate_ell, _ = theory.kolmogorov_rate_exponents(config.ell_list[0], config.dim)
    for ell in config.ell_list:
        t0 = time.perf_counter()
        level = HarmonicLevel(ell, config.dim)
        dists = np.empty(config.replicates)
        if config.dim == 2:
            grid = _sphere_grid(config, ell)
            for rep in range(config.replicates):
                rng = stream(config.seed, rep, f"kol_decay:ell={ell}")
                coeffs = sample_gaussian(level, rng)
                vals = evaluate_grid(coeffs, grid)
                dists[rep] = kolmogorov_distance((vals, grid.weights))
        else:
            n_pts = min(config.grid_density * ell**config.dim, config.grid_cap)
            sim = GramSimulator(level, quasi_uniform_grid(config.dim, n_pts))
            for rep in range(config.replicates):
                rng = stream(config.seed, rep, f"kol_decay:ell={ell}")
                dists[rep] = kolmogorov_distance(sim.sample(rng))
            constants["per_ell"].setdefault(str(ell), {})["jitter"] = sim.jitter
        elapsed = time.perf_counter() - t0
        mean, se = _mean_se(dists)
        rows.append(RecordRow(
            "kol_decay", config.dim, ell, None, None,
            mean, se, float(ell) ** (-rate_ell),
            config.replicates, 0, elapsed,
        ))
        n = level.n
        eps_base = config.epsilon_base(n)
        wilson = {}
        for mult in config.epsilon_sweep:
            eps = mult * eps_base
            count = int(np.count_nonzero(dists > eps))
            frac, se = _frac_se(count, config.replicates)
            rows.append(RecordRow(
                "kol_decay_exceedance", config.dim, ell, None, eps,
                frac, se, theory.kolmogorov_measure_bound(n, eps, 1.0),
                config.replicates, 0, elapsed,
            ))
            wilson[f"eps={eps:.6g}"] = wilson_interval(count, config.replicates)
        entry = constants["per_ell"].setdefault(str(ell), {})
        entry["wilson_intervals"] = wilson
        rate_points.append((float(ell), mean))
    fit = fit_rate(rate_points) if len(rate_points) >= 3 else None
    if fit is not None:
        constants["kol_slope"] = fit.slope
        constants["theory_exponent"] = -rate_ell
    record = ExperimentRecord(config, config.config_hash(), rows, constants,
                              rate_points, fit)
    constants.update(estimate_constants([record]))
    return record


def _run_supnorm(config: ExperimentConfig) -> ExperimentRecord:
    rows: list[RecordRow] = []
    constants: dict = {"per_ell": {}}
    rate_points: list[tuple[float, float]] = []
    beta = 1.0
    k_max, _ = theory.sup_norm_lower_params(0.0, config.dim)
    k_lower = 0.9 * k_max
    sups_by_ell: dict[int, np.ndarray] = {}
    radii_by_ell: dict[int, np.ndarray] = {}
    timing: dict[int, float] = {}
    for ell in config.ell_list:
        t0 = time.perf_counter()
        level = HarmonicLevel(ell, config.dim)
        grid = iso_latitude_grid(max(40, config.grid_density) * ell * ell)
        sups = np.empty(config.replicates)
        radii = np.empty(config.replicates)
        for rep in range(config.replicates):
            rng = stream(config.seed, rep, f"supnorm:ell={ell}")
            coeffs = sample_gaussian(level, rng)
            sups[rep], _ = sup_norm(coeffs, grid=grid)
            radii[rep] = coeffs.radius
        sups_by_ell[ell] = sups
        radii_by_ell[ell] = radii
        timing[ell] = time.perf_counter() - t0
    # two-pass: the tail threshold uses the run's own estimated constant
    m_hat = -math.inf
    m_hat_ell = config.ell_list[0]
    for ell in config.ell_list:
        mean = float(np.mean(sups_by_ell[ell]))
        ratio = mean / math.sqrt(math.log(ell))
        if ratio > m_hat:
            m_hat, m_hat_ell = ratio, ell
    for ell in config.ell_list:
        sups = sups_by_ell[ell]
        sups_h = sups / radii_by_ell[ell]
        mean, se = _mean_se(sups)
        rows.append(RecordRow(
            "supnorm", config.dim, ell, None, None,
            mean, se, None, config.replicates, 0, timing[ell],
        ))
        threshold, tail_bound = theory.sup_norm_tail_bound(m_hat, beta, ell)
        count = int(np.count_nonzero(sups >= threshold))
        frac, fse = _frac_se(count, config.replicates)
        rows.append(RecordRow(
            "supnorm_tail", config.dim, ell, None, threshold,
            frac, fse, tail_bound, config.replicates, 0, timing[ell],
        ))
        low_threshold = k_lower * math.sqrt(math.log(ell))
        lcount = int(np.count_nonzero(sups_h < low_threshold))
        lfrac, lse = _frac_se(lcount, config.replicates)
        rows.append(RecordRow(
            "supnorm_lower", config.dim, ell, None, low_threshold,
            lfrac, lse, None, config.replicates, 0, timing[ell],
        ))
        constants["per_ell"][str(ell)] = {
            "mean_over_sqrt_log": float(np.mean(sups)) / math.sqrt(math.log(ell)),
            "tail_wilson": wilson_interval(count, config.replicates),
            "lower_wilson": wilson_interval(lcount, config.replicates),
        }
        rate_points.append((float(ell), mean))
    constants["M_hat"] = m_hat
    constants["M_hat_ell"] = m_hat_ell
    constants["K_lower"] = k_lower
    record = ExperimentRecord(config, config.config_hash(), rows, constants,
                              rate_points, None)
    return record


def _run_ldp(config: ExperimentConfig) -> ExperimentRecord:
    """Importance-sampled chi-square tail rates.

    The target events have probabilities down to ~1e-10 at the largest n,
    far beyond plain Monte Carlo at any desk-scale replicate count, so the
    sampler tilts the chi-square by theta* = (1 - 1/a)/2 (the exponential
    change of measure whose mean sits exactly on the threshold n*a) and
    reweights; the estimator is unbiased for P(R^2 >= a) and its rate
    -log(P)/n concentrates tightly around the finite-n exact rate.
    """
    rows: list[RecordRow] = []
    constants: dict = {"per_n": {}}
    a = config.a
    theta = (1.0 - 1.0 / a) / 2.0
    lam_star = theory.cramer_transform(a)
    assert config.n_list is not None
    for n in config.n_list:
        t0 = time.perf_counter()
        rng = stream(config.seed, 0, f"ldp:n={n}")
        x = rng.gamma(n / 2.0, 2.0 * a, size=config.replicates)
        logw = (n / 2.0) * math.log(a) - theta * x
        w = np.exp(logw) * (x >= n * a)
        p_hat = float(np.mean(w))
        p_se = float(np.std(w, ddof=1) / math.sqrt(config.replicates))
        rate = -math.log(p_hat) / n
        rate_se = p_se / (p_hat * n)
        elapsed = time.perf_counter() - t0
        rows.append(RecordRow(
            "ldp", 0, n, a, None, rate, rate_se, lam_star,
            config.replicates, 0, elapsed,
        ))
        upper, exact = theory.chi_square_tail_rate(a, n)
        constants["per_n"][str(n)] = {
            "p_hat": p_hat,
            "p_se": p_se,
            "exact_probability": exact,
            "exact_rate": -math.log(exact) / n,
            "upper_probability_bound": upper,
        }
    constants["lambda_star"] = lam_star
    constants["theta_tilt"] = theta
    return ExperimentRecord(config, config.config_hash(), rows, constants)


def _run_nongaussian(config: ExperimentConfig) -> ExperimentRecord:
    assert config.model is not None
    model = NonGaussianModel.parse(config.model)
    rows: list[RecordRow] = []
    constants: dict = {"per_ell": {}}
    u_arr = np.asarray(config.u_list, dtype=float)
    for ell in config.ell_list:
        t0 = time.perf_counter()
        level = HarmonicLevel(ell, config.dim)
        grid = _sphere_grid(config, ell)
        # model and baseline share one stream per replicate (matched runs):
        # the baseline consumes the same draws the model's Gaussian core
        # does, so a unit perturbation reproduces the baseline exactly and
        # genuine perturbations are compared pairwise on common noise
        dev_model = np.empty(config.replicates)
        dev_base = np.empty(config.replicates)
        for rep in range(config.replicates):
            rng = stream(config.seed, rep, f"nongaussian:ell={ell}")
            coeffs, power = sample_nongaussian(model, level, rng)
            vals = evaluate_grid(coeffs, grid)
            vols = _volume_rows(vals, grid.weights, u_arr)
            target = gaussian(u_arr / math.sqrt(power)).tail
            dev_model[rep] = float(np.max(np.abs(vols - target)))
        for rep in range(config.replicates):
            rng = stream(config.seed, rep, f"nongaussian:ell={ell}")
            coeffs = sample_gaussian(level, rng)
            vals = evaluate_grid(coeffs, grid)
            vols = _volume_rows(vals, grid.weights, u_arr)
            target = gaussian(u_arr / coeffs.radius).tail
            dev_base[rep] = float(np.max(np.abs(vols - target)))
        elapsed = time.perf_counter() - t0
        m_mean, m_se = _mean_se(dev_model)
        b_mean, b_se = _mean_se(dev_base)
        rows.append(RecordRow(
            "nongaussian", config.dim, ell, None, None,
            m_mean, m_se, None, config.replicates, 0, elapsed,
        ))
        rows.append(RecordRow(
            "nongaussian_baseline", config.dim, ell, None, None,
            b_mean, b_se, None, config.replicates, 0, elapsed,
        ))
        q95 = float(np.quantile(dev_base, 0.95))
        ks = ks_2samp(dev_model, dev_base)
        constants["per_ell"][str(ell)] = {
            "baseline_q95": q95,
            "frac_model_within_q95": float(np.mean(dev_model <= q95)),
            "ks_stat": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
        }
    return ExperimentRecord(config, config.config_hash(), rows, constants)


def _critical_point_campaign(config: ExperimentConfig, ell: int, purpose: str):
    """Shared replicate loop for the epc / critical_density kinds."""
    level = HarmonicLevel(ell, config.dim)
    sets = []
    degenerate = 0
    for rep in range(config.replicates):
        rng = stream(config.seed, rep, f"{purpose}:ell={ell}")
        coeffs = sample_gaussian(level, rng)
        cps = find_critical_points(coeffs)
        if cps.degenerate_flag:
            degenerate += 1
            continue
        sets.append(cps)
    if degenerate > 0.2 * config.replicates:
        raise RuntimeError(
            f"{purpose}: {degenerate}/{config.replicates} replicates "
            f"degenerate at ell={ell}; geometry is unreliable at this "
            "seeding density"
        )
    return sets, degenerate


def _run_epc(config: ExperimentConfig) -> ExperimentRecord:
    from .excursion import count_above  # local import to avoid cycle noise

    rows: list[RecordRow] = []
    constants: dict = {"per_ell": {}, "exact_check_failures": 0}
    for ell in config.ell_list:
        t0 = time.perf_counter()
        sets, degenerate = _critical_point_campaign(config, ell, "epc")
        failures = 0
        for cps in sets:
            top = max(p.value for p in cps.points)
            if euler_characteristic_morse(cps, -40.0) != 2:
                failures += 1
            if euler_characteristic_morse(cps, top + 1.0) != 0:
                failures += 1
        constants["exact_check_failures"] += failures
        elapsed = time.perf_counter() - t0
        for u in config.u_list:
            chis = np.array(
                [euler_characteristic_morse(cps, u) / ell**2 for cps in sets]
            )
            mean, se = _mean_se(chis)
            rows.append(RecordRow(
                "epc", config.dim, ell, u, None,
                mean, se, theory.epc_limit(u),
                config.replicates, degenerate, elapsed,
            ))
        constants["per_ell"][str(ell)] = {
            "gkf_reference": {
                str(u): theory.gkf_epc_expectation(ell, u) for u in config.u_list
            },
            "mean_total_critical": float(
                np.mean([count_above(cps) for cps in sets])
            ),
        }
    return ExperimentRecord(config, config.config_hash(), rows, constants)


def _run_critical_density(config: ExperimentConfig) -> ExperimentRecord:
    from .excursion import count_above
    from .specfun import CriticalKind

    kind_map = (
        ("critical_density_c", CriticalKind.CRITICAL),
        ("critical_density_e", CriticalKind.EXTREMUM),
        ("critical_density_s", CriticalKind.SADDLE),
    )
    rows: list[RecordRow] = []
    constants: dict = {"per_ell": {}}
    for ell in config.ell_list:
        t0 = time.perf_counter()
        sets, degenerate = _critical_point_campaign(config, ell, "critical_density")
        elapsed = time.perf_counter() - t0
        for label, ckind in kind_map:
            for u in config.u_list:
                counts = np.array(
                    [count_above(cps, u, ckind) / ell**2 for cps in sets]
                )
                mean, se = _mean_se(counts)
                rows.append(RecordRow(
                    label, config.dim, ell, u, None,
                    mean, se, theory.critical_count_limit(ckind, u),
                    config.replicates, degenerate, elapsed,
                ))
        constants["per_ell"][str(ell)] = {
            "degenerate_fraction": degenerate / config.replicates,
        }
    return ExperimentRecord(config, config.config_hash(), rows, constants)


_RUNNERS = {
    "variance_scaling": _run_variance_scaling,
    "bad_set": _run_bad_set,
    "kol_decay": _run_kol_decay,
    "supnorm": _run_supnorm,
    "ldp": _run_ldp,
    "nongaussian": _run_nongaussian,
    "epc": _run_epc,
    "critical_density": _run_critical_density,
}


def run_experiment(config: ExperimentConfig) -> ExperimentRecord:
    """Run one campaign and return its record (rows, constants, rate fit)."""
    return _RUNNERS[config.kind](config)


def mesh_agreement(
    ell: int,
    u_list: Sequence[float],
    samples: int,
    subdivision: int,
    seed: int,
) -> dict:
    """Fraction of (sample, u) cells where Morse and mesh EPC agree.

    Cross-validates the critical-point route against the combinatorial
    vertex-threshold route on an icosphere.  Degenerate samples are
    excluded and reported.
    """
    level = HarmonicLevel(ell, 2)
    mesh = icosphere(subdivision)
    agree = 0
    total = 0
    degenerate = 0
    for rep in range(samples):
        rng = stream(seed, rep, f"mesh_agreement:ell={ell}")
        coeffs = sample_gaussian(level, rng)
        cps = find_critical_points(coeffs)
        if cps.degenerate_flag:
            degenerate += 1
            continue
        for u in u_list:
            total += 1
            chi_morse = euler_characteristic_morse(cps, u)
            chi_mesh = euler_characteristic_mesh(coeffs, mesh, u)
            if chi_morse == chi_mesh:
                agree += 1
    return {
        "agreement": agree / total if total else 0.0,
        "cells": total,
        "degenerate": degenerate,
    }


def estimate_constants(records: Sequence[ExperimentRecord]) -> dict:
    """Empirical estimates of the inequalities' universal constants.

    M_hat = max over ell of mean(sup norm)/sqrt(log ell) from supnorm
    records; K_hat = max over (ell, epsilon) of exceedance * n * epsilon^3
    from kol_decay exceedance records.  Each comes with the ell attaining
    the maximum.
    """
    if not records:
        raise ValueError("no records given")
    out: dict = {}
    m_best: Optional[tuple[float, int]] = None
    k_best: Optional[tuple[float, int]] = None
    for record in records:
        for row in record.rows:
            if row.kind == "supnorm":
                val = row.estimate / math.sqrt(math.log(row.ell))
                if m_best is None or val > m_best[0]:
                    m_best = (val, row.ell)
            elif row.kind == "kol_decay_exceedance" and row.epsilon:
                n = eigenspace_dim(row.ell, row.dim)
                val = row.estimate * n * row.epsilon**3
                if k_best is None or val > k_best[0]:
                    k_best = (val, row.ell)
    if m_best is not None:
        out["M_hat"], out["M_hat_ell"] = m_best
    if k_best is not None:
        out["K_hat"], out["K_hat_ell"] = k_best
    if not out:
        raise ValueError("records contain no supnorm/kol_decay rows")
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

CSV_HEADER = "kind,d,ell,u,epsilon,estimate,stderr,theory,replicates,degenerate,seconds"


def _fmt_opt(x: Optional[float]) -> str:
    return "" if x is None else format(x, ".17g")


def write_record_csv(record: ExperimentRecord, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for row in record.rows:
            writer.writerow([
                row.kind,
                row.dim,
                row.ell,
                _fmt_opt(row.u),
                _fmt_opt(row.epsilon),
                format(row.estimate, ".17g"),
                format(row.stderr, ".17g"),
                _fmt_opt(row.theory),
                row.replicates,
                row.degenerate,
                format(row.seconds, ".3f"),
            ])


def write_sidecar_json(record: ExperimentRecord, path: str) -> None:
    from . import __version__

    payload = {
        "kind": record.config.kind,
        "config_hash": record.config_hash,
        "seed": record.config.seed,
        "version": __version__,
        "constants": record.constants,
    }
    if record.fit is not None:
        payload["fit"] = {
            "slope": record.fit.slope,
            "intercept": record.fit.intercept,
            "r_squared": record.fit.r_squared,
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rates_csv(record: ExperimentRecord, path: str) -> bool:
    """Write plot data when the kind carries a rate fit; returns whether it did."""
    if record.fit is None or not record.rate_points:
        return False
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "fit_slope", "fit_intercept"])
        for x, y in record.rate_points:
            writer.writerow([
                format(x, ".17g"),
                format(y, ".17g"),
                format(record.fit.slope, ".17g"),
                format(record.fit.intercept, ".17g"),
            ])
    return True


_LIST_INT_FIELDS = {"ell_list", "n_list"}
_LIST_FLOAT_FIELDS = {"u_list", "epsilon_sweep"}
_INT_FIELDS = {"dim", "replicates", "grid_density", "seed", "grid_cap"}
_FLOAT_FIELDS = {"a"}
_STR_FIELDS = {"model", "epsilon_rule", "centering"}


def parse_config_file(path: str) -> list[ExperimentConfig]:
    """Parse an INI config: one section per experiment kind.

    Section names are the kind; keys are exactly the ExperimentConfig
    field names (unknown keys are an error, misspellings should fail
    loudly rather than silently fall back to defaults).
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    configs = []
    for section in parser.sections():
        if section not in KINDS:
            raise ValueError(
                f"unknown experiment kind [{section}]; expected one of {KINDS}"
            )
        kwargs: dict = {"kind": section}
        for key, raw in parser.items(section):
            if key in _LIST_INT_FIELDS:
                kwargs[key] = [int(tok) for tok in raw.split(",") if tok.strip()]
            elif key in _LIST_FLOAT_FIELDS:
                kwargs[key] = [float(tok) for tok in raw.split(",") if tok.strip()]
            elif key in _INT_FIELDS:
                kwargs[key] = int(raw)
            elif key in _FLOAT_FIELDS:
                kwargs[key] = float(raw)
            elif key in _STR_FIELDS:
                kwargs[key] = raw.strip()
            else:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
        if "ell_list" not in kwargs:
            kwargs["ell_list"] = kwargs.get("n_list", [])
            if section != "ldp":
                raise ValueError(f"[{section}] requires ell_list")
        configs.append(ExperimentConfig(**kwargs))
    if not configs:
        raise ValueError(f"config file {path} defines no experiments")
    return configs


def run_config_file(path: str, out_dir: str,
                    seed_override: Optional[int] = None) -> list[str]:
    """Run every section of a config file, writing outputs into out_dir.

    Produces <kind>.csv, <kind>.json and (when a rate fit exists)
    <kind>_rates.csv per section; returns the paths written.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    for config in parse_config_file(path):
        if seed_override is not None:
            config.seed = seed_override
            config.__post_init__()
        record = run_experiment(config)
        base = os.path.join(out_dir, config.kind)
        csv_path = base + ".csv"
        write_record_csv(record, csv_path)
        written.append(csv_path)
        json_path = base + ".json"
        write_sidecar_json(record, json_path)
        written.append(json_path)
        rates_path = base + "_rates.csv"
        if write_rates_csv(record, rates_path):
            written.append(rates_path)
    return written
