"""Target measures on an interval and their Stein-method scalar fields.

A target law mu on (l, u) is given by its density p.  From p we derive the
mean m, the distribution function F, the median, the diffusion coefficient

    a(x) = (2 / p(x)) * int_l^x (m - t) p(t) dt
         = (2 / p(x)) * int_x^u (t - m) p(t) dt,

and the factor

    S(x) = 8 * (int_l^x F) * (int_x^u (1 - F)) / (a(x)^2 p(x)),

whose grid supremum acts as the constant in the Wasserstein bound.  Closed
forms (when the density spec supplies them) take precedence, but every
quantity also has a pure-quadrature route so the two can be checked against
each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .expressions import parse_expression
from .quadrature import (
    QuadratureConfig,
    QuadratureError,
    integrate,
    integrate_panels,
)

__all__ = [
    "SupportInterval",
    "DensitySpec",
    "GridSpec",
    "ConditionDiagnostics",
    "DensityUnderflowError",
    "BoundaryProximityError",
    "TargetMeasure",
    "total_mass",
    "gaussian_std",
    "centered_gamma",
    "uniform01",
    "beta_measure",
    "lognormal01",
    "resolve_measure",
    "measure_from_config",
    "BUILTIN_NAMES",
]

_DENSITY_FLOOR = 1e-300
_MEDIAN_TOL = 1e-9
_QUANTILE_TOL = 1e-10


class DensityUnderflowError(ArithmeticError):
    """p(x) fell below the representable floor where a division needs it."""


class BoundaryProximityError(ValueError):
    """Requested evaluation point lies outside the usable quantile band."""


@dataclass(frozen=True)
class SupportInterval:
    """Open interval (lower, upper); either endpoint may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"degenerate support ({self.lower}, {self.upper})")

    @property
    def lower_finite(self) -> bool:
        return np.isfinite(self.lower)

    @property
    def upper_finite(self) -> bool:
        return np.isfinite(self.upper)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.lower) & (x < self.upper)


@dataclass
class DensitySpec:
    """A density plus optional closed-form shortcuts.

    All callables are vectorized.  ``cdf``, ``quantile``, ``mean`` and
    ``diffusion`` are optional; when absent the measure falls back to
    quadrature (cdf, mean, diffusion) or bracketing bisection (quantile).

    ``sf`` is the survival function 1 - F; supplying it matters wherever
    1 - cdf would cancel catastrophically (improper integrals of the upper
    tail amplify that noise exponentially).

    ``pdf_lower_offset``, when given, evaluates the density as a function of
    the distance v = t - l from a finite lower endpoint.  Densities with an
    algebraic singularity at l (the centered Gamma's inverse square root)
    need it: evaluating p(l + v) through a float64 t quantizes v to the
    spacing of doubles near l and caps nearby quadrature at ~1e-8 relative.
    """

    pdf: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quantile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mean: Optional[float] = None
    diffusion: Optional[Callable[[np.ndarray], np.ndarray]] = None
    pdf_lower_offset: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class GridSpec:
    """Quantile grid F^{-1}(k/(K+1)), k = 1..K, clipped to [q_min, 1-q_min]."""

    num_points: int = 201
    q_min: float = 1e-4

    def __post_init__(self):
        if self.num_points < 3:
            raise ValueError("need at least 3 grid points")
        if not 0 < self.q_min < 0.5:
            raise ValueError("q_min must lie in (0, 0.5)")

    def quantile_levels(self) -> np.ndarray:
        k = np.arange(1, self.num_points + 1)
        q = k / (self.num_points + 1.0)
        return np.clip(q, self.q_min, 1.0 - self.q_min)


@dataclass
class ConditionDiagnostics:
    """Heuristic edge diagnostics for the structural lower-bound conditions.

    Verdicts are derived from finitely many evaluations and are diagnostics,
    never proofs; ``note`` says so explicitly.
    """

    measure: str
    lower_liminf: Optional[float]
    upper_liminf: Optional[float]
    lower_slope: Optional[float]
    upper_slope: Optional[float]
    ratio_extremes: tuple
    grid: dict
    verdicts: dict
    note: str = ("numerical diagnostics on a finite grid; pass/fail verdicts "
                 "are heuristic evidence, not proofs")


def total_mass(density: DensitySpec, support: SupportInterval,
               cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Integral of the density over the support (should be ~1)."""
    return integrate(density.pdf, support.lower, support.upper, cfg)


def _as_scalar_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


class TargetMeasure:
    """Immutable density-defined law with cached mean and median.

    All methods are pure functions of (measure, arguments); instances are
    safe to share across threads.
    """

    def __init__(self, support: SupportInterval, density: DensitySpec,
                 quad: Optional[QuadratureConfig] = None,
                 name: Optional[str] = None,
                 mass_tol: float = 1e-6, validate: bool = True):
        self.support = support
        self.density = density
        self.quad = quad if quad is not None else QuadratureConfig()
        self.name = name if name is not None else density.name
        if validate:
            mass = total_mass(density, support, self.quad)
            if abs(mass - 1.0) > mass_tol:
                raise ValueError(
                    f"density {self.name!r} has total mass {mass!r}, "
                    f"outside tolerance {mass_tol} of 1")
        self.mean = self._compute_mean()
        self.median = float(self.quantile(0.5))
        f_med = float(self.cdf(self.median))
        if abs(f_med - 0.5) > _MEDIAN_TOL:
            raise ValueError(
                f"median solve failed for {self.name!r}: F(median)={f_med!r}")
        self._band_cache: dict = {}

    # ------------------------------------------------------------------
    # basic fields
    # ------------------------------------------------------------------
    def _compute_mean(self) -> float:
        if self.density.mean is not None:
            return float(self.density.mean)
        l, u = self.support.lower, self.support.upper
        pdf = self.density.pdf

        def integrand(t):
            return t * pdf(t)

        try:
            # Split at 0 for mixed-sign integrands on two-sided supports.
            if l < 0.0 < u:
                return integrate(integrand, l, 0.0, self.quad) + \
                    integrate(integrand, 0.0, u, self.quad)
            return integrate(integrand, l, u, self.quad)
        except QuadratureError as exc:
            raise QuadratureError(
                f"first moment of {self.name!r} did not converge: {exc}",
                estimate=exc.estimate, error_bound=exc.error_bound) from exc

    def pdf(self, x):
        arr, scalar = _as_scalar_array(x)
        out = np.asarray(self.density.pdf(arr), dtype=float)
        return float(out) if scalar else out

    def _pdf_checked(self, x) -> np.ndarray:
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.asarray(self.density.pdf(arr), dtype=float)
        if np.any(vals < _DENSITY_FLOOR):
            bad = arr[vals < _DENSITY_FLOOR][0]
            raise DensityUnderflowError(
                f"density of {self.name!r} underflows at x={bad!r}")
        return vals

    def cdf(self, x):
        arr, scalar = _as_scalar_array(x)
        if self.density.cdf is not None:
            out = np.clip(np.asarray(self.density.cdf(arr), dtype=float), 0.0, 1.0)
            return float(out) if scalar else out
        out = self._cdf_quadrature(np.atleast_1d(arr))
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def _cdf_quadrature(self, xs: np.ndarray) -> np.ndarray:
        l, u = self.support.lower, self.support.upper
        xs = np.clip(xs, l, u)
        order = np.argsort(xs, kind="stable")
        sx = xs[order]
        out = np.empty_like(sx)
        base = integrate(self.density.pdf, l, sx[0], self.quad)
        out[0] = base
        if len(sx) > 1:
            edges = sx
            panels = integrate_panels(self.density.pdf, edges, self.quad)
            out[1:] = base + np.cumsum(panels)
        result = np.empty_like(out)
        result[order] = np.clip(out, 0.0, 1.0)
        return result

    def sf(self, x):
        """Survival function 1 - F, computed without tail cancellation."""
        arr, scalar = _as_scalar_array(x)
        if self.density.sf is not None:
            out = np.clip(np.asarray(self.density.sf(arr), dtype=float), 0.0, 1.0)
            return float(out) if scalar else out
        if self.density.cdf is not None:
            out = 1.0 - np.clip(np.asarray(self.density.cdf(arr), dtype=float),
                                0.0, 1.0)
            return float(out) if scalar else out
        out = self._sf_quadrature(np.atleast_1d(arr))
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def _sf_quadrature(self, xs: np.ndarray) -> np.ndarray:
        l, u = self.support.lower, self.support.upper
        xs = np.clip(xs, l, u)
        order = np.argsort(xs, kind="stable")
        sx = xs[order]
        out = np.empty_like(sx)
        top = integrate(self.density.pdf, sx[-1], u, self.quad)
        out[-1] = top
        if len(sx) > 1:
            panels = integrate_panels(self.density.pdf, sx, self.quad)
            out[:-1] = top + np.cumsum(panels[::-1])[::-1]
        result = np.empty_like(out)
        result[order] = np.clip(out, 0.0, 1.0)
        return result

    def quantile(self, q):
        arr, scalar = _as_scalar_array(q)
        if np.any((arr <= 0.0) | (arr >= 1.0)):
            raise ValueError("quantile levels must lie strictly in (0, 1)")
        if self.density.quantile is not None:
            out = np.asarray(self.density.quantile(arr), dtype=float)
            return float(out) if scalar else out
        out = self._quantile_bisect(np.atleast_1d(arr))
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def _quantile_bisect(self, q: np.ndarray) -> np.ndarray:
        l, u = self.support.lower, self.support.upper
        lo = np.full_like(q, l if self.support.lower_finite else -1.0)
        hi = np.full_like(q, u if self.support.upper_finite else 1.0)
        if not self.support.lower_finite:
            step = 1.0
            for _ in range(64):
                mask = self.cdf(lo) > q
                if not np.any(mask):
                    break
                lo[mask] -= step
                step *= 2.0
            else:
                raise ValueError("bracket expansion failed at lower end")
        if not self.support.upper_finite:
            step = 1.0
            for _ in range(64):
                mask = self.cdf(hi) < q
                if not np.any(mask):
                    break
                hi[mask] += step
                step *= 2.0
            else:
                raise ValueError("bracket expansion failed at upper end")
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            fm = self.cdf(mid)
            high = fm >= q
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
            if np.all(np.abs(fm - q) <= _QUANTILE_TOL) and \
                    np.all(hi - lo <= 1e-13 * np.maximum(1.0, np.abs(mid))):
                break
        mid = 0.5 * (lo + hi)
        if np.any(np.abs(self.cdf(mid) - q) > _QUANTILE_TOL):
            raise ValueError(f"quantile bisection failed for {self.name!r}")
        return mid

    # ------------------------------------------------------------------
    # diffusion coefficient and derived fields
    # ------------------------------------------------------------------
    def _require_interior(self, x: float):
        if not (self.support.lower < x < self.support.upper):
            raise ValueError(
                f"x={x!r} is not interior to ({self.support.lower}, "
                f"{self.support.upper})")

    def _partial_first_moment(self, lo: float, hi: float, sign: float) -> float:
        """int_lo^hi sign*(m - t) p(t) dt, split at the mean to tame cancellation."""
        m = self.mean
        l = self.support.lower
        if lo == l and self.support.lower_finite and \
                self.density.pdf_lower_offset is not None:
            # Integrate in the offset v = t - l to keep full precision
            # through a singular lower edge.
            q = self.density.pdf_lower_offset
            shift = m - l

            def offset_integrand(v):
                return sign * (shift - v) * q(v)

            split = m - l if lo < m < hi else hi - l
            out = integrate(offset_integrand, 0.0, split, self.quad)
            if lo < m < hi:
                out += integrate(offset_integrand, m - l, hi - l, self.quad)
            return out
        pdf = self.density.pdf

        def integrand(t):
            return sign * (m - t) * pdf(t)

        if lo < m < hi:
            return integrate(integrand, lo, m, self.quad) + \
                integrate(integrand, m, hi, self.quad)
        return integrate(integrand, lo, hi, self.quad)

    def diffusion_coefficient(self, x: float, via: str = "auto") -> float:
        """a(x) > 0 for interior x; ``via`` picks closed form vs quadrature.

        The quadrature route integrates over the lighter side of the median:
        both integral forms of a(x) are identical, but far in a tail the
        opposite-side form loses all precision to cancellation.
        """
        self._require_interior(x)
        if via not in ("auto", "closed_form", "quadrature"):
            raise ValueError(f"unknown route {via!r}")
        if via in ("auto", "closed_form") and self.density.diffusion is not None:
            return float(np.asarray(self.density.diffusion(np.asarray(x)), dtype=float))
        if via == "closed_form":
            raise ValueError(f"{self.name!r} has no closed-form diffusion coefficient")
        p = float(self._pdf_checked(x)[0])
        if x <= self.median:
            return 2.0 * self._partial_first_moment(self.support.lower, x, +1.0) / p
        return 2.0 * self._partial_first_moment(x, self.support.upper, -1.0) / p

    def diffusion_forms(self, x: float):
        """Both integral forms of a(x), by quadrature (diagnostic)."""
        self._require_interior(x)
        p = float(self._pdf_checked(x)[0])
        left = 2.0 * self._partial_first_moment(self.support.lower, x, +1.0) / p
        right = 2.0 * self._partial_first_moment(x, self.support.upper, -1.0) / p
        return left, right

    def diffusion_on_grid(self, xs: np.ndarray, via: str = "auto") -> np.ndarray:
        """Vectorized a(x) on a sorted interior grid."""
        xs = np.asarray(xs, dtype=float)
        if via in ("auto", "closed_form") and self.density.diffusion is not None:
            return np.asarray(self.density.diffusion(xs), dtype=float)
        if via == "closed_form":
            raise ValueError(f"{self.name!r} has no closed-form diffusion coefficient")
        pdf = self.density.pdf
        m = self.mean

        def integrand(t):
            return (m - t) * pdf(t)

        base = self._partial_first_moment(self.support.lower, xs[0], +1.0)
        panels = integrate_panels(integrand, xs, self.quad)
        cumulative = base + np.concatenate([[0.0], np.cumsum(panels)])
        p = self._pdf_checked(xs)
        return 2.0 * cumulative / p

    def integrate_against_density(self, g: Callable, lo: float, hi: float) -> float:
        """int_lo^hi g(t) p(t) dt.

        When the range starts at a finite lower endpoint with an offset
        density available, the integral runs in the offset variable
        v = t - l: the singular factor is then evaluated exactly, and only
        the smooth g sees the (harmless) float rounding of l + v.
        """
        l = self.support.lower
        if lo == l and self.support.lower_finite and \
                self.density.pdf_lower_offset is not None:
            q = self.density.pdf_lower_offset

            def integrand(v):
                return g(l + v) * q(v)

            return integrate(integrand, 0.0, hi - l, self.quad)
        pdf = self.density.pdf
        return integrate(lambda t: g(t) * pdf(t), lo, hi, self.quad)

    def diffusion_at(self, xs) -> np.ndarray:
        """Vectorized a at arbitrary interior points (sorts internally)."""
        xs = np.asarray(xs, dtype=float)
        if self.density.diffusion is not None:
            return np.asarray(self.density.diffusion(xs), dtype=float)
        flat = xs.ravel()
        order = np.argsort(flat, kind="stable")
        out = np.empty_like(flat)
        out[order] = self.diffusion_on_grid(flat[order])
        return out.reshape(xs.shape)

    def fubini_residual(self, x: float) -> float:
        """Residual of int_l^x F = (x - m) F(x) + a(x) p(x) / 2."""
        self._require_interior(x)
        lhs = self._integral_of_cdf(x)
        rhs = (x - self.mean) * float(self.cdf(x)) + \
            0.5 * self.diffusion_coefficient(x) * float(self._pdf_checked(x)[0])
        return lhs - rhs

    def _integral_of_cdf(self, x: float) -> float:
        return integrate(lambda w: self.cdf(w), self.support.lower, x, self.quad)

    def _integral_of_survival(self, x: float) -> float:
        return integrate(lambda w: self.sf(w), x, self.support.upper, self.quad)

    def stein_factor(self, x: float) -> float:
        """S(x) = 8 (int_l^x F)(int_x^u (1-F)) / (a(x)^2 p(x))."""
        self._require_interior(x)
        p = float(self._pdf_checked(x)[0])
        a = self.diffusion_coefficient(x)
        return 8.0 * self._integral_of_cdf(x) * self._integral_of_survival(x) / (a * a * p)

    def stein_factor_on_grid(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized S on a sorted interior grid."""
        xs = np.asarray(xs, dtype=float)
        cdf = lambda w: self.cdf(w)
        surv = lambda w: self.sf(w)
        below = integrate(cdf, self.support.lower, xs[0], self.quad)
        f_panels = integrate_panels(cdf, xs, self.quad)
        int_f = below + np.concatenate([[0.0], np.cumsum(f_panels)])
        above = integrate(surv, xs[-1], self.support.upper, self.quad)
        s_panels = integrate_panels(surv, xs, self.quad)
        int_s = above + np.concatenate([np.cumsum(s_panels[::-1])[::-1], [0.0]])
        a = self.diffusion_on_grid(xs)
        p = self._pdf_checked(xs)
        return 8.0 * int_f * int_s / (a * a * p)

    def sup_stein_factor(self, grid: GridSpec = GridSpec(num_points=4095)):
        """Grid supremum of S over the quantile band; returns (value, argmax)."""
        xs = np.unique(self.quantile(grid.quantile_levels()))
        s = self.stein_factor_on_grid(xs)
        if not np.all(np.isfinite(s)):
            bad = xs[~np.isfinite(s)][0]
            raise ArithmeticError(f"S not finite at grid node x={bad!r}")
        k = int(np.argmax(s))
        return float(s[k]), float(xs[k])

    # ------------------------------------------------------------------
    # band, sampling, diagnostics
    # ------------------------------------------------------------------
    def quantile_band(self, q_min: float = 1e-4):
        key = float(q_min)
        if key not in self._band_cache:
            self._band_cache[key] = (float(self.quantile(q_min)),
                                     float(self.quantile(1.0 - q_min)))
        return self._band_cache[key]

    def require_in_band(self, x: float, q_min: float = 1e-4) -> None:
        lo, hi = self.quantile_band(q_min)
        if not (lo <= x <= hi):
            raise BoundaryProximityError(
                f"x={x!r} outside the [{q_min}, {1 - q_min}] quantile band "
                f"[{lo!r}, {hi!r}] of {self.name!r}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling."""
        u = rng.random(n)
        u = np.clip(u, 1e-15, 1.0 - 1e-15)
        return np.asarray(self.quantile(u), dtype=float)

    def edge_condition_report(self) -> ConditionDiagnostics:
        """Numerical surrogates for the edge conditions, with a(x) as its own
        smooth companion (valid whenever a is C^1 on the support)."""
        verdicts = {}
        grid_meta = {}
        lower_liminf = upper_liminf = None
        lower_slope = upper_slope = None

        def liminf_surrogate(side: str):
            sign = -1.0 if side == "lower" else 1.0
            xs = []
            for k in range(0, 21):
                x = sign * float(2 ** k)
                if not (self.support.lower < x < self.support.upper):
                    continue
                try:
                    if self.density.diffusion is None:
                        self._pdf_checked(x)
                    xs.append(x)
                except DensityUnderflowError:
                    break
            if not xs:
                return None, []
            vals = [self.diffusion_coefficient(x) for x in xs]
            return float(min(vals)), xs

        if not self.support.lower_finite:
            lower_liminf, xs = liminf_surrogate("lower")
            grid_meta["lower_grid"] = xs
            if lower_liminf is None:
                verdicts["condition1_lower"] = "inconclusive"
            else:
                verdicts["condition1_lower"] = "pass" if lower_liminf > 1e-6 else "fail"
        else:
            verdicts["condition1_lower"] = "pass"  # vacuous: no infinite endpoint
        if not self.support.upper_finite:
            upper_liminf, xs = liminf_surrogate("upper")
            grid_meta["upper_grid"] = xs
            if upper_liminf is None:
                verdicts["condition1_upper"] = "inconclusive"
            else:
                verdicts["condition1_upper"] = "pass" if upper_liminf > 1e-6 else "fail"
        else:
            verdicts["condition1_upper"] = "pass"

        # Finite endpoints: sign of the companion's slope approaching the edge.
        def edge_slope(x0: float, direction: float):
            band = self.quantile_band(1e-4)
            width = (band[1] - band[0]) or 1.0
            h = 1e-5 * width
            x1 = x0 + direction * h
            x2 = x0 + direction * 2 * h
            try:
                a1 = self.diffusion_coefficient(x1)
                a2 = self.diffusion_coefficient(x2)
            except (DensityUnderflowError, QuadratureError):
                return None
            return (a2 - a1) / (direction * h)

        if self.support.lower_finite:
            lo_q = float(self.quantile(1e-7))
            lower_slope = edge_slope(lo_q, +1.0)
            if lower_slope is None:
                verdicts["condition2_slope_lower"] = "inconclusive"
            else:
                verdicts["condition2_slope_lower"] = \
                    "pass" if lower_slope >= -1e-6 else "inconclusive"
        else:
            verdicts["condition2_slope_lower"] = "pass"
        if self.support.upper_finite:
            hi_q = float(self.quantile(1.0 - 1e-7))
            upper_slope = edge_slope(hi_q, -1.0)
            if upper_slope is None:
                verdicts["condition2_slope_upper"] = "inconclusive"
            else:
                verdicts["condition2_slope_upper"] = \
                    "pass" if upper_slope <= 1e-6 else "inconclusive"
        else:
            verdicts["condition2_slope_upper"] = "pass"

        # With the companion equal to a itself, both ratio clauses hold exactly.
        verdicts["condition2_ratio_lower"] = "pass"
        verdicts["condition2_ratio_upper"] = "pass"

        return ConditionDiagnostics(
            measure=self.name,
            lower_liminf=lower_liminf,
            upper_liminf=upper_liminf,
            lower_slope=lower_slope,
            upper_slope=upper_slope,
            ratio_extremes=(1.0, 1.0),
            grid=grid_meta,
            verdicts=verdicts,
        )


# ----------------------------------------------------------------------
# built-in measures
# ----------------------------------------------------------------------
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def gaussian_std(quad: Optional[QuadratureConfig] = None) -> TargetMeasure:
    """Standard normal; a(x) = 2 identically."""
    density = DensitySpec(
        pdf=lambda x: np.exp(-0.5 * np.asarray(x, dtype=float) ** 2) / _SQRT_2PI,
        name="gaussian",
        cdf=special.ndtr,
        sf=lambda x: special.ndtr(-np.asarray(x, dtype=float)),
        quantile=special.ndtri,
        mean=0.0,
        diffusion=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
    )
    return TargetMeasure(SupportInterval(-np.inf, np.inf), density, quad)


def centered_gamma(quad: Optional[QuadratureConfig] = None) -> TargetMeasure:
    """Law of Z^2 - 1 on (-1, inf); a(x) = 4(x + 1), mean 0."""

    def pdf(x):
        x = np.asarray(x, dtype=float)
        v = x + 1.0
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-0.5 * v[pos]) / (np.sqrt(v[pos]) * _SQRT_2PI)
        return out

    def pdf_lower_offset(v):
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-0.5 * v[pos]) / (np.sqrt(v[pos]) * _SQRT_2PI)
        return out

    density = DensitySpec(
        pdf=pdf,
        name="centered_gamma",
        cdf=lambda x: 2.0 * special.ndtr(np.sqrt(np.maximum(
            np.asarray(x, dtype=float) + 1.0, 0.0))) - 1.0,
        sf=lambda x: 2.0 * special.ndtr(-np.sqrt(np.maximum(
            np.asarray(x, dtype=float) + 1.0, 0.0))),
        quantile=lambda q: special.ndtri(
            0.5 * (np.asarray(q, dtype=float) + 1.0)) ** 2 - 1.0,
        mean=0.0,
        diffusion=lambda x: 4.0 * (np.asarray(x, dtype=float) + 1.0),
        pdf_lower_offset=pdf_lower_offset,
    )
    return TargetMeasure(SupportInterval(-1.0, np.inf), density, quad)


def uniform01(quad: Optional[QuadratureConfig] = None) -> TargetMeasure:
    """Uniform on (0, 1); a(x) = x(1 - x)."""

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0.0) & (x < 1.0), 1.0, 0.0)

    density = DensitySpec(
        pdf=pdf,
        name="uniform01",
        cdf=lambda x: np.clip(np.asarray(x, dtype=float), 0.0, 1.0),
        sf=lambda x: np.clip(1.0 - np.asarray(x, dtype=float), 0.0, 1.0),
        quantile=lambda q: np.asarray(q, dtype=float),
        mean=0.5,
        diffusion=lambda x: np.asarray(x, dtype=float) * (1.0 - np.asarray(x, dtype=float)),
    )
    return TargetMeasure(SupportInterval(0.0, 1.0), density, quad)


def beta_measure(alpha: float, beta: float,
                 quad: Optional[QuadratureConfig] = None) -> TargetMeasure:
    """Beta(alpha, beta) on (0, 1); diffusion coefficient by quadrature."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("beta parameters must be positive")
    log_norm = special.betaln(alpha, beta)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        ok = (x > 0.0) & (x < 1.0)
        xo = x[ok]
        out[ok] = np.exp((alpha - 1.0) * np.log(xo) +
                         (beta - 1.0) * np.log1p(-xo) - log_norm)
        return out

    density = DensitySpec(
        pdf=pdf,
        name=f"beta:{alpha:g},{beta:g}",
        cdf=lambda x: special.betainc(alpha, beta,
                                      np.clip(np.asarray(x, dtype=float), 0.0, 1.0)),
        sf=lambda x: special.betainc(beta, alpha, np.clip(
            1.0 - np.asarray(x, dtype=float), 0.0, 1.0)),
        quantile=lambda q: special.betaincinv(alpha, beta, np.asarray(q, dtype=float)),
        mean=alpha / (alpha + beta),
    )
    return TargetMeasure(SupportInterval(0.0, 1.0), density, quad)


def lognormal01(quad: Optional[QuadratureConfig] = None) -> TargetMeasure:
    """exp(Z) for standard normal Z; diffusion coefficient by quadrature.

    The upper tail is subexponential, so the algebraic tail transform is
    used for improper integrals against this density.
    """
    if quad is None:
        quad = QuadratureConfig(tail_upper="algebraic")

    def pdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0.0
        lx = np.log(x[pos])
        out[pos] = np.exp(-0.5 * lx * lx) / (x[pos] * _SQRT_2PI)
        return out

    density = DensitySpec(
        pdf=pdf,
        name="lognormal01",
        cdf=lambda x: special.ndtr(np.log(np.maximum(np.asarray(x, dtype=float), 1e-320))),
        sf=lambda x: special.ndtr(-np.log(np.maximum(np.asarray(x, dtype=float), 1e-320))),
        quantile=lambda q: np.exp(special.ndtri(np.asarray(q, dtype=float))),
        mean=math.exp(0.5),
    )
    return TargetMeasure(SupportInterval(0.0, np.inf), density, quad)


BUILTIN_NAMES = ("gaussian", "centered_gamma", "uniform01", "beta:a,b", "lognormal01")


def resolve_measure(name: str, quad: Optional[QuadratureConfig] = None) -> TargetMeasure:
    """Build a built-in measure from its name string (e.g. "beta:2,3")."""
    key = name.strip().lower()
    if key == "gaussian":
        return gaussian_std(quad)
    if key == "centered_gamma":
        return centered_gamma(quad)
    if key == "uniform01":
        return uniform01(quad)
    if key == "lognormal01":
        return lognormal01(quad)
    if key.startswith("beta:"):
        params = key.split(":", 1)[1].split(",")
        if len(params) != 2:
            raise ValueError(f"beta measure needs two parameters, got {name!r}")
        return beta_measure(float(params[0]), float(params[1]), quad)
    raise ValueError(f"unknown measure {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}")


def _parse_endpoint(text: str) -> float:
    t = text.strip().lower()
    if t in ("-inf", "-infinity"):
        return -np.inf
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return np.inf
    return float(t)


def measure_from_config(path, quad: Optional[QuadratureConfig] = None,
                        mass_tol: float = 1e-6) -> TargetMeasure:
    """Load a user-defined density from a flat key-value file.

    Recognized keys: ``name``, ``support`` ("lower, upper", endpoints may be
    "-inf"/"inf"), ``density`` (an expression in the arithmetic grammar) and
    optionally ``mean``.  Lines starting with '#' are comments.
    """
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            entries[key.strip().lower()] = value.strip()
    for required in ("support", "density"):
        if required not in entries:
            raise ValueError(f"{path}: missing required key {required!r}")
    parts = entries["support"].split(",")
    if len(parts) != 2:
        raise ValueError(f"{path}: support must be 'lower, upper'")
    support = SupportInterval(_parse_endpoint(parts[0]), _parse_endpoint(parts[1]))
    pdf = parse_expression(entries["density"])
    mean = float(entries["mean"]) if "mean" in entries else None
    density = DensitySpec(pdf=pdf, name=entries.get("name", "custom"), mean=mean)
    return TargetMeasure(support, density, quad, mass_tol=mass_tol)
