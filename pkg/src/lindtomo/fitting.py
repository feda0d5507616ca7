"""Slope-at-intercept estimation with uncertainty quantification.

Provides weighted chi-square polynomial fits with full coefficient
covariance, a robust two-phase L1 / L-infinity fit with worst-case
guarantees under a contamination model, Chebyshev time utilities, and
Rice-distribution quantile intervals for reported parameter magnitudes.

The robust fit assumes at least half the samples lie within ``sigma`` of an
underlying degree-K polynomial.  Phase one minimizes the interval-weighted
L1 loss

    L1(p) = sum_j |I_j| mean_{t_i in I_j} |y_i - p(t_i)|

over a Chebyshev partition {I_j}; phase two iteratively fits minimax
corrections to the interval medians of the residuals.  Both phases are
solved as small linear programs.  The resulting total polynomial deviates
from the truth by at most 3 sigma in sup norm over the fit window, which
implies the derivative-at-intercept bounds

    |p'(0) - q'(0)| <= 3 e sigma / t_min          (diverges as t_min -> 0)
    |p'(0) - q'(0)| <= 3 sigma tbar / tdelta^2    (finite on grids with t=0)

with tbar = (t_max + t_min)/2 and tdelta = (t_max - t_min)/2; the smaller of
the two is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import chndtr

from .errors import FitError


@dataclass
class FitResult:
    """Weighted polynomial fit: coefficients p0..pK and their covariance."""

    coefficients: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    @property
    def slope_error(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])


def chi2_polyfit(times, values, sigmas, degree: int = 1) -> FitResult:
    """Weighted least squares on a polynomial of the given degree.

    The covariance is the inverse normal matrix of the weighted design, so
    halving every sigma halves every coefficient error.  Exact on noiseless
    polynomial data.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if t.shape != y.shape or t.shape != s.shape:
        raise FitError("times, values and sigmas must have equal length")
    if t.size < degree + 2:
        raise FitError(f"need at least {degree + 2} points for degree {degree}")
    if np.any(s <= 0):
        raise FitError("all sigmas must be positive")
    v = np.vander(t, degree + 1, increasing=True)
    w = 1.0 / s**2
    normal = v.T @ (w[:, None] * v)
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise FitError("normal matrix is singular (degenerate time grid)") from exc
    coeff = cov @ (v.T @ (w * y))
    resid = y - v @ coeff
    chi2 = float(np.sum((resid / s) ** 2))
    return FitResult(coeff, cov, chi2, t.size - (degree + 1))


# ---------------------------------------------------------------------------
# Chebyshev time utilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChebyshevPartition:
    """Cosine-spaced tiling of [t_min, t_max] into M subintervals.

    Interval j (1-based, stored at index j-1) is
    [cos(pi j / M), cos(pi (j-1) / M)] mapped affinely onto the window, so
    the first interval is the rightmost.
    """

    t_min: float
    t_max: float
    m: int
    intervals: tuple[tuple[float, float], ...]

    @property
    def widths(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.intervals])

    def assign(self, times: np.ndarray) -> np.ndarray:
        """Index (0-based, paper order) of the interval containing each time."""
        edges_desc = np.array([self.intervals[0][1]]
                              + [iv[0] for iv in self.intervals])
        asc = edges_desc[::-1]
        idx_asc = np.clip(np.searchsorted(asc, times, side="right") - 1,
                          0, self.m - 1)
        return self.m - 1 - idx_asc


def chebyshev_partition(t_min: float, t_max: float, m: int) -> ChebyshevPartition:
    if t_max <= t_min:
        raise ValueError("t_max must exceed t_min")
    if m < 1:
        raise ValueError("need at least one interval")
    tbar = 0.5 * (t_max + t_min)
    tdelta = 0.5 * (t_max - t_min)
    edges = tbar + tdelta * np.cos(np.pi * np.arange(m + 1) / m)
    edges[0], edges[-1] = t_max, t_min  # pin float dust at the ends
    intervals = tuple((float(edges[j]), float(edges[j - 1]))
                      for j in range(1, m + 1))
    return ChebyshevPartition(t_min, t_max, m, intervals)


def chebyshev_sample_times(t_min: float, t_max: float, count: int,
                           rng: np.random.Generator) -> np.ndarray:
    """I.i.d. draws from the arcsine (Chebyshev) measure on the window."""
    if t_max <= t_min:
        raise ValueError("t_max must exceed t_min")
    if count < 1:
        raise ValueError("count must be positive")
    tbar = 0.5 * (t_max + t_min)
    tdelta = 0.5 * (t_max - t_min)
    return tbar + tdelta * np.cos(np.pi * rng.random(count))


# ---------------------------------------------------------------------------
# Robust two-phase fit
# ---------------------------------------------------------------------------

@dataclass
class RobustFitResult:
    coefficients: np.ndarray          # total polynomial p + sum_k q_k
    iterations: int
    sigma: float | None
    sup_bound: float | None           # 3 sigma
    derivative_bound: float | None    # min of the two bounds below
    bound_tmin: float | None          # 3 e sigma / t_min
    bound_window: float | None        # 3 sigma tbar / tdelta^2
    partition: ChebyshevPartition = field(repr=False, default=None)

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])


def _solve_l1(t, y, weights, degree) -> np.ndarray:
    """Minimize sum_i w_i |y_i - p(t_i)| as an LP with split residuals."""
    npts = t.size
    ncoef = degree + 1
    v = np.vander(t, ncoef, increasing=True)
    c = np.concatenate([np.zeros(ncoef), weights])
    a_ub = np.zeros((2 * npts, ncoef + npts))
    a_ub[:npts, :ncoef] = -v
    a_ub[:npts, ncoef:] = -np.eye(npts)
    a_ub[npts:, :ncoef] = v
    a_ub[npts:, ncoef:] = -np.eye(npts)
    b_ub = np.concatenate([-y, y])
    bounds = [(None, None)] * ncoef + [(0, None)] * npts
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise FitError(f"L1 linear program failed: {res.message}")
    return res.x[:ncoef]


def _solve_linf(tpts, targets, degree) -> np.ndarray:
    """Minimize max_j |p(t_j) - target_j| as an LP with one bound variable."""
    npts = tpts.size
    ncoef = degree + 1
    v = np.vander(tpts, ncoef, increasing=True)
    c = np.zeros(ncoef + 1)
    c[-1] = 1.0
    a_ub = np.zeros((2 * npts, ncoef + 1))
    a_ub[:npts, :ncoef] = v
    a_ub[:npts, -1] = -1.0
    a_ub[npts:, :ncoef] = -v
    a_ub[npts:, -1] = -1.0
    b_ub = np.concatenate([targets, -targets])
    bounds = [(None, None)] * ncoef + [(0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise FitError(f"L-infinity linear program failed: {res.message}")
    return res.x[:ncoef]


def robust_polyfit(times, values, degree: int = 1, n_intervals: int | None = None,
                   stop_threshold: float | None = None, max_iters: int = 50,
                   sigma: float | None = None,
                   sigmas=None) -> RobustFitResult:
    """Two-phase robust polynomial fit over a Chebyshev partition.

    ``sigma`` is the contamination level entering the reported bounds; when
    omitted it is taken as the largest per-point standard error in
    ``sigmas`` (bounds are left unset if neither is given).  Representative
    points are interval midpoints.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape:
        raise FitError("times and values must have equal length")
    if n_intervals is None:
        n_intervals = max(degree + 2, 6)
    if n_intervals < degree + 1:
        raise FitError("need at least degree + 1 intervals")
    part = chebyshev_partition(float(t.min()), float(t.max()), n_intervals)
    which = part.assign(t)
    counts = np.bincount(which, minlength=part.m)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise FitError(
            "empty Chebyshev intervals (1-based): "
            + ", ".join(str(j + 1) for j in empty))
    if stop_threshold is None:
        scale = float(np.ptp(y)) or 1.0
        stop_threshold = 1e-3 * scale

    weights = part.widths[which] / counts[which]
    p_tot = _solve_l1(t, y, weights, degree)
    z = y - np.vander(t, degree + 1, increasing=True) @ p_tot

    midpoints = np.array([(lo + hi) / 2 for lo, hi in part.intervals])
    vmid = np.vander(midpoints, degree + 1, increasing=True)
    vdata = np.vander(t, degree + 1, increasing=True)
    iterations = 0
    for _ in range(max_iters):
        medians = np.array([np.median(z[which == j]) for j in range(part.m)])
        q = _solve_linf(midpoints, medians, degree)
        p_tot = p_tot + q
        z = z - vdata @ q
        iterations += 1
        if np.max(np.abs(vmid @ q)) < stop_threshold:
            break

    if sigma is None and sigmas is not None:
        sigma = float(np.max(np.asarray(sigmas, dtype=float)))
    sup_bound = bound_tmin = bound_window = deriv = None
    if sigma is not None:
        tbar = 0.5 * (part.t_max + part.t_min)
        tdelta = 0.5 * (part.t_max - part.t_min)
        sup_bound = 3.0 * sigma
        bound_window = 3.0 * sigma * tbar / tdelta**2
        bound_tmin = 3.0 * math.e * sigma / part.t_min if part.t_min > 0 else np.inf
        deriv = min(bound_tmin, bound_window)
    return RobustFitResult(p_tot, iterations, sigma, sup_bound, deriv,
                           bound_tmin, bound_window, part)


# ---------------------------------------------------------------------------
# Rice-distribution magnitude intervals
# ---------------------------------------------------------------------------

def rice_cdf(x: float, nu: float, sigma: float) -> float:
    """CDF of the Rice(nu, sigma) distribution (noncentral chi-square form)."""
    if x <= 0:
        return 0.0
    return float(chndtr((x / sigma) ** 2, 2.0, (nu / sigma) ** 2))


def rice_quantiles(nu: float, sigma: float,
                   levels: tuple[float, ...] = (0.16, 0.84)) -> tuple[float, ...]:
    """Quantiles of Rice(nu, sigma) via bisection on the integrated density.

    Reduces to the Rayleigh quantiles sigma * sqrt(-2 ln(1 - q)) at nu = 0
    and to nu + sigma * Phi^-1(q) in the large-nu Gaussian limit.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    out = []
    for q in levels:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {q}")
        hi = nu + sigma * (8.0 + math.sqrt(-2.0 * math.log(min(1e-12, (1 - q) / 2))))
        while rice_cdf(hi, nu, sigma) < q:
            hi *= 2.0
        out.append(float(brentq(lambda x: rice_cdf(x, nu, sigma) - q,
                                0.0, hi, xtol=1e-12, rtol=1e-13)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Parameter packaging
# ---------------------------------------------------------------------------

@dataclass
class ParameterEstimate:
    """A recovered Lindblad coefficient with magnitude interval.

    ``value`` is real for coherent terms and diagonal dissipation entries,
    complex for off-diagonal dissipation entries.  The interval is the
    (16%, 84%) Rice quantile pair at (|value|, stderr).
    """

    label: str
    kind: str  # "real-coherent" | "real-dissipative" | "complex-dissipative"
    value: complex
    stderr: float
    magnitude: float
    q16: float
    q84: float
    heteroscedastic: bool = False

    @property
    def consistent_with_zero_at(self) -> float:
        """|value| / stderr, the z-score against a zero parameter."""
        if self.stderr == 0:
            return np.inf if self.magnitude else 0.0
        return self.magnitude / self.stderr


def slope_to_parameter(components, kind: str, label: str = "",
                       levels: tuple[float, float] = (0.16, 0.84)) -> ParameterEstimate:
    """Package fitted slope component(s) into a parameter estimate.

    Real kinds take one (value, stderr) pair; the complex kind takes the
    (real, imag) pair.  Unequal component errors are folded into the larger
    one and flagged.
    """
    comps = list(components)
    if kind.startswith("real"):
        if len(comps) != 1:
            raise ValueError(f"{kind} parameter needs one component, got {len(comps)}")
        value, err = comps[0]
        value = float(value)
        magnitude = abs(value)
        sigma = float(err)
        hetero = False
    elif kind == "complex-dissipative":
        if len(comps) != 2:
            raise ValueError("complex parameter needs (re, im) components")
        (re, ere), (im, eim) = comps
        value = complex(re, im)
        magnitude = math.hypot(re, im)
        sigma = float(max(ere, eim))
        hetero = bool(abs(ere - eim) > 1e-9 * max(ere, eim, 1e-300))
    else:
        raise ValueError(f"unknown parameter kind {kind!r}")
    if sigma > 0:
        q16, q84 = rice_quantiles(magnitude, sigma, levels)
    else:
        q16 = q84 = magnitude
    return ParameterEstimate(label, kind, value, sigma, magnitude, q16, q84, hetero)
