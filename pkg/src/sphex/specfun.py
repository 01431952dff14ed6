"""Scalar special functions for random spherical eigenfunctions.

This module collects the closed-form ingredients everything else is built
from: eigenspace dimensions of the Laplacian on the d-sphere, normalized
Gegenbauer polynomials and their Bessel-type high-degree approximation,
Bessel functions of integer and half-integer order, Gaussian distribution
helpers, and the limiting densities of critical values for degree-ell
eigenfunctions on the 2-sphere.

Everything here is deterministic, scalar-or-vectorized, and has no
dependency on the sampling machinery.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate
from scipy.special import erfc, gammaln

__all__ = [
    "CriticalKind",
    "GaussianValues",
    "HarmonicLevel",
    "bessel_j",
    "cdf_derivative",
    "critical_density",
    "critical_tail",
    "eigenspace_dim",
    "gaussian",
    "gegenbauer",
    "gegenbauer_hilb",
    "hilb_error_budget",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_MAX_INT64 = 2**63 - 1

ArrayLike = Union[float, np.ndarray]


class CriticalKind(enum.Enum):
    """Classification labels for critical points / critical-value densities."""

    CRITICAL = "critical"
    EXTREMUM = "extremum"
    SADDLE = "saddle"
    MINIMUM = "minimum"
    MAXIMUM = "maximum"


def eigenspace_dim(ell: int, dim: int) -> int:
    """Dimension of the degree-``ell`` eigenspace of the Laplacian on S^dim.

    Computed in exact integer arithmetic as

        n = (2*ell + dim - 1) / ell * C(ell + dim - 2, ell - 1)

    for ell >= 1, and n = 1 for ell = 0 (constants).  The division is exact.

    Raises ``OverflowError`` if the result does not fit in a signed 64-bit
    integer, and ``ValueError`` for ell < 0 or dim < 2.
    """
    if not isinstance(ell, (int, np.integer)) or isinstance(ell, bool):
        raise ValueError(f"ell must be an integer, got {ell!r}")
    if not isinstance(dim, (int, np.integer)) or isinstance(dim, bool):
        raise ValueError(f"dim must be an integer, got {dim!r}")
    ell = int(ell)
    dim = int(dim)
    if ell < 0:
        raise ValueError(f"ell must be >= 0, got {ell}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if ell == 0:
        return 1
    num = (2 * ell + dim - 1) * math.comb(ell + dim - 2, ell - 1)
    n, rem = divmod(num, ell)
    if rem:  # pragma: no cover - the division is provably exact
        raise ArithmeticError("eigenspace dimension formula produced a remainder")
    if n > _MAX_INT64:
        raise OverflowError(
            f"eigenspace dimension for ell={ell}, dim={dim} exceeds int64"
        )
    return n


@dataclass(frozen=True)
class HarmonicLevel:
    """A Laplace eigenspace on the unit d-sphere, identified by (ell, dim).

    ``dim`` is the dimension of the sphere itself (so dim=2 is the ordinary
    sphere in R^3).  ``n`` is the eigenspace dimension and ``eigenvalue`` is
    ell * (ell + dim - 1).
    """

    ell: int
    dim: int = 2

    def __post_init__(self) -> None:
        eigenspace_dim(self.ell, self.dim)  # validates and checks capacity

    @property
    def n(self) -> int:
        return eigenspace_dim(self.ell, self.dim)

    @property
    def eigenvalue(self) -> int:
        return self.ell * (self.ell + self.dim - 1)

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1


def _as_float_array(x: ArrayLike) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def gegenbauer(ell: int, dim: int, t: ArrayLike) -> ArrayLike:
    """Normalized Gegenbauer polynomial G_ell^{(d)}(t) with G(1) = 1.

    This is the covariance function of the normalized random eigenfunction
    ensemble: for dim=2 it reduces to the Legendre polynomial P_ell, for
    dim=3 to the Chebyshev-U ratio U_ell(t) / (ell + 1).  Evaluated by the
    three-term recurrence

        G_0 = 1,   G_1 = t,
        G_k = [ (2k + d - 3) t G_{k-1} - (k - 1) G_{k-2} ] / (k + d - 2),

    which keeps |G| <= 1 on [-1, 1].  ``t`` may be a scalar or array;
    values with |t| > 1 + 1e-9 raise ``ValueError`` (smaller excursions,
    which arise from rounded inner products, are clipped to [-1, 1]).
    """
    if ell < 0:
        raise ValueError(f"ell must be >= 0, got {ell}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    arr, scalar = _as_float_array(t)
    if np.any(np.abs(arr) > 1.0 + 1e-9):
        bad = np.max(np.abs(arr))
        raise ValueError(f"|t| must be <= 1 (max |t| = {bad:.3e})")
    x = np.clip(arr, -1.0, 1.0)
    if ell == 0:
        out = np.ones_like(x)
        return float(out) if scalar else out
    prev = np.ones_like(x)
    cur = x.copy()
    for k in range(2, ell + 1):
        nxt = ((2 * k + dim - 3) * x * cur - (k - 1) * prev) / (k + dim - 2)
        prev, cur = cur, nxt
    return float(cur) if scalar else cur


def bessel_j(order: float, x: ArrayLike) -> ArrayLike:
    """Bessel function J_nu(x) for nu = k/2 (k a nonnegative integer), x >= 0.

    Small arguments (x < 12) use the ascending power series; large arguments
    seed the order recurrence from the asymptotic expansions of J_0, J_1
    (integer nu) or the closed forms of J_{1/2}, J_{3/2} (half-integer nu)
    and recur upward, which is stable because nu < x on that branch.
    """
    two_nu = 2.0 * order
    if order < 0 or abs(two_nu - round(two_nu)) > 1e-12:
        raise ValueError(f"order must be a nonnegative half-integer, got {order}")
    arr, scalar = _as_float_array(x)
    if np.any(arr < 0):
        raise ValueError("x must be >= 0")
    out = np.empty_like(arr)
    small = arr < 12.0
    if np.any(small):
        out[small] = _bessel_series(order, arr[small])
    if np.any(~small):
        out[~small] = _bessel_large(order, arr[~small])
    return float(out) if scalar else out


def _bessel_series(nu: float, x: np.ndarray) -> np.ndarray:
    """Ascending series sum_m (-1)^m / (m! Gamma(m+nu+1)) (x/2)^{2m+nu}."""
    half = x / 2.0
    with np.errstate(divide="ignore"):
        log_t0 = nu * np.log(np.where(half > 0, half, 1.0)) - gammaln(nu + 1.0)
    term = np.where(half > 0, np.exp(log_t0), 1.0 if nu == 0 else 0.0)
    total = term.copy()
    hh = half * half
    for m in range(1, 300):
        term = -term * hh / (m * (m + nu))
        total += term
        if np.all(np.abs(term) <= 1e-18 * (np.abs(total) + 1e-300)):
            return total
    raise RuntimeError("Bessel series failed to converge")


def _bessel_asymptotic(nu: float, x: np.ndarray) -> np.ndarray:
    """Hankel asymptotic expansion, truncated at the smallest term."""
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    inv8x = 1.0 / (8.0 * x)
    sign = 1.0
    for k in range(1, 30):
        term = term * (mu - (2 * k - 1) ** 2) * inv8x / k
        if np.all(np.abs(term) < 1e-18):
            break
        if k % 2 == 1:
            q += sign * term
        else:
            sign = -sign
            p += sign * term
    chi = x - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def _bessel_large(nu: float, x: np.ndarray) -> np.ndarray:
    if nu == int(nu):
        j_lo = _bessel_asymptotic(0.0, x)
        j_hi = _bessel_asymptotic(1.0, x)
        lo_order = 0.0
    else:
        pref = np.sqrt(2.0 / (math.pi * x))
        j_lo = pref * np.sin(x)
        j_hi = pref * (np.sin(x) / x - np.cos(x))
        lo_order = 0.5
    if nu == lo_order:
        return j_lo
    if nu == lo_order + 1.0:
        return j_hi
    k = lo_order + 1.0
    while k < nu:
        j_lo, j_hi = j_hi, (2.0 * k / x) * j_hi - j_lo
        k += 1.0
    return j_hi


def gegenbauer_hilb(ell: int, dim: int, theta: ArrayLike) -> ArrayLike:
    """Bessel main term of the high-degree approximation to G_ell^{(d)}(cos theta).

    For theta in (0, pi/2] and L = ell + (dim - 1)/2,

        G_ell(cos theta) ~ 2^{d/2-1} / C(ell + d/2 - 1, ell)
                            * (sin theta)^{1 - d/2} * a
                            * sqrt(theta / sin theta) * J_{d/2-1}(L theta),

    with a = Gamma(ell + d/2) / (L^{d/2-1} ell!).  The prefactors are
    assembled in log space so large ``ell`` does not overflow.  theta
    outside (0, pi/2] raises ``ValueError``.
    """
    if ell < 0:
        raise ValueError(f"ell must be >= 0, got {ell}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    arr, scalar = _as_float_array(theta)
    if np.any(arr <= 0.0) or np.any(arr > math.pi / 2.0 + 1e-12):
        raise ValueError("theta must lie in (0, pi/2]")
    big_l = ell + (dim - 1) / 2.0
    nu = dim / 2.0 - 1.0
    # log of 2^nu / C(ell+d/2-1, ell) * Gamma(ell+d/2) / (L^nu * ell!)
    log_binom = gammaln(ell + dim / 2.0) - gammaln(ell + 1.0) - gammaln(dim / 2.0)
    log_a = gammaln(ell + dim / 2.0) - nu * math.log(big_l) - gammaln(ell + 1.0)
    coef = math.exp(nu * math.log(2.0) - log_binom + log_a)
    s = np.sin(arr)
    vals = coef * s ** (-nu) * np.sqrt(arr / s) * bessel_j(nu, big_l * arr)
    return float(vals) if scalar else vals


def hilb_error_budget(
    ell: int, dim: int, theta: ArrayLike, K: float = 1.0
) -> ArrayLike:
    """Unit-constant error budget for the Bessel main term.

    Two regimes, split at theta = 1/(K*ell): above the split the remainder
    scales like sqrt(theta) * ell^{-3/2}; below it like
    theta^{d/2+1} * ell^{d/2-1}.  The returned budget carries constant 1 in
    both regimes; it is meant for rate checks, not sharp certification.
    """
    if ell < 1:
        raise ValueError(f"ell must be >= 1, got {ell}")
    if K <= 0:
        raise ValueError(f"K must be > 0, got {K}")
    arr, scalar = _as_float_array(theta)
    if np.any(arr <= 0.0) or np.any(arr > math.pi / 2.0 + 1e-12):
        raise ValueError("theta must lie in (0, pi/2]")
    split = 1.0 / (K * ell)
    inner = arr ** (dim / 2.0 + 1.0) * float(ell) ** (dim / 2.0 - 1.0)
    outer = np.sqrt(arr) * float(ell) ** (-1.5)
    vals = np.where(arr < split, inner, outer)
    return float(vals) if scalar else vals


@dataclass(frozen=True)
class GaussianValues:
    pdf: ArrayLike
    cdf: ArrayLike
    tail: ArrayLike


def gaussian(u: ArrayLike) -> GaussianValues:
    """Standard normal density, CDF and upper tail, all through erfc.

    Using erfc keeps the tail accurate far into the extremes (tail(40)
    underflows gracefully instead of returning 1 - 1).
    """
    arr, scalar = _as_float_array(u)
    pdf = np.exp(-0.5 * arr * arr) / _SQRT_2PI
    cdf = 0.5 * erfc(-arr / math.sqrt(2.0))
    tail = 0.5 * erfc(arr / math.sqrt(2.0))
    if scalar:
        return GaussianValues(float(pdf), float(cdf), float(tail))
    return GaussianValues(pdf, cdf, tail)


def cdf_derivative(q: int, u: ArrayLike) -> ArrayLike:
    """q-th derivative of the standard normal CDF, q >= 1.

    d^q/du^q Phi(u) = (-1)^{q-1} He_{q-1}(u) phi(u), with He_k the
    probabilists' Hermite polynomials (He_0 = 1, He_1 = u).  q = 0 is a
    domain error: the CDF itself is not a derivative.
    """
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool):
        raise ValueError(f"q must be an integer, got {q!r}")
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    arr, scalar = _as_float_array(u)
    he_prev = np.ones_like(arr)
    he = arr.copy()
    if q - 1 == 0:
        hermite = he_prev
    elif q - 1 == 1:
        hermite = he
    else:
        for k in range(1, q - 1):
            he_prev, he = he, arr * he - k * he_prev
        hermite = he
    pdf = np.exp(-0.5 * arr * arr) / _SQRT_2PI
    vals = (-1.0) ** (q - 1) * hermite * pdf
    return float(vals) if scalar else vals


def _coerce_kind(kind: Union[CriticalKind, str]) -> CriticalKind:
    if isinstance(kind, CriticalKind):
        return kind
    try:
        return CriticalKind(str(kind))
    except ValueError:
        raise ValueError(f"unknown critical kind {kind!r}") from None


def critical_density(kind: Union[CriticalKind, str], u: ArrayLike) -> ArrayLike:
    """Limiting density of critical values of normalized eigenfunctions on S^2.

    As ell -> infinity the expected number of critical points of h_ell with
    value in [u, u + du], divided by ell^2, converges to psi_kind(u) du with

        psi_critical(u) = (2 e^{-u^2} + u^2 - 1) phi(u) / ... (see below)
        psi_extremum(u) = (e^{-u^2} + u^2 - 1) e^{-u^2/2} / sqrt(2 pi)
        psi_saddle(u)   = e^{-3 u^2 / 2} / sqrt(2 pi)

    and psi_critical = psi_extremum + psi_saddle.  These follow from the
    Kac-Rice formula with the exponential law of the conditional Hessian
    determinant; the totals integrate to 2/sqrt(3) (critical) and
    1/sqrt(3) (extrema and saddles each), and the Euler-characteristic
    identity psi_extremum - psi_saddle = (u^2 - 1) phi(u) holds exactly.

    Only the aggregate kinds CRITICAL, EXTREMUM, SADDLE have a limiting
    density of this form; MINIMUM / MAXIMUM raise ``ValueError``.
    """
    ck = _coerce_kind(kind)
    arr, scalar = _as_float_array(u)
    u2 = arr * arr
    base = np.exp(-0.5 * u2) / _SQRT_2PI
    if ck is CriticalKind.CRITICAL:
        vals = (2.0 * np.exp(-u2) + u2 - 1.0) * base
    elif ck is CriticalKind.EXTREMUM:
        vals = (np.exp(-u2) + u2 - 1.0) * base
    elif ck is CriticalKind.SADDLE:
        vals = np.exp(-u2) * base
    else:
        raise ValueError(
            f"no limiting density for kind {ck.value!r}; "
            "use critical, extremum or saddle"
        )
    return float(vals) if scalar else vals


def critical_tail(kind: Union[CriticalKind, str], u: float) -> float:
    """Integral of ``critical_density`` over [u, infinity).

    Values of u at or below -40 return the full mass; the integrand is
    numerically zero beyond |u| = 40 so the quadrature window is clamped
    to [max(u, -40), 40].  Raises ``RuntimeError`` if the quadrature error
    estimate exceeds 1e-8.
    """
    ck = _coerce_kind(kind)
    u = float(u)
    if u >= 40.0:
        return 0.0
    lo = max(u, -40.0)
    val, err = integrate.quad(
        lambda z: critical_density(ck, z), lo, 40.0, epsabs=1e-10, epsrel=1e-12,
        limit=200,
    )
    if err > 1e-8:
        raise RuntimeError(
            f"critical_tail quadrature error {err:.2e} exceeds tolerance"
        )
    return float(val)
