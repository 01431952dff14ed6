"""Random eigenfunction ensembles on spheres.

A degree-ell eigenfunction is represented by a unit coefficient vector
alpha on the eigenspace sphere together with a scalar radius; the random
ensembles of interest are alpha uniform (fixed radius 1) and the Gaussian
ensemble, where the radius is an independent normalized chi distributed
amplitude.  On S^2 the real orthonormal basis is explicit and evaluation
reduces to dense linear algebra; in higher dimensions fields are simulated
through their covariance (Gram matrix) at a finite point set.

Basis normalization: all basis functions are orthonormal with respect to
the *normalized* surface measure, so sum_m Y_m(x)^2 equals the eigenspace
dimension and each field value has unit variance under the Gaussian
ensemble.

Randomness discipline: every consumer derives its generator through
``stream(seed, replicate, purpose)``, which keys a counter-based Philox
stream by a stable hash of the purpose label.  Streams for different
purposes or replicates never overlap and results do not depend on the
order in which replicates are drawn.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .specfun import HarmonicLevel, gegenbauer
from .sphere_geom import SphereGrid, SpherePoint, as_point_array

__all__ = [
    "ChartError",
    "CoefficientVector",
    "FieldSample",
    "GeometryError",
    "NonGaussianModel",
    "covariance",
    "evaluate",
    "evaluate_grid",
    "frame_gradient",
    "gradient_hessian",
    "read_coefficients_csv",
    "sample_gaussian",
    "sample_nongaussian",
    "sample_radius",
    "sample_unit_coefficients",
    "simulate_field",
    "stream",
    "write_coefficients_csv",
    "ylm",
]

_SQRT2 = math.sqrt(2.0)
_POLE_BAND = 1.0 - 1e-8


class ChartError(ValueError):
    """Raised when an operation needs the polar chart too close to a pole."""


class GeometryError(RuntimeError):
    """Raised when a covariance Gram matrix cannot be factorized."""


def stream(
    seed: int, replicate: int = 0, purpose: str = ""
) -> np.random.Generator:
    """Independent Philox stream keyed by (seed, replicate, purpose).

    The purpose label is hashed with blake2b (stable across processes and
    Python versions, unlike the builtin ``hash``) into the spawn key, so
    distinct purposes get provably disjoint counter streams under the same
    campaign seed.
    """
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest()
    w1 = int.from_bytes(digest[:4], "little")
    w2 = int.from_bytes(digest[4:], "little")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(w1, w2, int(replicate)))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# coefficient vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientVector:
    """A field h = radius * sum_m alpha_m Y_m with ||alpha|| = 1.

    ``alpha`` is renormalized on construction; a deviation from unit norm
    beyond 1e-6 raises, smaller drift (accumulated rounding) is absorbed.
    """

    level: HarmonicLevel
    alpha: np.ndarray
    radius: float = 1.0

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha, dtype=float)
        if a.shape != (self.level.n,):
            raise ValueError(
                f"alpha must have length n={self.level.n}, got shape {a.shape}"
            )
        norm = float(np.linalg.norm(a))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise ValueError(f"alpha norm {norm!r} is not 1 within 1e-6")
        object.__setattr__(self, "alpha", a / norm)
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be positive, got {self.radius}")

    def scaled(self, c: float) -> "CoefficientVector":
        return replace(self, radius=self.radius * c)

    @property
    def sample_power(self) -> float:
        """Squared coefficient norm of the full (radius-scaled) field."""
        return self.radius * self.radius


def sample_unit_coefficients(
    level: HarmonicLevel, rng: np.random.Generator
) -> CoefficientVector:
    """alpha uniform on the unit sphere of the eigenspace, radius 1."""
    z = rng.standard_normal(level.n)
    norm = np.linalg.norm(z)
    while norm == 0.0:  # pragma: no cover - probability zero
        z = rng.standard_normal(level.n)
        norm = np.linalg.norm(z)
    return CoefficientVector(level, z / norm, 1.0)


def sample_radius(level: HarmonicLevel, rng: np.random.Generator) -> float:
    """Amplitude radius R with n R^2 ~ chi-square(n), via a gamma draw."""
    x = rng.gamma(level.n / 2.0, 2.0)
    return math.sqrt(x / level.n)


def sample_gaussian(
    level: HarmonicLevel, rng: np.random.Generator
) -> CoefficientVector:
    """Gaussian ensemble: uniform alpha and independent chi radius.

    Draw order (alpha first, then radius) is part of the reproducibility
    contract for a given stream.
    """
    coeffs = sample_unit_coefficients(level, rng)
    return replace(coeffs, radius=sample_radius(level, rng))


# ---------------------------------------------------------------------------
# explicit basis on S^2
# ---------------------------------------------------------------------------


def _legendre_rows(ell: int, x: np.ndarray, depth: int = 2) -> list[np.ndarray]:
    """Fully normalized associated Legendre values at the top ``depth`` degrees.

    Returns ``depth`` arrays of shape (N, ell+1); entry k holds, in column
    m, the value of P_bar_{ell-k, m}(x) (zero where m exceeds the degree).
    The normalization satisfies integral of P_bar^2 over [-1, 1] equal to
    2, so the zonal basis function is exactly P_bar_{ell,0}.

    The recurrence runs degree-major (all orders m advanced at once per
    degree), which keeps the Python-level loop at O(ell) iterations; the
    order-major variant costs O(ell^2) interpreter passes and dominates
    everything else at high degree.
    """
    x = np.asarray(x, dtype=float)
    n_pts = x.shape[0]
    sx = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    prev = np.zeros((n_pts, ell + 1))
    prev[:, 0] = 1.0
    if ell == 0:
        return [prev] + [np.zeros((n_pts, 1)) for _ in range(depth - 1)]
    cur = np.zeros((n_pts, ell + 1))
    cur[:, 0] = math.sqrt(3.0) * x
    cur[:, 1] = math.sqrt(1.5) * sx
    prev2 = np.zeros((n_pts, ell + 1))
    for n in range(2, ell + 1):
        nn = float(n)
        m = np.arange(0, n - 1, dtype=float)
        a = np.sqrt((4.0 * nn * nn - 1.0) / (nn * nn - m * m))
        b = np.sqrt(
            ((2.0 * nn + 1.0) * ((nn - 1.0) ** 2 - m * m))
            / ((2.0 * nn - 3.0) * (nn * nn - m * m))
        )
        nxt = prev2  # recycle the oldest buffer
        nxt[:, : n - 1] = a * (x[:, None] * cur[:, : n - 1]) - b * prev[:, : n - 1]
        nxt[:, n - 1] = math.sqrt(2.0 * nn + 1.0) * x * cur[:, n - 1]
        nxt[:, n] = math.sqrt((2.0 * nn + 1.0) / (2.0 * nn)) * sx * cur[:, n - 1]
        if n > 2:
            nxt[:, n + 1 :] = 0.0  # clear columns left over from recycling
        prev2, prev, cur = prev, cur, nxt
    return [cur, prev, prev2][:depth]


def _legendre_pair(ell: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = _legendre_rows(ell, x, depth=2)
    return rows[0], rows[1]


def _check_s2(level: HarmonicLevel) -> None:
    if level.dim != 2:
        raise ValueError(
            "the explicit basis is only available on S^2; "
            f"got dim={level.dim} (use simulate_field for higher dimensions)"
        )


def _basis_matrix(ell: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Orthonormal real basis values, shape (N, 2*ell+1).

    Column layout (1-based slot index used by ``ylm``): slot 1 is the
    zonal function, slot 2m the cosine harmonic of order m, slot 2m+1 the
    sine harmonic of order m.
    """
    p_l, _ = _legendre_pair(ell, np.cos(theta))
    n_pts = theta.shape[0]
    basis = np.empty((n_pts, 2 * ell + 1))
    basis[:, 0] = p_l[:, 0]
    if ell > 0:
        orders = np.arange(1, ell + 1)
        ang = phi[:, None] * orders[None, :]
        scaled = _SQRT2 * p_l[:, 1:]
        basis[:, 1::2] = scaled * np.cos(ang)
        basis[:, 2::2] = scaled * np.sin(ang)
    return basis


def _angles_of(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.clip(points[:, 2], -1.0, 1.0)
    return np.arccos(z), np.arctan2(points[:, 1], points[:, 0])


def _rotated_coefficients(
    coeffs: CoefficientVector, rot: np.ndarray
) -> CoefficientVector:
    """Coefficients of the pulled-back field g(x) = f(rot @ x).

    Rotations act linearly within each eigenspace, so g has an exact
    coefficient vector at the same level.  It is recovered by projecting
    onto the basis with a Gauss-Legendre (in cos theta) by uniform (in
    phi) product rule; the integrands are products of two degree-ell
    eigenfunctions, for which ell + 1 nodes and 2*ell + 1 angles make the
    quadrature exact, so the result is correct to rounding.  (A plain
    least-squares fit on a generic point set is not safe here: uniform
    phi rings with fewer than 2*ell + 1 angles alias distinct orders.)
    """
    ell = coeffs.level.ell
    nodes, gl_w = np.polynomial.legendre.leggauss(ell + 1)
    n_phi = 2 * ell + 1
    phi = np.arange(n_phi) * (2.0 * math.pi / n_phi)
    theta = np.repeat(np.arccos(nodes), n_phi)
    phi = np.tile(phi, ell + 1)
    weights = np.repeat(gl_w, n_phi) / (2.0 * n_phi)
    st = np.sin(theta)
    pts = np.column_stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])
    rotated = pts @ rot.T
    rotated /= np.linalg.norm(rotated, axis=1, keepdims=True)
    target = _basis_matrix(ell, *_angles_of(rotated)) @ coeffs.alpha
    basis = _basis_matrix(ell, theta, phi)
    alpha = basis.T @ (weights * target)
    norm = float(np.linalg.norm(alpha))
    return CoefficientVector(coeffs.level, alpha / norm, coeffs.radius)


def ylm(level: HarmonicLevel, m: int, point: Union[SpherePoint, np.ndarray]) -> float:
    """Single real basis function on S^2, slot index m in 1..2*ell+1.

    Slot 1 is zonal; even slots are cosine harmonics of order m//2, odd
    slots >= 3 the matching sine harmonics.
    """
    _check_s2(level)
    if not 1 <= m <= 2 * level.ell + 1:
        raise ValueError(f"m must lie in 1..{2 * level.ell + 1}, got {m}")
    pts = as_point_array(point)
    theta, phi = _angles_of(pts)
    return float(_basis_matrix(level.ell, theta, phi)[0, m - 1])


def evaluate(
    coeffs: CoefficientVector,
    point: Union[SpherePoint, np.ndarray, Sequence[SpherePoint]],
) -> Union[float, np.ndarray]:
    """Evaluate the field at one point or an array of points (S^2 only)."""
    _check_s2(coeffs.level)
    scalar = isinstance(point, SpherePoint) or (
        isinstance(point, np.ndarray) and point.ndim == 1
    )
    pts = as_point_array(point)
    theta, phi = _angles_of(pts)
    basis = _basis_matrix(coeffs.level.ell, theta, phi)
    vals = coeffs.radius * (basis @ coeffs.alpha)
    return float(vals[0]) if scalar else vals


def evaluate_grid(coeffs: CoefficientVector, grid: SphereGrid) -> np.ndarray:
    """Evaluate on a grid, using the separable ring path when available.

    On an iso-latitude product grid the basis factorizes into a Legendre
    table over rings times cosine/sine lattices over longitudes, turning
    evaluation into two matrix products; this is what makes high-degree
    sup-norm and excursion sweeps tractable.
    """
    _check_s2(coeffs.level)
    if grid.rings is None:
        return evaluate(coeffs, grid.points)
    ell = coeffs.level.ell
    thetas, phis = grid.rings
    p_l, _ = _legendre_pair(ell, np.cos(thetas))
    a = coeffs.alpha
    if ell == 0:
        vals = np.repeat(coeffs.radius * a[0] * p_l[:, 0], phis.shape[0])
        return vals
    orders = np.arange(1, ell + 1)
    cos_lat = np.cos(orders[:, None] * phis[None, :])
    sin_lat = np.sin(orders[:, None] * phis[None, :])
    c_part = _SQRT2 * p_l[:, 1:] * a[1::2][None, :]
    s_part = _SQRT2 * p_l[:, 1:] * a[2::2][None, :]
    vals = np.outer(p_l[:, 0] * a[0], np.ones(phis.shape[0]))
    vals += c_part @ cos_lat
    vals += s_part @ sin_lat
    return coeffs.radius * vals.ravel()


def frame_gradient(
    coeffs: CoefficientVector, points: Union[np.ndarray, Sequence[SpherePoint]]
) -> np.ndarray:
    """Gradient components (g_theta, g_phi) in the orthonormal polar frame.

    Shape (N, 2).  The division by sin(theta) is floored at 1e-12 rather
    than raised on, because batched Newton searches may graze the poles
    transiently; callers needing the strict chart contract should go
    through ``gradient_hessian``.
    """
    _check_s2(coeffs.level)
    pts = as_point_array(points)
    theta, phi = _angles_of(pts)
    return _frame_gradient_angles(coeffs, theta, phi)


def _frame_gradient_angles(
    coeffs: CoefficientVector, theta: np.ndarray, phi: np.ndarray
) -> np.ndarray:
    ell = coeffs.level.ell
    x = np.cos(theta)
    sin_t = np.maximum(np.sin(theta), 1e-12)
    p_l, p_lm1 = _legendre_pair(ell, x)
    out = np.zeros((theta.shape[0], 2))
    if ell == 0:
        return out
    orders = np.arange(ell + 1)
    e = np.zeros(ell + 1)
    e[: ell + 1] = np.sqrt(
        (2.0 * ell + 1.0)
        * (ell * ell - orders * orders).clip(min=0)
        / (2.0 * ell - 1.0)
    )
    # d/d(theta) of P_bar_{ell,m}(cos theta)
    dp = (ell * x[:, None] * p_l - e[None, :] * p_lm1) / sin_t[:, None]
    a = coeffs.alpha
    ang = phi[:, None] * orders[None, 1:]
    cos_a, sin_a = np.cos(ang), np.sin(ang)
    g_t = dp[:, 0] * a[0]
    g_t += (_SQRT2 * dp[:, 1:] * (a[1::2] * cos_a + a[2::2] * sin_a)).sum(axis=1)
    m_over_sin = orders[1:][None, :] / sin_t[:, None]
    g_p = (
        _SQRT2 * p_l[:, 1:] * m_over_sin * (-a[1::2] * sin_a + a[2::2] * cos_a)
    ).sum(axis=1)
    out[:, 0] = coeffs.radius * g_t
    out[:, 1] = coeffs.radius * g_p
    return out


def _frame_jet2(
    coeffs: CoefficientVector, theta: np.ndarray, phi: np.ndarray
) -> tuple[np.ndarray, ...]:
    """Value, frame gradient and covariant frame Hessian, all analytic.

    Returns (value, g_theta, g_phi, h_tt, h_tp, h_pp) as flat arrays.  The
    second theta-derivative of the normalized Legendre functions is
    obtained by differentiating the first-derivative recurrence once more,
    which pulls in the degree ell-2 row.  Used by Newton searches, where a
    finite-difference Hessian per iterate would dominate the cost, and as
    an independent cross-check of the finite-difference Hessian.
    """
    ell = coeffs.level.ell
    x = np.cos(theta)
    s = np.maximum(np.sin(theta), 1e-12)
    rows = _legendre_rows(ell, x, depth=3)
    p_l, p_lm1 = rows[0], rows[1]
    p_lm2 = rows[2] if len(rows) > 2 else np.zeros_like(p_l)
    orders = np.arange(ell + 1, dtype=float)
    r = coeffs.radius
    a = coeffs.alpha
    if ell == 0:
        zero = np.zeros_like(x)
        return r * a[0] * p_l[:, 0], zero, zero, zero, zero, zero
    e1 = np.sqrt(
        (2.0 * ell + 1.0) * np.clip(ell * ell - orders**2, 0.0, None)
        / (2.0 * ell - 1.0)
    )
    if ell >= 2:
        e2 = np.sqrt(
            (2.0 * ell - 1.0)
            * np.clip((ell - 1.0) ** 2 - orders**2, 0.0, None)
            / (2.0 * ell - 3.0)
        )
    else:
        e2 = np.zeros(ell + 1)
    s_col = s[:, None]
    x_col = x[:, None]
    d_l = (ell * x_col * p_l - e1[None, :] * p_lm1) / s_col
    d_lm1 = ((ell - 1.0) * x_col * p_lm1 - e2[None, :] * p_lm2) / s_col
    dd_l = (
        -ell * s_col * p_l + ell * x_col * d_l - e1[None, :] * d_lm1
    ) / s_col - (x_col / s_col) * d_l
    ang = phi[:, None] * orders[None, 1:]
    cos_a, sin_a = np.cos(ang), np.sin(ang)
    ac, asn = a[1::2], a[2::2]
    mix = ac * cos_a + asn * sin_a
    mix_d = orders[None, 1:] * (-ac * sin_a + asn * cos_a)
    val = r * (a[0] * p_l[:, 0] + _SQRT2 * (p_l[:, 1:] * mix).sum(axis=1))
    g_t = r * (a[0] * d_l[:, 0] + _SQRT2 * (d_l[:, 1:] * mix).sum(axis=1))
    f_p = r * _SQRT2 * (p_l[:, 1:] * mix_d).sum(axis=1)
    g_p = f_p / s
    h_tt = r * (a[0] * dd_l[:, 0] + _SQRT2 * (dd_l[:, 1:] * mix).sum(axis=1))
    f_tp = r * _SQRT2 * (d_l[:, 1:] * mix_d).sum(axis=1)
    f_pp = -r * _SQRT2 * (p_l[:, 1:] * orders[None, 1:] ** 2 * mix).sum(axis=1)
    h_tp = f_tp / s - (x / s) * g_p
    h_pp = f_pp / (s * s) + (x / s) * g_t
    return val, g_t, g_p, h_tt, h_tp, h_pp


def ambient_gradient(
    coeffs: CoefficientVector, points: np.ndarray
) -> np.ndarray:
    """Riemannian gradient as tangent 3-vectors in ambient coordinates."""
    pts = as_point_array(points)
    theta, phi = _angles_of(pts)
    g = _frame_gradient_angles(coeffs, theta, phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e_theta = np.column_stack([ct * cp, ct * sp, -st])
    e_phi = np.column_stack([-sp, cp, np.zeros_like(sp)])
    return g[:, :1] * e_theta + g[:, 1:] * e_phi


def gradient_hessian(
    coeffs: CoefficientVector, point: Union[SpherePoint, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Frame gradient and covariant Hessian at a single point on S^2.

    The gradient is analytic (Legendre derivative recurrences); the
    Hessian applies fourth-order central differences with step
    1e-4 * pi / ell to the analytic gradient and assembles the covariant
    components in the orthonormal frame (e_theta, e_phi), symmetrizing the
    mixed entry.  Points with |cos theta| >= 1 - 1e-8 raise ``ChartError``:
    the polar chart degenerates there and callers are expected to work in
    a rotated frame instead.
    """
    _check_s2(coeffs.level)
    pts = as_point_array(point)
    if pts.shape[0] != 1:
        raise ValueError("gradient_hessian expects a single point")
    theta, phi = _angles_of(pts)
    t0, p0 = float(theta[0]), float(phi[0])
    if abs(math.cos(t0)) >= _POLE_BAND:
        raise ChartError(
            f"point with |cos theta| = {abs(math.cos(t0)):.12f} is inside the "
            "polar band; rotate the frame before differentiating"
        )
    ell = max(coeffs.level.ell, 1)
    h = 1e-4 * math.pi / ell
    # stencil: rows = (theta offsets, phi held) then (phi offsets, theta held)
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    th = np.concatenate([t0 + offs, np.full(4, t0), [t0]])
    ph = np.concatenate([np.full(4, p0), p0 + offs, [p0]])
    g = _frame_gradient_angles(coeffs, th, ph)
    w = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    d_theta = w @ g[0:4]      # d/dtheta of (g_t, g_p)
    d_phi = w @ g[4:8]        # d/dphi of (g_t, g_p)
    g_t, g_p = g[8]
    sin_t = math.sin(t0)
    cot_t = math.cos(t0) / sin_t
    h_tt = d_theta[0]
    h_tp_a = d_theta[1]
    h_tp_b = d_phi[0] / sin_t - cot_t * g_p
    h_pp = d_phi[1] / sin_t + cot_t * g_t
    h_tp = 0.5 * (h_tp_a + h_tp_b)
    grad = np.array([g_t, g_p])
    hess = np.array([[h_tt, h_tp], [h_tp, h_pp]])
    return grad, hess


# ---------------------------------------------------------------------------
# covariance and Gram-based simulation
# ---------------------------------------------------------------------------


def covariance(level: HarmonicLevel, x, y) -> Union[float, np.ndarray]:
    """Ensemble covariance E[T(x) T(y)] = G_ell(<x, y>)."""
    xa = as_point_array(x)
    ya = as_point_array(y)
    dots = np.clip(np.sum(xa * ya, axis=-1), -1.0, 1.0)
    vals = gegenbauer(level.ell, level.dim, dots)
    vals = np.asarray(vals)
    return float(vals[0]) if vals.shape == (1,) else vals


@dataclass
class FieldSample:
    """A realized field, either explicit coefficients or a point-set draw.

    Explicit samples (S^2) carry a ``CoefficientVector`` and optionally a
    grid with cached values; point-set samples carry only values at a
    fixed point set, simulated from the covariance, plus the diagonal
    jitter that was needed to factorize the Gram matrix.
    """

    level: HarmonicLevel
    coeffs: Optional[CoefficientVector] = None
    grid: Optional[SphereGrid] = None
    points: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    jitter: float = 0.0

    @classmethod
    def explicit(
        cls, coeffs: CoefficientVector, grid: Optional[SphereGrid] = None
    ) -> "FieldSample":
        sample = cls(level=coeffs.level, coeffs=coeffs, grid=grid)
        if grid is not None:
            sample.values = evaluate_grid(coeffs, grid)
            sample.weights = grid.weights
            sample.points = grid.points
        return sample

    @property
    def kind(self) -> str:
        return "explicit" if self.coeffs is not None else "pointset"

    def ensure_values(self) -> tuple[np.ndarray, np.ndarray]:
        if self.values is None or self.weights is None:
            raise ValueError(
                "sample carries no evaluated values; attach a grid via "
                "FieldSample.explicit(coeffs, grid) or use simulate_field"
            )
        return self.values, self.weights


class GramSimulator:
    """Cholesky-based simulator of the Gaussian field at a fixed point set.

    The Gram matrix has rank at most the eigenspace dimension, so for
    point counts beyond that a diagonal jitter is unavoidable; it is
    escalated from 1e-12 by factors of 10 up to 1e-8 and the value used is
    reported on every sample.  Failure beyond the ceiling raises
    ``GeometryError`` (degenerate geometry, e.g. duplicated points).
    """

    _LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)

    def __init__(self, level: HarmonicLevel, points, weights=None) -> None:
        pts = as_point_array(points)
        if isinstance(points, SphereGrid):
            weights = points.weights if weights is None else weights
        if pts.shape[1] != level.dim + 1:
            raise ValueError(
                f"points have ambient dimension {pts.shape[1]}, "
                f"expected {level.dim + 1}"
            )
        self.level = level
        self.points = pts
        n_pts = pts.shape[0]
        self.weights = (
            np.full(n_pts, 1.0 / n_pts) if weights is None else np.asarray(weights)
        )
        gram = gegenbauer(level.ell, level.dim, np.clip(pts @ pts.T, -1.0, 1.0))
        self.jitter = 0.0
        self._chol = None
        for jit in self._LADDER:
            try:
                # the exact diagonal is G(1) = 1; bump it in place instead of
                # materializing an identity matrix next to a large Gram block
                np.fill_diagonal(gram, 1.0 + jit)
                self._chol = np.linalg.cholesky(gram)
                self.jitter = jit
                break
            except np.linalg.LinAlgError:
                continue
        if self._chol is None:
            raise GeometryError(
                "covariance Gram matrix is not positive definite even with "
                "jitter 1e-8; the point set is likely degenerate"
            )

    def sample(self, rng: np.random.Generator) -> FieldSample:
        z = rng.standard_normal(self.points.shape[0])
        vals = self._chol @ z
        return FieldSample(
            level=self.level,
            points=self.points,
            values=vals,
            weights=self.weights,
            jitter=self.jitter,
        )


def simulate_field(
    level: HarmonicLevel,
    points,
    rng: np.random.Generator,
    weights=None,
) -> FieldSample:
    """One Gaussian-ensemble draw of field values at ``points``.

    For repeated draws at a fixed point set construct a ``GramSimulator``
    once and call ``sample``; this wrapper refactorizes every call.
    """
    return GramSimulator(level, points, weights).sample(rng)


# ---------------------------------------------------------------------------
# non-Gaussian perturbations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonGaussianModel:
    """Coefficient-law perturbations of the Gaussian ensemble.

    ``scale_mixture`` multiplies the Gaussian amplitude by an independent
    discrete factor xi (atoms with probabilities); ``heavy_tail`` draws
    iid Student-t coefficients scaled to unit expected power.  Both keep
    the conditional-on-power law uniform on the coefficient sphere, which
    is what makes the scale-mixture excursion statistics exactly match the
    Gaussian ones after power rescaling.
    """

    family: str
    atoms: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    dof: float = 0.0

    @classmethod
    def scale_mixture(
        cls, atoms: Sequence[float], probs: Optional[Sequence[float]] = None
    ) -> "NonGaussianModel":
        atoms = tuple(float(a) for a in atoms)
        if not atoms or any(a <= 0 for a in atoms):
            raise ValueError("mixture atoms must be positive")
        if probs is None:
            probs = tuple(1.0 / len(atoms) for _ in atoms)
        else:
            probs = tuple(float(p) for p in probs)
        if len(probs) != len(atoms) or any(p < 0 for p in probs):
            raise ValueError("probs must be nonnegative, one per atom")
        total = sum(probs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probs sum to {total}, expected 1")
        return cls(family="scale_mixture", atoms=atoms, probs=probs)

    @classmethod
    def heavy_tail(cls, dof: float) -> "NonGaussianModel":
        if dof <= 2.0:
            raise ValueError("heavy_tail requires dof > 2 (finite variance)")
        return cls(family="heavy_tail", dof=float(dof))

    @classmethod
    def parse(cls, text: str) -> "NonGaussianModel":
        """Parse compact CLI/config syntax.

        ``gaussian``; ``mixture:a1,a2,...`` (equal weights) or
        ``mixture:a1@p1,a2@p2,...``; ``student:dof``.
        """
        text = text.strip()
        if text == "gaussian":
            return cls.scale_mixture((1.0,))
        if ":" not in text:
            raise ValueError(f"cannot parse model spec {text!r}")
        name, _, payload = text.partition(":")
        if name == "mixture":
            atoms, probs, weighted = [], [], False
            for tok in payload.split(","):
                if "@" in tok:
                    a, _, p = tok.partition("@")
                    atoms.append(float(a))
                    probs.append(float(p))
                    weighted = True
                else:
                    atoms.append(float(tok))
            return cls.scale_mixture(atoms, probs if weighted else None)
        if name == "student":
            return cls.heavy_tail(float(payload))
        raise ValueError(f"unknown model family {name!r}")


def sample_nongaussian(
    model: NonGaussianModel, level: HarmonicLevel, rng: np.random.Generator
) -> tuple[CoefficientVector, float]:
    """Draw (coefficients, sample power C~) from a perturbed ensemble.

    For a single-atom mixture no selector variate is consumed, so
    ``scale_mixture([1.0])`` reproduces ``sample_gaussian`` draw for draw
    on the same stream.
    """
    if model.family == "scale_mixture":
        coeffs = sample_gaussian(level, rng)
        if len(model.atoms) == 1:
            xi = model.atoms[0]
        else:
            xi = float(rng.choice(np.array(model.atoms), p=np.array(model.probs)))
        out = coeffs.scaled(xi)
        return out, out.sample_power
    if model.family == "heavy_tail":
        raw = rng.standard_t(model.dof, size=level.n)
        scale = math.sqrt(level.n * model.dof / (model.dof - 2.0))
        raw = raw / scale
        norm = float(np.linalg.norm(raw))
        while norm == 0.0:  # pragma: no cover
            raw = rng.standard_t(model.dof, size=level.n) / scale
            norm = float(np.linalg.norm(raw))
        coeffs = CoefficientVector(level, raw / norm, norm)
        return coeffs, coeffs.sample_power
    raise ValueError(f"unknown model family {model.family!r}")


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def write_coefficients_csv(coeffs: CoefficientVector, path_or_file) -> None:
    """Columns ell, d, radius, m, alpha with %.17g floats (exact round trip)."""

    def _write(fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(["ell", "d", "radius", "m", "alpha"])
        ell, d = coeffs.level.ell, coeffs.level.dim
        r = format(coeffs.radius, ".17g")
        for m, a in enumerate(coeffs.alpha, start=1):
            writer.writerow([ell, d, r, m, format(a, ".17g")])

    if isinstance(path_or_file, (str, bytes)):
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)
    else:
        _write(path_or_file)


def read_coefficients_csv(path_or_file) -> CoefficientVector:
    if isinstance(path_or_file, (str, bytes)):
        with open(path_or_file, newline="") as fh:
            return _read_coeffs(fh)
    return _read_coeffs(path_or_file)


def _read_coeffs(fh) -> CoefficientVector:
    reader = csv.DictReader(fh)
    rows = list(reader)
    if not rows:
        raise ValueError("coefficient CSV is empty")
    ell = int(rows[0]["ell"])
    d = int(rows[0]["d"])
    radius = float(rows[0]["radius"])
    level = HarmonicLevel(ell, d)
    alpha = np.zeros(level.n)
    seen = np.zeros(level.n, dtype=bool)
    for row in rows:
        m = int(row["m"])
        if not 1 <= m <= level.n:
            raise ValueError(f"slot index {m} outside 1..{level.n}")
        alpha[m - 1] = float(row["alpha"])
        seen[m - 1] = True
    if not seen.all():
        raise ValueError("coefficient CSV is missing slots")
    return CoefficientVector(level, alpha, radius)


def coefficients_csv_text(coeffs: CoefficientVector) -> str:
    buf = io.StringIO()
    write_coefficients_csv(coeffs, buf)
    return buf.getvalue()
