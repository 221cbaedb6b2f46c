"""Normal distribution functions, adaptive quadrature and bracketed root finding.

Scalar functions (``normal_cdf``, ``normal_sf``, ``log_normal_sf``,
``normal_quantile``) are written against :mod:`math` and keep full relative
accuracy in the upper tail.  The ``*_array`` helpers are vectorised
counterparts used inside integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import BracketError, QuadratureError

SQRT2 = math.sqrt(2.0)
_SQRT2_LO = -9.667293313452913e-17  # sqrt(2) - SQRT2
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TAIL_SWITCH = 8.0
_CF_TERMS = 80


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    max_panels: int = 4096
    truncation_radius: float = 12.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be > 0")
        if self.max_panels < 1:
            raise ValueError("max_panels must be >= 1")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be > 0")


@dataclass(frozen=True)
class RootSpec:
    x_tol: float = 1e-14
    f_tol: float = 1e-13
    max_iter: int = 400

    def __post_init__(self):
        if not (self.x_tol > 0 and self.f_tol > 0):
            raise ValueError("x_tol and f_tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


DEFAULT_QUAD = QuadratureSpec()
DEFAULT_ROOT = RootSpec()


def _check_finite(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite real, got {x!r}")
    return x


def _two_prod(a, b):
    # Dekker: a*b == p + e exactly
    def split(v):
        c = 134217729.0 * v
        hi = c - (c - v)
        return hi, v - hi

    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def _half_erfc_scaled(x):
    # 0.5 * erfc(x / sqrt(2)) with the rounding of x / sqrt(2) corrected to first order
    t = x / SQRT2
    p, e = _two_prod(t, SQRT2)
    dt = ((x - p) - e - t * _SQRT2_LO) / SQRT2
    return 0.5 * (math.erfc(t) - _TWO_OVER_SQRT_PI * math.exp(-t * t) * dt)


def _log_mills_ratio(x):
    # log((1 - Phi(x)) / phi(x)) for x >= _TAIL_SWITCH, Laplace continued fraction
    acc = x
    for k in range(_CF_TERMS, 0, -1):
        acc = x + k / acc
    return -math.log(acc)


def log_normal_sf(x):
    """Natural log of the standard normal upper tail ``1 - Phi(x)``."""
    x = _check_finite(x)
    if x > _TAIL_SWITCH:
        sq, sq_err = _two_prod(x, x)
        return -0.5 * sq - 0.5 * sq_err - LOG_SQRT_2PI + _log_mills_ratio(x)
    if x < -_TAIL_SWITCH:
        return math.log1p(-math.exp(log_normal_sf(-x)))
    return math.log(_half_erfc_scaled(x))


def log_normal_cdf(x):
    return log_normal_sf(-_check_finite(x))


def normal_sf(x):
    """Upper tail ``1 - Phi(x)``, relative-accurate for large positive x."""
    x = _check_finite(x)
    if x > _TAIL_SWITCH:
        return math.exp(log_normal_sf(x))
    return _half_erfc_scaled(x)


def normal_cdf(x):
    """Standard normal cdf; ``normal_cdf(-x) == normal_sf(x)`` by construction."""
    return normal_sf(-_check_finite(x))


def normal_pdf(x):
    x = float(x)
    return math.exp(-0.5 * x * x - LOG_SQRT_2PI)


# Acklam's rational approximation, refined below by Newton steps in log space.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


def _acklam_lower(q):
    # initial guess for q <= 0.5
    if q < 0.02425:
        t = math.sqrt(-2.0 * math.log(q))
        num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
        den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        return num / den
    r = q - 0.5
    s = r * r
    num = (((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]) * r
    den = ((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0
    return num / den


def normal_quantile(q):
    """Inverse of :func:`normal_cdf` on the open interval (0, 1)."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q!r}")
    if q > 0.5:
        # 1 - q is exact for q >= 0.5, which keeps q and 1 - q exactly antisymmetric
        return -normal_quantile(1.0 - q)
    if q == 0.5:
        return 0.0
    x = _acklam_lower(q)
    log_q = math.log(q)
    for _ in range(4):
        log_cdf = log_normal_cdf(x)
        # d/dx log Phi(x) = phi(x) / Phi(x)
        slope = math.exp(-0.5 * x * x - LOG_SQRT_2PI - log_cdf)
        step = (log_cdf - log_q) / slope
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def normal_isf(eta):
    """Upper ``eta`` point: the (1 - eta)-quantile, accurate for tiny eta."""
    return -normal_quantile(eta)


def normal_sf_array(x):
    return special.ndtr(-np.asarray(x, dtype=float))


def normal_cdf_array(x):
    return special.ndtr(np.asarray(x, dtype=float))


def normal_pdf_array(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - LOG_SQRT_2PI)


def log_normal_sf_array(x):
    return special.log_ndtr(-np.asarray(x, dtype=float))


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (non-negative half).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_W_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_W_GAUSS = np.zeros(15)
_W_GAUSS[[1, 3, 5]] = _WG[:3]
_W_GAUSS[[13, 11, 9]] = _WG[:3]
_W_GAUSS[7] = _WG[3]


def _gk15(f, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    y = np.asarray(f(x), dtype=float).reshape(x.shape)
    kron = half * (y @ _W_KRONROD)
    gauss = half * (y @ _W_GAUSS)
    return kron, np.abs(kron - gauss)


def integrate_interval(f, lo, hi, spec=DEFAULT_QUAD, points=None):
    """Adaptive Gauss-Kronrod integral of a vectorised ``f`` over ``[lo, hi]``.

    ``points`` are interior breakpoints (kinks, peaks) used to seed the panel
    list.  Panels are bisected until the summed error bound is at most
    ``spec.abs_tol``.
    """
    lo, hi = float(lo), float(hi)
    if hi < lo:
        return -integrate_interval(f, hi, lo, spec, points)
    if hi == lo:
        return 0.0
    edges = [lo, hi]
    if points is not None:
        inner = [float(p) for p in np.ravel(points) if lo < p < hi]
        edges = sorted(set(edges + inner))
    a = np.array(edges[:-1])
    b = np.array(edges[1:])
    val, err = _gk15(f, a, b)
    done_val = 0.0
    done_err = 0.0
    while True:
        total_err = done_err + err.sum()
        if total_err <= spec.abs_tol:
            return float(done_val + val.sum())
        npanels = a.size
        # retire panels that are already well below their share of the budget
        share = spec.abs_tol / (4.0 * max(npanels, 1))
        keep = err > share
        done_val += val[~keep].sum()
        done_err += err[~keep].sum()
        a, b, err_k = a[keep], b[keep], err[keep]
        if a.size == 0:
            return float(done_val)
        # split the worst panels (at least the single worst one)
        cut = max(err_k.max() * 0.05, share)
        split = err_k >= cut
        if npanels + int(split.sum()) > spec.max_panels:
            raise QuadratureError(
                "quadrature panel budget exhausted",
                float(done_val + val[keep].sum()),
                float(done_err + err_k.sum()),
            )
        mid = 0.5 * (a[split] + b[split])
        new_a = np.concatenate([a[~split], a[split], mid])
        new_b = np.concatenate([b[~split], mid, b[split]])
        order = np.argsort(new_a, kind="stable")
        a, b = new_a[order], new_b[order]
        val, err = _gk15(f, a, b)


def integrate(f, spec=DEFAULT_QUAD, center=0.0, scale=1.0, points=None):
    """Integrate ``f`` over ``center +- spec.truncation_radius * scale``."""
    if not scale > 0:
        raise ValueError("scale must be > 0")
    r = spec.truncation_radius * scale
    return integrate_interval(f, center - r, center + r, spec, points)


def find_root(f, lo, hi, spec=DEFAULT_ROOT):
    """Root of ``f`` in ``[lo, hi]`` by bisection with Illinois acceleration.

    The bracket is kept valid at every step; every third iteration is a plain
    bisection so progress never stalls.  ``f`` may return +-inf.
    """
    lo, hi = float(lo), float(hi)
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = float(f(lo)), float(f(hi))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0 or math.isnan(flo) or math.isnan(fhi):
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]: f(lo)={flo!r}, f(hi)={fhi!r}")
    # glo/ghi are the Illinois-weighted residuals, flo/fhi the true ones
    glo, ghi = flo, fhi
    side = 0
    for it in range(spec.max_iter):
        use_secant = it % 3 != 2 and math.isfinite(glo) and math.isfinite(ghi)
        x = (lo * ghi - hi * glo) / (ghi - glo) if use_secant else 0.5 * (lo + hi)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
            if not lo < x < hi:
                break
        fx = float(f(x))
        if abs(fx) <= spec.f_tol:
            return x
        if (fx < 0) == (flo < 0):
            lo, flo, glo = x, fx, fx
            if side == -1:
                ghi *= 0.5
            side = -1
        else:
            hi, fhi, ghi = x, fx, fx
            if side == 1:
                glo *= 0.5
            side = 1
        if hi - lo <= spec.x_tol:
            break
    return lo if abs(flo) <= abs(fhi) else hi
