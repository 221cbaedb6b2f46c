"""Orthogonal regression with Hadamard designs and penalized model selection.

Designs are Sylvester Hadamard matrices with ``n = m_total`` rows, so
``X'X = n I`` and least squares reduces to ``beta_hat = X'y / n``.  Column 0
is the intercept.  Criteria count the ``m = m_total - 1`` candidate
regressors.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import numerics as nm
from .errors import DegenerateFitError, DomainError
from .rules import bh_step_up, pvalues_from_z, sd_step_down

FAMILIES = ("mBIC", "mBIC1", "mBIC2", "mBIC3", "FDR_PEN")
LOG4 = math.log(4.0)
DEFAULT_CONSTANTS = {
    "mBIC": -2.0 * LOG4,
    "mBIC1": 0.0,
    "mBIC2": -2.0 * LOG4,
    "mBIC3": -2.0 * LOG4 + 2.0,
    "FDR_PEN": 0.05,
}
EXHAUSTIVE_LIMIT = 16
_DIRECT_CHECK_LIMIT = 1024


def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (int(n) & (int(n) - 1)) == 0


def fwht(a):
    """Unnormalized Walsh-Hadamard transform along the last axis.

    Equals multiplication by the Sylvester matrix, which is symmetric, so
    the same call gives both ``X b`` and ``X' y``.  Integer input stays integer.
    """
    a = np.asarray(a)
    n = a.shape[-1]
    if not _is_power_of_two(n):
        raise ValueError(f"length {n} is not a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(*lead, n // (2 * h), 2, h)
        x, y = a[..., 0, :], a[..., 1, :]
        a = np.stack((x + y, x - y), axis=-2)
        h *= 2
    return a.reshape(*lead, n)


class OrthogonalDesign:
    """Sylvester Hadamard design; ``matrix`` is built on first access."""

    def __init__(self, m_total):
        if not _is_power_of_two(m_total) or m_total < 2:
            raise ValueError(f"m_total must be a power of two >= 2, got {m_total!r}")
        self.m_total = int(m_total)
        self.n = int(m_total)

    @functools.cached_property
    def matrix(self):
        h = np.ones((1, 1), dtype=np.int8)
        while h.shape[0] < self.m_total:
            h = np.block([[h, h], [h, -h]])
        return h

    def gram(self):
        """``X'X`` computed without rounding error."""
        x = self.matrix
        if self.m_total <= _DIRECT_CHECK_LIMIT:
            # entries are integers of magnitude <= n, exact in float64
            xf = x.astype(np.float64)
            return (xf.T @ xf).astype(np.int64)
        return fwht(x.T.astype(np.int64))

    def is_orthogonal(self):
        return bool(np.array_equal(self.gram(), self.n * np.eye(self.m_total, dtype=np.int64)))

    def apply(self, beta):
        """``X beta``."""
        return fwht(np.asarray(beta, dtype=float))

    def apply_t(self, y):
        """``X' y``."""
        return fwht(np.asarray(y, dtype=float))

    def to_text(self):
        return "\n".join(" ".join("+" if v > 0 else "-" for v in row) for row in self.matrix)


@functools.lru_cache(maxsize=16)
def hadamard_design(m_total):
    design = OrthogonalDesign(m_total)
    if not design.is_orthogonal():
        raise AssertionError("Sylvester construction lost orthogonality")
    return design


@dataclass(frozen=True, eq=False)
class RegressionData:
    design: OrthogonalDesign
    y: np.ndarray
    beta_true: np.ndarray | None = None
    sigma: float = 1.0
    k_star: int | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.shape != (self.design.n,):
            raise ValueError(f"y must have length {self.design.n}")
        object.__setattr__(self, "y", y)
        if self.beta_true is not None:
            beta = np.asarray(self.beta_true, dtype=float)
            if beta.shape != (self.design.m_total,):
                raise ValueError(f"beta_true must have length {self.design.m_total}")
            object.__setattr__(self, "beta_true", beta)
            k = int(np.count_nonzero(beta[1:]))
            if self.k_star is None:
                object.__setattr__(self, "k_star", k)
            elif self.k_star != k:
                raise ValueError(f"k_star={self.k_star} but beta_true has {k} nonzero slopes")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def n(self):
        return self.design.n

    @property
    def m(self):
        """Number of candidate regressors (intercept excluded)."""
        return self.design.m_total - 1

    @functools.cached_property
    def beta_hat(self):
        return ols_orthogonal(self)

    @functools.cached_property
    def centered_ss(self):
        """``y'y - n ybar^2``: RSS of the intercept-only model."""
        yc = self.y - self.y.mean()
        return float(yc @ yc)


def simulate_data(design, beta, sigma, rng):
    """Response ``y = X beta + eps`` with ``eps ~ N(0, sigma^2)``."""
    beta = np.asarray(beta, dtype=float)
    y = design.apply(beta) + sigma * rng.standard_normal(design.n)
    return RegressionData(design, y, beta, sigma)


def ols_orthogonal(data):
    return data.design.apply_t(data.y) / data.n


@dataclass(frozen=True)
class Criterion:
    family: str
    constant: float | None = None
    sigma_mode: str = "known"
    sigma: float = 1.0
    k_max: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown criterion family {self.family!r}; expected one of {FAMILIES}")
        if self.sigma_mode not in ("known", "unknown"):
            raise ValueError("sigma_mode must be 'known' or 'unknown'")
        if self.constant is None:
            object.__setattr__(self, "constant", DEFAULT_CONSTANTS[self.family])
        if self.family == "FDR_PEN" and not 0 < self.constant < 1:
            raise ValueError("FDR_PEN constant is a level alpha in (0, 1)")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.k_max is not None and self.k_max < 0:
            raise ValueError("k_max must be >= 0")

    def resolved_k_max(self, n, m):
        """``k_max`` capped at ``m`` (and ``n - 2`` when sigma is unknown)."""
        cap = m if self.sigma_mode == "known" else min(m, n - 2)
        k = cap if self.k_max is None else self.k_max
        if k > cap:
            raise DomainError(f"k_max={k} exceeds the admissible {cap} for {self.sigma_mode} sigma")
        return k


@dataclass(frozen=True, eq=False)
class SelectedModel:
    included: np.ndarray
    k: int
    criterion_value: float
    rss: float


@functools.lru_cache(maxsize=256)
def _penalty_path(family, constant, n, m, k_max):
    k = np.arange(k_max + 1, dtype=float)
    if family == "FDR_PEN":
        q = [nm.normal_isf(constant * l / (2.0 * m)) for l in range(1, k_max + 1)]
        out = np.concatenate([[0.0], np.cumsum(np.square(q))])
    elif family == "mBIC":
        out = k * (math.log(n) + 2.0 * math.log(m) + constant)
    else:
        big = math.log(n) + 2.0 * math.log(m)
        out = k * (big + constant)
        if family in ("mBIC1", "mBIC2"):
            out = out - 2.0 * special.gammaln(k + 1.0)
        if family == "mBIC1" and k_max > 0:
            inner = big - 2.0 * np.log(np.arange(1, k_max + 1))
            if np.any(inner <= 1.0):
                i = int(np.argmax(inner <= 1.0)) + 1
                raise DomainError(f"mBIC1 needs n m^2 / i^2 > e; fails at i={i} (n={n}, m={m})")
            out = out - np.concatenate([[0.0], np.cumsum(np.log(inner))])
        if family == "mBIC3":
            out = out - 2.0 * special.xlogy(k, k)
    out.setflags(write=False)
    return out


def penalty_path(crit, n, m, k_max):
    """Penalties for model sizes ``0..k_max``."""
    if m < 1 or n < 1:
        raise ValueError("n and m must be >= 1")
    if not 0 <= k_max <= m:
        raise ValueError("need 0 <= k_max <= m")
    return _penalty_path(crit.family, float(crit.constant), int(n), int(m), int(k_max))


def _fit_term(crit, n, rss):
    rss = np.asarray(rss, dtype=float)
    if crit.sigma_mode == "known":
        return rss / crit.sigma ** 2
    if np.any(rss <= 0):
        raise DegenerateFitError("RSS must be > 0 when sigma is unknown")
    return n * np.log(rss)


def criterion_value(crit, n, k, rss, m):
    if k < 0 or k > m:
        raise ValueError("need 0 <= k <= m")
    return float(_fit_term(crit, n, rss) + penalty_path(crit, n, m, k)[k])


def _order(beta_hat):
    # decreasing |beta_hat| over the slopes; stable so ties keep column order
    return np.argsort(-np.abs(beta_hat[1:]), kind="stable")


def select_nested(crit, data):
    n, m = data.n, data.m
    k_max = crit.resolved_k_max(n, m)
    bh = data.beta_hat
    order = _order(bh)
    gain = n * np.square(bh[1:][order])
    # RSS of the first k is the sum of the remaining gains; summing the tail
    # avoids cancellation against the total when the fit is nearly exact
    tail = np.concatenate([np.cumsum(gain[::-1])[::-1], [0.0]])
    rss = tail[: k_max + 1]
    order = order[:k_max]
    values = _fit_term(crit, n, rss) + penalty_path(crit, n, m, k_max)
    k = int(np.argmin(values))
    included = np.zeros(m, dtype=bool)
    included[order[:k]] = True
    return SelectedModel(included, k, float(values[k]), float(rss[k]))


def select_exhaustive(crit, data):
    """Brute-force minimiser over every subset of at most ``k_max`` regressors."""
    n, m = data.n, data.m
    if data.design.m_total > EXHAUSTIVE_LIMIT:
        raise DomainError(f"exhaustive search limited to m_total <= {EXHAUSTIVE_LIMIT}")
    k_max = crit.resolved_k_max(n, m)
    masks = np.arange(1 << m, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)
    sizes = bits.sum(axis=1)
    keep = sizes <= k_max
    bits, sizes = bits[keep], sizes[keep]
    rss = (~bits).astype(float) @ (n * np.square(data.beta_hat[1:]))
    values = _fit_term(crit, n, rss) + penalty_path(crit, n, m, k_max)[sizes]
    best = int(np.argmin(values))
    return SelectedModel(bits[best].copy(), int(sizes[best]), float(values[best]), float(rss[best]))


def mbic_threshold(n, m, d=DEFAULT_CONSTANTS["mBIC"]):
    """Known-sigma mBIC keeps regressor ``i`` iff ``n beta_i^2 / sigma^2`` exceeds this."""
    return math.log(n) + 2.0 * math.log(m) + d


def z_statistics(data, sigma=None):
    sigma = data.sigma if sigma is None else sigma
    return math.sqrt(data.n) * data.beta_hat[1:] / sigma


@dataclass(frozen=True, eq=False)
class NestingReport:
    k_sel: int
    k_G_minus_1: int
    k_F: int
    selected: np.ndarray
    sd_rejected: np.ndarray
    bh_rejected: np.ndarray

    @property
    def sizes_nested(self):
        return self.k_G_minus_1 <= self.k_sel <= self.k_F

    @property
    def sets_nested(self):
        return bool(np.all(self.sd_rejected <= self.selected) and np.all(self.selected <= self.bh_rejected))


def fdr_nesting_check(data, alpha=0.05, sigma=None, k_max=None):
    """Sizes of the FDR-penalized selection and the SD / BH rejection sets.

    The full nested path is searched unless ``k_max`` is given, since a cap
    below ``k_G - 1`` would break the comparison for reasons unrelated to
    the penalty.
    """
    sigma = data.sigma if sigma is None else sigma
    crit = Criterion("FDR_PEN", alpha, "known", sigma, k_max)
    sel = select_nested(crit, data)
    p = pvalues_from_z(z_statistics(data, sigma))
    bh = bh_step_up(p, alpha)
    sd = sd_step_down(p, alpha)
    return NestingReport(sel.k, sd.k, bh.k, sel.included, sd.rejected, bh.rejected)


def oracle_threshold(n, p, tau2, sigma=1.0):
    """Cutoff on ``n beta_hat^2 / sigma^2`` for the Bayes classifier under a normal prior.

    With ``u = n tau2 / sigma^2`` it is ``((u + 1) / u) (log(u + 1) + 2 log((1 - p) / p))``.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if not tau2 > 0 or not sigma > 0:
        raise ValueError("tau2 and sigma must be > 0")
    u = n * tau2 / sigma ** 2
    return (u + 1.0) / u * (math.log1p(u) + 2.0 * math.log((1.0 - p) / p))


def oracle_select(data, p, tau2, sigma=None):
    sigma = data.sigma if sigma is None else sigma
    stat = data.n * np.square(data.beta_hat[1:]) / sigma ** 2
    included = stat > oracle_threshold(data.n, p, tau2, sigma)
    k = int(included.sum())
    rss = data.n * float(np.square(data.beta_hat[1:][~included]).sum())
    return SelectedModel(included, k, math.nan, rss)


def t_two_sided_pvalue(t, df):
    """``P(|T| >= |t|)`` for Student ``t`` with ``df`` degrees of freedom."""
    t = np.asarray(t, dtype=float)
    return special.betainc(0.5 * df, 0.5, df / (df + t * t))


@dataclass(frozen=True, eq=False)
class SimpleTests:
    statistics: np.ndarray
    pvalues: np.ndarray
    degenerate: np.ndarray


def simple_regression_tests(data, sigma_mode="known", sigma=None):
    """Per-regressor tests from simple regressions of ``y`` on the intercept and one column.

    Known sigma gives z-tests.  Unknown sigma gives t-tests with ``n - 2``
    degrees of freedom, where each residual variance comes from its own
    one-regressor fit and so absorbs every other signal.
    """
    n, m = data.n, data.m
    if n < 3:
        raise ValueError("simple regression tests need n >= 3")
    if sigma_mode == "known":
        z = z_statistics(data, sigma)
        return SimpleTests(z, pvalues_from_z(z), np.zeros(m, dtype=bool))
    if sigma_mode != "unknown":
        raise ValueError("sigma_mode must be 'known' or 'unknown'")
    bh = data.beta_hat[1:]
    total = data.centered_ss
    rss = total - n * np.square(bh)
    # anything at rounding level of the total sum of squares counts as a perfect fit
    degenerate = rss <= 1e-12 * max(total, np.finfo(float).tiny)
    df = n - 2
    safe = np.where(degenerate, 1.0, rss)
    t = math.sqrt(n) * bh / np.sqrt(safe / df)
    pv = np.where(degenerate, 0.0, t_two_sided_pvalue(t, df))
    t = np.where(degenerate, np.copysign(np.inf, bh), t)
    return SimpleTests(t, pv, degenerate)
