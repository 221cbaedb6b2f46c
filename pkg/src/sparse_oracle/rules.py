"""Multiple testing rules on scaled statistics ``Z_i = sqrt(n) Xbar_i / sigma``.

Random-threshold rules (Bonferroni, BH step-up, SD step-down) act on
two-sided p-values; the fixed-threshold rules (BFDR, GW) are computed from
the mixture model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import numerics as nm
from .errors import DomainError, NoSolutionError
from .model import step_points
from .numerics import DEFAULT_QUAD, RootSpec

C_MAX = 50.0
_BFDR_ROOT = RootSpec(x_tol=1e-14, f_tol=1e-11, max_iter=400)


@dataclass(frozen=True)
class RejectionSet:
    rejected: np.ndarray
    k: int
    threshold_on_z: float


def _as_pvalues(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("p-values must be a 1-d vector")
    if np.any(~(p >= 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return p


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def _z_of_p(p_cut):
    # |Z| value whose two-sided p-value is p_cut (smallest subnormal guards p_cut = 0)
    return nm.normal_isf(max(0.5 * p_cut, 5e-324))


def pvalues_from_z(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("z statistics must be finite")
    return 2.0 * nm.normal_sf_array(np.abs(z))


def bonferroni(p, alpha):
    p = _as_pvalues(p)
    _check_alpha(alpha)
    m = p.size
    rejected = p <= alpha / m
    return RejectionSet(rejected, int(rejected.sum()), nm.normal_isf(alpha / (2 * m)))


def bh_step_up(p, alpha):
    """Benjamini-Hochberg: reject the ``k_F`` smallest p-values,
    ``k_F = max{i : p_(i) <= i alpha / m}``."""
    p = _as_pvalues(p)
    _check_alpha(alpha)
    m = p.size
    ps = np.sort(p)
    ok = np.nonzero(ps <= alpha * np.arange(1, m + 1) / m)[0]
    if ok.size == 0:
        return RejectionSet(np.zeros(m, dtype=bool), 0, math.inf)
    cut = ps[ok[-1]]
    rejected = p <= cut
    return RejectionSet(rejected, int(rejected.sum()), _z_of_p(cut))


def sd_step_down(p, alpha):
    """Step-down: ``k_G = min{i : p_(i) > i alpha / m}`` (``m + 1`` if none);
    reject the ``k_G - 1`` smallest p-values."""
    p = _as_pvalues(p)
    _check_alpha(alpha)
    m = p.size
    ps = np.sort(p)
    bad = np.nonzero(ps > alpha * np.arange(1, m + 1) / m)[0]
    k_g = int(bad[0]) + 1 if bad.size else m + 1
    if k_g == 1:
        return RejectionSet(np.zeros(m, dtype=bool), 0, math.inf)
    cut = ps[k_g - 2]
    rejected = p <= cut
    return RejectionSet(rejected, int(rejected.sum()), _z_of_p(cut))


def random_threshold_bh(z, alpha):
    """Data-dependent cutoff ``c_BH = min(c_Bon, c~_BH)`` on ``|Z|``.

    ``c~_BH`` is the infimum of ``y`` with
    ``2 (1 - Phi(y)) <= alpha * #{|Z_i| >= y} / m``.  Where that infimum is
    not attained the cutoff is nudged just above the next-largest ``|Z|``,
    so ``|Z_i| >= c_BH`` reproduces the step-up rejection set.
    """
    _check_alpha(alpha)
    az = np.sort(np.abs(np.asarray(z, dtype=float)))[::-1]
    m = az.size
    c_bon = nm.normal_isf(alpha / (2 * m))
    # y_j solves 2 (1 - Phi(y_j)) = alpha j / m
    y = -special.ndtri(alpha * np.arange(1, m + 1) / (2 * m))
    ok = np.nonzero(y <= az)[0]
    if ok.size == 0:
        return c_bon
    best = int(ok[-1]) + 1
    c = min(float(y[best - 1]), float(az[best - 1]))
    if best < m:
        c = max(c, float(np.nextafter(az[best], math.inf)))
    return min(c_bon, c)


def _log_power_over_t1(model, c, spec=DEFAULT_QUAD):
    # log H(c): alternative rejection probability over null rejection probability at |Z| >= c
    s = model.z_scale
    power = model.prior.expect(
        lambda mu: nm.normal_sf_array(c - s * mu) + nm.normal_sf_array(c + s * mu),
        spec, step_points(np.array([-c, c]) / s, 1.0 / s))
    if not power > 0:
        return -math.inf
    return math.log(power) - (math.log(2.0) + nm.log_normal_sf(c))


def bfdr(model, c, spec=DEFAULT_QUAD):
    """Bayesian FDR of the rule rejecting when ``|Z| >= c``."""
    c = float(c)
    if c < 0:
        raise ValueError("c must be >= 0")
    log_h = _log_power_over_t1(model, c, spec)
    ratio = math.exp(min(log_h + math.log(model.p) - math.log1p(-model.p), 700.0))
    return 1.0 / (1.0 + ratio)


def bfdr_threshold(model, alpha, spec=DEFAULT_QUAD):
    """Cutoff on ``|Z|`` with ``BFDR(c) = alpha``; unique for ``0 < alpha < 1 - p``."""
    if not 0.0 < alpha < 1.0 - model.p:
        raise NoSolutionError(f"BFDR level must lie in (0, 1 - p) = (0, {1 - model.p!r}); got {alpha!r}")
    hi = 1.0
    while bfdr(model, hi, spec) >= alpha:
        if hi >= C_MAX:
            raise DomainError(f"BFDR stays above {alpha!r} for c <= {C_MAX}")
        hi = min(2.0 * hi, C_MAX)
    return nm.find_root(lambda c: bfdr(model, c, spec) - alpha, 0.0, hi, _BFDR_ROOT)


def bfdr_threshold_asymptotic(model, params, alpha, alpha_inf=0.0):
    """Leading-order BFDR cutoff on ``|Z|``:
    ``c^2 = 2L - log(2L) + 2 log(sqrt(2) (1 - alpha_inf) / (sqrt(pi) C1))``
    with ``L = log(f / alpha)``."""
    L = math.log(model.f / alpha)
    if L <= 1.0:
        raise DomainError("need f / alpha > e")
    if not params.C1 > 0:
        raise DomainError("C1 = 0: all alternative mass lies inside (-T, T)")
    if not 0.0 <= alpha_inf < 1.0:
        raise ValueError("alpha_inf must lie in [0, 1)")
    c2 = (2.0 * L - math.log(2.0 * L)
          + 2.0 * math.log(math.sqrt(2.0) * (1.0 - alpha_inf) / (math.sqrt(math.pi) * params.C1)))
    if c2 <= 0:
        raise DomainError("asymptotic BFDR threshold is not positive")
    return math.sqrt(c2)


def gw_threshold(model, alpha, spec=DEFAULT_QUAD):
    """Non-random cutoff solving ``2 (1 - Phi(c)) / (1 - F(c)) = alpha``."""
    _check_alpha(alpha)
    log_alpha = math.log(alpha)

    def residual(c):
        log_h = _log_power_over_t1(model, c, spec)
        # 1 - F(c) = (1 - p) t1 + p * power, so the ratio is 1 / ((1 - p) + p H)
        if log_h == -math.inf:
            denom = 1.0 - model.p
        else:
            denom = (1.0 - model.p) + model.p * math.exp(min(log_h, 700.0))
        return -math.log(denom) - log_alpha

    if residual(C_MAX) > 0:
        raise DomainError(f"GW equation has no solution on [0, {C_MAX}]")
    return nm.find_root(residual, 0.0, C_MAX, _BFDR_ROOT)
