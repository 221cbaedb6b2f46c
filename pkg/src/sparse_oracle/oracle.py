"""Bayes-oracle thresholds, error rates and Bayes risk for fixed cutoff rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import numerics as nm
from .errors import DomainError, UnsupportedPriorError
from .model import GridPrior, NormalPrior, TwoPointPrior, step_points
from .numerics import DEFAULT_QUAD, RootSpec

# residual of the log-likelihood-ratio equation, i.e. a relative tolerance
_ORACLE_ROOT = RootSpec(x_tol=1e-300, f_tol=1e-12, max_iter=400)


@dataclass(frozen=True)
class ThresholdPair:
    """Accept the null iff ``a < Xbar < b``; ``se`` is ``sigma / sqrt(n)``."""

    a: float
    b: float
    se: float = 1.0

    def __post_init__(self):
        if not self.a < 0 < self.b:
            raise ValueError(f"thresholds need a < 0 < b, got a={self.a!r}, b={self.b!r}")
        if not self.se > 0:
            raise ValueError("se must be > 0")

    @classmethod
    def symmetric(cls, c, model):
        """Cutoff ``|Z| >= c`` on the scaled statistic ``sqrt(n) Xbar / sigma``."""
        return cls(-c * model.se, c * model.se, model.se)

    @property
    def c_scaled(self):
        return abs(self.a) / self.se, self.b / self.se


@dataclass(frozen=True)
class ErrorRates:
    t1: float
    t2: float

    def __post_init__(self):
        for name in ("t1", "t2"):
            val = getattr(self, name)
            if not -1e-12 <= val <= 1 + 1e-12:
                raise ValueError(f"{name}={val!r} is not a probability")


@dataclass(frozen=True)
class RiskBreakdown:
    r1: float
    r2: float

    @property
    def total(self):
        return self.r1 + self.r2


@dataclass(frozen=True)
class AbosDiagnostics:
    z_a: float
    z_b: float
    satisfies_optcv1: bool
    satisfies_optcv2_trend: float


def _log_lr_residual(model, spec):
    target = math.log(model.delta * model.f)

    def residual(a):
        return model.prior.log_tilted_mass(a, model.n, model.sigma, spec) - target

    return residual


def oracle_thresholds_exact(model, spec=DEFAULT_QUAD, root_spec=_ORACLE_ROOT):
    """Cutoffs of the per-test Bayes classifier.

    Solves ``(1-p) delta0 = p deltaA * integral exp(n (a mu - mu^2/2) / sigma^2) d nu``
    on each side of zero.  The integral is convex in ``a``, so when it is
    below ``f * delta`` at ``a = 0`` each half-line holds exactly one root.
    """
    residual = _log_lr_residual(model, spec)
    if residual(0.0) >= 0:
        raise DomainError("Bayes classifier rejects at Xbar = 0; no acceptance region")
    limit = 10.0 * model.sigma
    spread = 2.0 * math.log(model.delta * model.f) + math.log(model.n) + 10.0
    start = model.sigma * math.sqrt(max(spread, 1.0) / model.n)
    roots = []
    for sign in (-1.0, 1.0):
        edge = min(start, limit)
        while residual(sign * edge) <= 0:
            if edge >= limit:
                raise DomainError(
                    f"no oracle root with |a| <= 10 sigma on the {'negative' if sign < 0 else 'positive'} side")
            edge = min(2.0 * edge, limit)
        roots.append(nm.find_root(residual, sign * edge, 0.0, root_spec))
    return ThresholdPair(roots[0], roots[1], model.se)


def oracle_thresholds_asymptotic(model, params):
    """Leading-order oracle cutoffs.

    For ``C > 0`` these are ``(-T, T)``.  For ``C = 0`` the cutoffs invert
    ``sqrt(n) exp(-n a^2 / 2 sigma^2) = sqrt(2 pi) sigma rho(0-) / (f delta)``
    (and likewise with ``rho(0+)`` for ``b``).
    """
    params.validate(model)
    if params.C > 0:
        return ThresholdPair(-params.T, params.T, model.se)
    if model.v <= 1:
        raise DomainError("asymptotic thresholds need v = n (delta f)^2 > 1")
    rho_minus, rho_plus = model.prior.density_at_zero()
    cut = []
    for rho in (rho_minus, rho_plus):
        if not rho > 0:
            raise UnsupportedPriorError("density at 0 must be positive for C = 0")
        arg = (math.log(model.delta * model.f) + 0.5 * math.log(model.n)
               - nm.LOG_SQRT_2PI - math.log(model.sigma * rho))
        if arg <= 0:
            raise DomainError("asymptotic threshold undefined: log argument <= 0")
        cut.append(model.se * math.sqrt(2.0 * arg))
    return ThresholdPair(-cut[0], cut[1], model.se)


def error_rates(model, thr, spec=DEFAULT_QUAD):
    s = model.z_scale
    t1 = nm.normal_cdf(s * thr.a) + nm.normal_sf(s * thr.b)
    # acceptance probability under the alternative, integrated over the prior
    t2 = model.prior.expect(
        lambda mu: nm.normal_cdf_array(s * (thr.b - mu)) - nm.normal_cdf_array(s * (thr.a - mu)),
        spec, step_points([thr.a, thr.b], 1.0 / s))
    return ErrorRates(t1, min(max(t2, 0.0), 1.0))


def bayes_risk(model, m, rates):
    if m < 1:
        raise ValueError("m must be >= 1")
    r1 = m * (1.0 - model.p) * rates.t1 * model.delta0
    r2 = m * model.p * rates.t2 * model.deltaA
    return RiskBreakdown(r1, r2)


def oracle_risk_asymptotic(model, params, m):
    """Leading term of the Bayes-oracle risk."""
    params.validate(model)
    if params.C > 0:
        return m * model.p * model.deltaA * model.prior.mass_between(-params.T, params.T)
    if model.v <= 1:
        raise DomainError("asymptotic risk needs v > 1")
    rho_minus, rho_plus = model.prior.density_at_zero()
    return (m * model.p * model.deltaA * model.sigma
            * math.sqrt(model.log_v / model.n) * (rho_minus + rho_plus))


def abos_diagnostics(model, params, thr, tol=0.5):
    """Distance of a fixed-threshold rule from the optimal cutoff ``log v``.

    ``satisfies_optcv2_trend`` is ``min(z_a, z_b) + 2 log log v``; the rule
    needs this to diverge along a sequence of models.
    """
    log_v = model.log_v
    if log_v <= 0:
        raise DomainError("diagnostics need v > 1")
    za = model.n * thr.a ** 2 / model.sigma ** 2 - log_v
    zb = model.n * thr.b ** 2 / model.sigma ** 2 - log_v
    ok = max(abs(za), abs(zb)) / log_v < tol
    return AbosDiagnostics(za, zb, ok, min(za, zb) + 2.0 * math.log(log_v))


def assumption_c_holds(prior, params):
    """Numerical check that the prior has a positive density where it matters.

    ``C > 0`` needs positivity around ``+-T``; ``C = 0`` needs positive,
    finite one-sided densities at 0.
    """
    if isinstance(prior, TwoPointPrior):
        return False
    if params.C == 0:
        lo, hi = prior.density_at_zero()
        return lo > 0 and hi > 0 and math.isfinite(lo) and math.isfinite(hi)
    if isinstance(prior, GridPrior):
        return prior.positive_near(params.T)
    return isinstance(prior, NormalPrior)
