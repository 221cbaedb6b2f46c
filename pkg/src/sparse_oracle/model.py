"""Two-groups mixture model and effect-size priors.

An effect is 0 with probability ``1 - p`` and is drawn from an alternative
distribution ``nu`` otherwise.  The test statistic for each effect is the
sample mean of ``n`` observations with noise sd ``sigma``.

Three alternative distributions are supported:

- :class:`NormalPrior` -- ``N(0, tau2)``.
- :class:`TwoPointPrior` -- mass ``w`` at ``mu_minus < 0`` and ``1 - w`` at ``mu_plus > 0``.
- :class:`GridPrior` -- a piecewise-linear density on an ordered support.
  Repeating a node introduces a jump, so one-sided limits at 0 may differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .errors import DomainError, UnsupportedPriorError
from .numerics import DEFAULT_QUAD, QuadratureSpec

__all__ = [
    "EffectPrior", "NormalPrior", "TwoPointPrior", "GridPrior",
    "TwoGroupsModel", "AsymptoticParams",
    "prior_cdf", "density_at_zero", "marginal_abs_z_cdf", "marginal_abs_z_sf",
    "sample_effects", "prior_to_text", "prior_from_text",
]


def _scaled_spec(spec, magnitude):
    # absolute tolerance relative to the size of the integral being computed
    if not magnitude > 0 or not math.isfinite(magnitude):
        return spec
    return QuadratureSpec(spec.abs_tol * min(magnitude, 1.0), spec.max_panels,
                          spec.truncation_radius)


class EffectPrior:
    """Distribution of an effect under the alternative."""

    kind = "abstract"
    has_density = True

    def cdf(self, x):
        raise NotImplementedError

    def mass_between(self, lo, hi):
        """``nu`` of the open interval ``(lo, hi)``."""
        raise NotImplementedError

    def density_at_zero(self):
        raise NotImplementedError

    def expect(self, g, spec=DEFAULT_QUAD, points=None):
        """``E[g(mu)]`` under the prior; ``g`` must accept numpy arrays."""
        raise NotImplementedError

    def log_tilted_mass(self, a, n, sigma, spec=DEFAULT_QUAD):
        """``log of the integral of exp(n (a mu - mu^2 / 2) / sigma^2) d nu(mu)``."""
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    def _check_both_sides(self):
        if not 0.0 < self.cdf(0.0) < 1.0:
            raise ValueError("prior must put positive mass on both sides of 0")


@dataclass(frozen=True)
class NormalPrior(EffectPrior):
    tau2: float
    kind = "normal"

    def __post_init__(self):
        if not (self.tau2 > 0 and math.isfinite(self.tau2)):
            raise ValueError("tau2 must be a positive finite number")

    @property
    def tau(self):
        return math.sqrt(self.tau2)

    def cdf(self, x):
        return nm.normal_cdf(x / self.tau)

    def mass_between(self, lo, hi):
        if hi <= lo:
            return 0.0
        if lo >= 0:
            return nm.normal_sf(lo / self.tau) - nm.normal_sf(hi / self.tau)
        if hi <= 0:
            return nm.normal_cdf(hi / self.tau) - nm.normal_cdf(lo / self.tau)
        return 1.0 - nm.normal_cdf(lo / self.tau) - nm.normal_sf(hi / self.tau)

    def pdf(self, x):
        return nm.normal_pdf_array(np.asarray(x) / self.tau) / self.tau

    def density_at_zero(self):
        rho = 1.0 / (math.sqrt(2.0 * math.pi) * self.tau)
        return rho, rho

    def expect(self, g, spec=DEFAULT_QUAD, points=None):
        tau = self.tau
        pts = None if points is None else np.asarray(points, dtype=float) / tau
        return nm.integrate(lambda w: g(tau * w) * nm.normal_pdf_array(w),
                            spec, 0.0, 1.0, pts)

    def log_tilted_mass(self, a, n, sigma, spec=DEFAULT_QUAD):
        s2 = sigma * sigma / n
        t2 = self.tau2
        # kernel x prior is a Gaussian bump: locate it for the quadrature window
        center = a * t2 / (t2 + s2)
        width = math.sqrt(t2 * s2 / (t2 + s2))
        s = math.sqrt(s2)
        peak = nm.normal_pdf((center - a) / s) / s * float(self.pdf(center))
        val = nm.integrate(
            lambda mu: nm.normal_pdf_array((mu - a) / s) / s * self.pdf(mu),
            _scaled_spec(spec, peak * width), center, width,
        )
        return _log_tilted_from_smoothed(val, a, n, sigma)

    def sample(self, rng, size):
        return rng.normal(0.0, self.tau, size)

    def params(self):
        return {"tau2": self.tau2}


@dataclass(frozen=True)
class TwoPointPrior(EffectPrior):
    mu_minus: float
    mu_plus: float
    w: float
    kind = "two_point"
    has_density = False

    def __post_init__(self):
        if not (self.mu_minus < 0 < self.mu_plus):
            raise ValueError("two_point prior needs mu_minus < 0 < mu_plus")
        if not 0.0 < self.w < 1.0:
            raise ValueError("two_point weight w must lie in (0, 1)")

    def cdf(self, x):
        if x < self.mu_minus:
            return 0.0
        if x < self.mu_plus:
            return self.w
        return 1.0

    def mass_between(self, lo, hi):
        m = 0.0
        if lo < self.mu_minus < hi:
            m += self.w
        if lo < self.mu_plus < hi:
            m += 1.0 - self.w
        return m

    def density_at_zero(self):
        raise UnsupportedPriorError("two_point prior has no density near 0")

    def expect(self, g, spec=DEFAULT_QUAD, points=None):
        vals = np.asarray(g(np.array([self.mu_minus, self.mu_plus])), dtype=float)
        return float(self.w * vals[0] + (1.0 - self.w) * vals[1])

    def log_tilted_mass(self, a, n, sigma, spec=DEFAULT_QUAD):
        terms = [math.log(self.w) + n * (a * mu - 0.5 * mu * mu) / sigma ** 2
                 for mu in (self.mu_minus,)]
        terms.append(math.log1p(-self.w)
                     + n * (a * self.mu_plus - 0.5 * self.mu_plus ** 2) / sigma ** 2)
        top = max(terms)
        return top + math.log(sum(math.exp(t - top) for t in terms))

    def sample(self, rng, size):
        pick = rng.random(size) < self.w
        return np.where(pick, self.mu_minus, self.mu_plus)

    def params(self):
        return {"mu_minus": self.mu_minus, "mu_plus": self.mu_plus, "w": self.w}


@dataclass(frozen=True, eq=False)
class GridPrior(EffectPrior):
    """Piecewise-linear density through ``(support[k], density[k])``.

    Densities are renormalised to integrate to one.  A node may be repeated
    once to encode a jump in the density.
    """

    support: tuple
    density: tuple
    kind = "grid"
    _x: np.ndarray = field(init=False, repr=False)
    _d: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.support, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != d.shape or x.size < 2:
            raise ValueError("grid prior needs matching support/density of length >= 2")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(d))):
            raise ValueError("grid prior values must be finite")
        if np.any(np.diff(x) < 0):
            raise ValueError("grid support must be ordered")
        if np.any(d < 0):
            raise ValueError("grid density must be non-negative")
        seg = 0.5 * (d[1:] + d[:-1]) * np.diff(x)
        total = seg.sum()
        if not total > 0:
            raise ValueError("grid density has zero mass")
        d = d / total
        cum = np.concatenate([[0.0], np.cumsum(seg / total)])
        object.__setattr__(self, "support", tuple(x.tolist()))
        object.__setattr__(self, "density", tuple(self.density))
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_d", d)
        object.__setattr__(self, "_cum", cum)
        self._check_both_sides()

    def pdf(self, mu):
        return np.interp(mu, self._x, self._d, left=0.0, right=0.0)

    def _partial(self, k, t):
        # mass of segment k between its left node and left node + t
        x, d = self._x, self._d
        h = x[k + 1] - x[k]
        if h == 0:
            return 0.0
        slope = (d[k + 1] - d[k]) / h
        return d[k] * t + 0.5 * slope * t * t

    def cdf(self, x):
        xs = self._x
        if x < xs[0]:
            return 0.0
        if x >= xs[-1]:
            return 1.0
        k = int(np.searchsorted(xs, x, side="right")) - 1
        return float(min(1.0, self._cum[k] + self._partial(k, x - xs[k])))

    def mass_between(self, lo, hi):
        # no atoms, so open and closed intervals coincide
        if hi <= lo:
            return 0.0
        return max(0.0, self.cdf(hi) - self.cdf(lo))

    def density_at_zero(self):
        x, d = self._x, self._d
        if not x[0] <= 0.0 <= x[-1]:
            return 0.0, 0.0
        left = self._limit(0.0, side="left")
        right = self._limit(0.0, side="right")
        return left, right

    def _limit(self, v, side):
        x, d = self._x, self._d
        if side == "left":
            k = int(np.searchsorted(x, v, side="left"))
            if k == 0:
                return 0.0
            k -= 1
        else:
            k = int(np.searchsorted(x, v, side="right")) - 1
            if k >= x.size - 1:
                return 0.0
        h = x[k + 1] - x[k]
        if h == 0:
            return float(d[k + 1] if side == "right" else d[k])
        t = (v - x[k]) / h
        return float(d[k] + t * (d[k + 1] - d[k]))

    def _breakpoints(self, lo, hi, extra=None):
        inner = self._x[(self._x > lo) & (self._x < hi)]
        if inner.size > 512:
            inner = inner[:: inner.size // 512 + 1]
        if extra is not None:
            inner = np.concatenate([inner, np.ravel(extra)])
        return inner

    def expect(self, g, spec=DEFAULT_QUAD, points=None):
        lo, hi = self._x[0], self._x[-1]
        return nm.integrate_interval(lambda mu: g(mu) * self.pdf(mu), lo, hi, spec,
                                     self._breakpoints(lo, hi, points))

    def log_tilted_mass(self, a, n, sigma, spec=DEFAULT_QUAD):
        s = sigma / math.sqrt(n)
        r = spec.truncation_radius * s
        lo, hi = max(a - r, self._x[0]), min(a + r, self._x[-1])
        if hi <= lo:
            return -math.inf
        peak = float(np.max(self._d)) / s
        val = nm.integrate_interval(
            lambda mu: nm.normal_pdf_array((mu - a) / s) / s * self.pdf(mu),
            lo, hi, _scaled_spec(spec, peak * min(hi - lo, s)),
            self._breakpoints(lo, hi, [a]),
        )
        return _log_tilted_from_smoothed(val, a, n, sigma)

    def sample(self, rng, size):
        u = rng.random(size)
        k = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, self._x.size - 2)
        x, d = self._x, self._d
        h = x[k + 1] - x[k]
        r = u - self._cum[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(h > 0, (d[k + 1] - d[k]) / np.where(h > 0, h, 1.0), 0.0)
            disc = np.sqrt(np.maximum(d[k] ** 2 + 2.0 * slope * r, 0.0))
            t = np.where(d[k] + disc > 0, 2.0 * r / (d[k] + disc), 0.0)
        return x[k] + np.clip(t, 0.0, h)

    def params(self):
        return {"support": list(self._x), "density": list(self._d)}

    def positive_near(self, T, eps=None):
        """Density is positive at every grid node within ``eps`` of ``+-T``.

        ``eps`` defaults to the largest grid spacing.  This is a numerical
        check of local positivity, not a proof.
        """
        if eps is None:
            eps = float(np.max(np.diff(self._x)))
        for centre in (-T, T):
            mask = np.abs(self._x - centre) <= eps
            if not mask.any() or np.any(self._d[mask] <= 0):
                return False
        return True


def _log_tilted_from_smoothed(smoothed, a, n, sigma):
    # smoothed = integral of N(mu; a, sigma^2/n) d nu(mu); undo the kernel normalisation
    if not smoothed > 0:
        return -math.inf
    return (n * a * a / (2.0 * sigma * sigma) + nm.LOG_SQRT_2PI
            + math.log(sigma / math.sqrt(n)) + math.log(smoothed))


def prior_cdf(prior, x):
    return prior.cdf(float(x))


def density_at_zero(prior):
    """One-sided density limits ``(rho(0-), rho(0+))``."""
    return prior.density_at_zero()


@dataclass(frozen=True)
class TwoGroupsModel:
    p: float
    sigma: float
    n: int
    prior: EffectPrior
    delta0: float = 1.0
    deltaA: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be an integer >= 1")
        if not (self.delta0 > 0 and self.deltaA > 0):
            raise ValueError("losses delta0 and deltaA must be > 0")
        if not isinstance(self.prior, EffectPrior):
            raise TypeError("prior must be an EffectPrior")

    @property
    def f(self):
        return (1.0 - self.p) / self.p

    @property
    def delta(self):
        return self.delta0 / self.deltaA

    @property
    def log_v(self):
        return math.log(self.n) + 2.0 * math.log(self.delta * self.f)

    @property
    def v(self):
        return self.n * (self.delta * self.f) ** 2

    @property
    def se(self):
        """Standard error of the sample mean, ``sigma / sqrt(n)``."""
        return self.sigma / math.sqrt(self.n)

    @property
    def z_scale(self):
        """Multiplier taking an effect to the Z scale, ``sqrt(n) / sigma``."""
        return math.sqrt(self.n) / self.sigma


@dataclass(frozen=True)
class AsymptoticParams:
    C: float
    T: float
    C1: float

    def __post_init__(self):
        if not self.C >= 0:
            raise ValueError("C must be >= 0")
        if not self.T >= 0:
            raise ValueError("T must be >= 0")
        if not 0.0 <= self.C1 <= 1.0:
            raise ValueError("C1 must lie in [0, 1]")

    @classmethod
    def for_model(cls, model, C=0.0):
        T = model.sigma * math.sqrt(C)
        C1 = 1.0 - model.prior.mass_between(-T, T) if T > 0 else 1.0
        return cls(C=C, T=T, C1=C1)

    def validate(self, model, rtol=1e-12):
        expected = model.sigma * math.sqrt(self.C)
        if abs(self.T - expected) > rtol * max(1.0, expected):
            raise ValueError(f"T={self.T!r} does not equal sigma*sqrt(C)={expected!r}")


_STEP_OFFSETS = np.array([-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0])


def step_points(centers, width):
    """Quadrature breakpoints around smoothed steps of the given width.

    A panel much wider than the step can hide it entirely from the
    Gauss-Kronrod nodes, so every transition is bracketed explicitly.
    """
    centers = np.ravel(np.asarray(centers, dtype=float))
    return (centers[:, None] + width * _STEP_OFFSETS[None, :]).ravel()


def _z_points(model, y):
    # effect sizes where the |Z| > y indicator switches, in mu units
    return step_points(np.array([-y, y]) / model.z_scale, 1.0 / model.z_scale)


def marginal_abs_z_sf(model, y, spec=DEFAULT_QUAD):
    """``P(|Z| > y)`` for ``Z = sqrt(n) Xbar / sigma`` under the mixture."""
    y = float(y)
    if y < 0:
        raise ValueError("y must be >= 0")
    s = model.z_scale
    null = 2.0 * nm.normal_sf(y)
    alt = model.prior.expect(
        lambda mu: nm.normal_sf_array(y - s * mu) + nm.normal_sf_array(y + s * mu),
        spec, _z_points(model, y))
    return (1.0 - model.p) * null + model.p * alt


def marginal_abs_z_cdf(model, y, spec=DEFAULT_QUAD):
    """``F(y) = P(|Z| <= y)`` under the mixture, by quadrature over the prior."""
    y = float(y)
    if y < 0:
        raise ValueError("y must be >= 0")
    if y == 0:
        return 0.0
    s = model.z_scale
    null = 1.0 - 2.0 * nm.normal_sf(y)
    alt = model.prior.expect(
        lambda mu: nm.normal_cdf_array(y - s * mu) - nm.normal_cdf_array(-y - s * mu),
        spec, _z_points(model, y))
    return (1.0 - model.p) * null + model.p * alt


def sample_effects(prior, p, m, rng):
    """Draw ``m`` effects from ``(1 - p) * delta_0 + p * prior``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    nonzero = rng.random(m) < p
    out = np.zeros(m)
    k = int(nonzero.sum())
    if k:
        out[nonzero] = prior.sample(rng, k)
    return out


def prior_to_text(prior):
    """Serialise a prior as ``key=value`` lines."""
    lines = [f"kind={prior.kind}"]
    for key, val in prior.params().items():
        if isinstance(val, list):
            lines.append(f"{key}=" + ",".join(repr(float(v)) for v in val))
        else:
            lines.append(f"{key}={float(val)!r}")
    return "\n".join(lines) + "\n"


def prior_from_text(text):
    """Parse the ``key=value`` block written by :func:`prior_to_text`."""
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed prior line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in fields:
            raise ValueError(f"duplicate prior key: {key}")
        fields[key] = val
    kind = fields.pop("kind", None)
    expected = {
        "normal": {"tau2"},
        "two_point": {"mu_minus", "mu_plus", "w"},
        "grid": {"support", "density"},
    }
    if kind not in expected:
        raise ValueError(f"unknown prior kind: {kind!r}")
    if set(fields) != expected[kind]:
        raise ValueError(f"{kind} prior needs keys {sorted(expected[kind])}, got {sorted(fields)}")
    if kind == "normal":
        return NormalPrior(float(fields["tau2"]))
    if kind == "two_point":
        return TwoPointPrior(float(fields["mu_minus"]), float(fields["mu_plus"]),
                             float(fields["w"]))
    support = tuple(float(v) for v in fields["support"].split(","))
    density = tuple(float(v) for v in fields["density"].split(","))
    return GridPrior(support, density)
