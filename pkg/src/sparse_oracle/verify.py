"""Invariant suites run by ``sparse-oracle verify`` and by the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import AsymptoticParams, NormalPrior, TwoGroupsModel
from .numerics import LOG_SQRT_2PI
from .oracle import (bayes_risk, error_rates, oracle_risk_asymptotic, oracle_thresholds_asymptotic,
                     oracle_thresholds_exact)
from .regression import (FAMILIES, Criterion, fdr_nesting_check, hadamard_design, mbic_threshold,
                         oracle_threshold, select_exhaustive, select_nested, simulate_data)
from .rules import bfdr_threshold, bfdr_threshold_asymptotic

SUITES = ("asymptotics", "nesting", "oracle-equivalence")
SEQUENCE_N = (100, 1000, 10000, 100000)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: margin={self.margin:.6g} {self.detail}".rstrip()


def _strictly_decreasing(x):
    return all(b < a for a, b in zip(x, x[1:]))


def sparse_sequence(n, tau2=0.9):
    """Normal-prior model with ``p = 1/n`` and ``sigma = 1``."""
    return TwoGroupsModel(1.0 / n, 1.0, n, NormalPrior(tau2))


def cutoff_density_ratio(model, thr):
    """``sqrt(n) exp(-n a^2 / 2 sigma^2) f delta / (sqrt(2 pi) sigma rho(0-))``."""
    rho = model.prior.density_at_zero()[0]
    a = thr.a
    log_r = (0.5 * math.log(model.n) - model.n * a * a / (2 * model.sigma ** 2)
             + math.log(model.f * model.delta) - LOG_SQRT_2PI - math.log(model.sigma * rho))
    return math.exp(log_r)


def asymptotics_suite(ns=SEQUENCE_N, tau2=0.9):
    checks = []
    gaps, ratios, risk, bgaps = [], [], [], []
    for n in ns:
        model = sparse_sequence(n, tau2)
        params = AsymptoticParams.for_model(model, 0.0)
        exact = oracle_thresholds_exact(model)
        asym = oracle_thresholds_asymptotic(model, params)
        gaps.append(abs(exact.a - asym.a) / abs(exact.a))
        ratios.append(cutoff_density_ratio(model, exact))
        r = bayes_risk(model, n, error_rates(model, exact)).total
        risk.append(r / oracle_risk_asymptotic(model, params, n))
        if n >= 1000:
            alpha = n ** -0.5
            ce = bfdr_threshold(model, alpha)
            bgaps.append(abs(ce - bfdr_threshold_asymptotic(model, params, alpha)) / ce)
    seq = " ".join(f"{g:.3g}" for g in gaps)
    checks.append(Check("oracle threshold gap strictly decreasing", _strictly_decreasing(gaps),
                        min(a - b for a, b in zip(gaps, gaps[1:])), f"gaps=[{seq}]"))
    checks.append(Check("Bayes-classifier ratio within 0.05 of 1 at largest n",
                        abs(ratios[-1] - 1) <= 0.05, 0.05 - abs(ratios[-1] - 1),
                        "ratios=[" + " ".join(f"{x:.5f}" for x in ratios) + "]"))
    checks.append(Check("oracle risk ratio within 0.05 of 1 at largest n",
                        abs(risk[-1] - 1) <= 0.05, 0.05 - abs(risk[-1] - 1),
                        "ratios=[" + " ".join(f"{x:.5f}" for x in risk) + "]"))
    checks.append(Check("BFDR threshold gap decreasing and below 0.05 (n >= 1000)",
                        _strictly_decreasing(bgaps) and bgaps[-1] < 0.05, 0.05 - bgaps[-1],
                        "gaps=[" + " ".join(f"{g:.3g}" for g in bgaps) + "]"))
    return checks


def _random_instance(rng, m_choices=(16, 64, 256)):
    m = int(rng.choice(m_choices))
    p = rng.uniform(0.0, 0.3)
    tau2 = rng.choice([0.09, 0.9, 4.0])
    design = hadamard_design(m)
    beta = np.zeros(m)
    k = rng.binomial(m - 1, p)
    beta[rng.choice(m - 1, size=k, replace=False) + 1] = rng.normal(0.0, math.sqrt(tau2), size=k)
    return simulate_data(design, beta, 1.0, rng)


def nesting_suite(instances=10000, seed=20240501, alpha=0.05):
    rng = np.random.default_rng(seed)
    size_bad = set_bad = 0
    slack = math.inf
    for _ in range(instances):
        rep = fdr_nesting_check(_random_instance(rng), alpha)
        size_bad += not rep.sizes_nested
        set_bad += not rep.sets_nested
        slack = min(slack, rep.k_sel - rep.k_G_minus_1, rep.k_F - rep.k_sel)
    return [
        Check("k_G - 1 <= k_sel <= k_F", size_bad == 0, slack,
              f"violations={size_bad}/{instances}"),
        Check("SD set within FDR-penalized set within BH set", set_bad == 0, -set_bad,
              f"violations={set_bad}/{instances}"),
    ]


def oracle_equivalence_suite(instances=10000, exhaustive=100, seed=20240502):
    rng = np.random.default_rng(seed)
    checks = []
    # closed-form oracle cut against the root of the likelihood-ratio equation
    worst = 0.0
    for n in (64, 256, 1024, 4096):
        for p in (0.001, 0.01, 0.05, 0.2):
            model = TwoGroupsModel(p, 1.0, n, NormalPrior(0.9))
            thr = oracle_thresholds_exact(model)
            ref = oracle_threshold(n, p, 0.9)
            worst = max(worst, abs(n * thr.b ** 2 - ref) / ref, abs(n * thr.a ** 2 - ref) / ref)
    checks.append(Check("closed-form oracle cut matches exact solver (rel 1e-6)", worst <= 1e-6,
                        1e-6 - worst, f"worst_rel={worst:.3g}"))
    bad = 0
    for _ in range(instances):
        data = _random_instance(rng)
        sel = select_nested(Criterion("mBIC"), data)
        stat = data.n * np.square(data.beta_hat[1:]) / data.sigma ** 2
        bad += not np.array_equal(sel.included, stat > mbic_threshold(data.n, data.m))
    checks.append(Check("known-sigma mBIC equals fixed thresholding", bad == 0, -bad,
                        f"mismatches={bad}/{instances}"))
    bad = 0
    for _ in range(exhaustive):
        data = _random_instance(rng, m_choices=(4, 8, 16))
        for fam in FAMILIES:
            crit = Criterion(fam)
            if not np.array_equal(select_nested(crit, data).included,
                                  select_exhaustive(crit, data).included):
                bad += 1
    checks.append(Check("nested path equals exhaustive search", bad == 0, -bad,
                        f"mismatches={bad}/{exhaustive * len(FAMILIES)}"))
    return checks


def run_suite(name, **kwargs):
    if name == "asymptotics":
        return asymptotics_suite(**kwargs)
    if name == "nesting":
        return nesting_suite(**kwargs)
    if name == "oracle-equivalence":
        return oracle_equivalence_suite(**kwargs)
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
