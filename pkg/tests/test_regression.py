import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg, stats

from sparse_oracle.errors import DegenerateFitError, DomainError
from sparse_oracle.regression import (Criterion, OrthogonalDesign, RegressionData,
                                      criterion_value, fdr_nesting_check, fwht, hadamard_design,
                                      mbic_threshold, ols_orthogonal, oracle_select,
                                      oracle_threshold, penalty_path, select_exhaustive,
                                      select_nested, simple_regression_tests, simulate_data,
                                      t_two_sided_pvalue)

# frozen from 30-digit arithmetic
ORACLE_CUT_256 = 11.3822142530103931  # u = 230.4, p = 0.05
MBIC_CUT_256 = 13.8551158125566335  # log 256 + 2 log 255 - 2 log 4
FAMILY_SEED = {"mBIC": 11, "mBIC1": 12, "mBIC2": 13, "mBIC3": 14, "FDR_PEN": 15}


def random_data(rng, m_total, k=3, scale=1.0, sigma=1.0):
    design = hadamard_design(m_total)
    beta = np.zeros(m_total)
    beta[0] = rng.normal()
    idx = rng.choice(np.arange(1, m_total), size=k, replace=False)
    beta[idx] = scale * rng.standard_normal(k)
    return simulate_data(design, beta, sigma, rng)


@pytest.mark.parametrize("m", [2, 4, 256])
def test_design_matches_scipy(m):
    design = hadamard_design(m)
    assert np.array_equal(design.matrix, linalg.hadamard(m))
    assert np.array_equal(design.gram(), m * np.eye(m, dtype=np.int64))
    assert np.all(design.matrix[:, 0] == 1)


def test_large_design_orthogonal():
    assert OrthogonalDesign(2048).is_orthogonal()


@pytest.mark.parametrize("m", [0, 3, 12, -4])
def test_design_rejects_bad_sizes(m):
    with pytest.raises(ValueError):
        OrthogonalDesign(m)


def test_design_text():
    assert hadamard_design(2).to_text() == "+ +\n+ -"


@settings(max_examples=30)
@given(st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_fwht_is_matrix_product(log_m, seed):
    m = 2 ** log_m
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m)
    h = linalg.hadamard(m)
    np.testing.assert_allclose(fwht(v), h @ v, atol=1e-10 * m)
    np.testing.assert_allclose(fwht(fwht(v)), m * v, atol=1e-9 * m)


def test_fwht_keeps_integers_and_batches():
    a = np.arange(16, dtype=np.int64).reshape(2, 8)
    out = fwht(a)
    assert out.dtype == np.int64
    assert np.array_equal(out, a @ linalg.hadamard(8).T)


def test_ols_noiseless():
    rng = np.random.default_rng(0)
    design = hadamard_design(64)
    beta = rng.standard_normal(64)
    data = RegressionData(design, design.apply(beta))
    np.testing.assert_allclose(ols_orthogonal(data), beta, atol=1e-12)
    np.testing.assert_allclose(ols_orthogonal(data), np.linalg.lstsq(design.matrix, data.y, rcond=None)[0],
                               atol=1e-12)


def test_ols_constant_response():
    data = RegressionData(hadamard_design(16), np.full(16, 2.5))
    bh = data.beta_hat
    assert bh[0] == 2.5 and np.all(bh[1:] == 0)
    assert data.centered_ss == 0.0


def test_ols_null_variance():
    design = hadamard_design(16)
    rng = np.random.default_rng(1)
    eps = 2.0 * rng.standard_normal((10 ** 5, 16))
    est = fwht(eps) / 16
    # Var(beta_hat_j) = sigma^2 / n
    assert np.allclose(est.var(axis=0), 4.0 / 16, rtol=0.05)


def test_regression_data_validation():
    design = hadamard_design(8)
    with pytest.raises(ValueError):
        RegressionData(design, np.zeros(7))
    with pytest.raises(ValueError):
        RegressionData(design, np.zeros(8), beta_true=np.ones(8), k_star=3)
    assert RegressionData(design, np.zeros(8), beta_true=np.r_[5.0, 1.0, 0, 0, 0, 0, 2.0, 0]).k_star == 2


def test_criterion_validation():
    with pytest.raises(ValueError):
        Criterion("AIC")
    with pytest.raises(ValueError):
        Criterion("FDR_PEN", 1.5)
    with pytest.raises(DomainError):
        Criterion("mBIC", sigma_mode="unknown", k_max=15).resolved_k_max(16, 15)
    assert Criterion("mBIC", sigma_mode="unknown").resolved_k_max(16, 15) == 14


def test_criterion_value_k0():
    for fam in ("mBIC", "mBIC1", "mBIC2", "mBIC3", "FDR_PEN"):
        assert criterion_value(Criterion(fam), 256, 0, 10.0, 255) == 10.0
    assert criterion_value(Criterion("mBIC", sigma_mode="unknown"), 256, 0, 10.0, 255) == \
        pytest.approx(256 * math.log(10.0))


def test_penalty_formulas():
    n, m, k = 256, 255, 7
    big = math.log(n * m * m)
    d2 = -2 * math.log(4)
    p = {f: penalty_path(Criterion(f), n, m, k)[k] for f in ("mBIC", "mBIC1", "mBIC2", "mBIC3")}
    assert p["mBIC"] == pytest.approx(k * (big + d2))
    assert p["mBIC2"] - p["mBIC"] == pytest.approx(-2 * math.log(math.factorial(k)))
    ref1 = k * big - 2 * math.log(math.factorial(k)) - sum(math.log(big - 2 * math.log(i))
                                                          for i in range(1, k + 1))
    assert p["mBIC1"] == pytest.approx(ref1)
    assert p["mBIC3"] == pytest.approx(k * (big + d2 + 2) - 2 * k * math.log(k))


def test_fdr_penalty_against_scipy():
    alpha, m = 0.05, 255
    path = penalty_path(Criterion("FDR_PEN", alpha), 256, m, 10)
    ref = np.concatenate([[0.0], np.cumsum(stats.norm.isf(alpha * np.arange(1, 11) / (2 * m)) ** 2)])
    np.testing.assert_allclose(path, ref, rtol=1e-12)


def test_mbic1_domain():
    with pytest.raises(DomainError):
        penalty_path(Criterion("mBIC1"), 2, 1, 1)  # n m^2 = 2 < e


def test_unknown_sigma_degenerate_rss():
    with pytest.raises(DegenerateFitError):
        criterion_value(Criterion("mBIC", sigma_mode="unknown"), 16, 1, 0.0, 15)


def test_rss_telescopes():
    rng = np.random.default_rng(2)
    data = random_data(rng, 32, k=4, scale=2.0)
    sel = select_nested(Criterion("mBIC2"), data)
    x = data.design.matrix[:, 1:][:, sel.included].astype(float)
    x = np.column_stack([np.ones(32), x])
    resid = data.y - x @ np.linalg.lstsq(x, data.y, rcond=None)[0]
    assert sel.rss == pytest.approx(float(resid @ resid), rel=1e-10)


@pytest.mark.parametrize("family", ["mBIC", "mBIC1", "mBIC2", "mBIC3", "FDR_PEN"])
@pytest.mark.parametrize("mode", ["known", "unknown"])
def test_nested_equals_exhaustive(family, mode):
    rng = np.random.default_rng([FAMILY_SEED[family], mode == "known"])
    for _ in range(100):
        m_total = int(rng.choice([8, 16]))
        data = random_data(rng, m_total, k=int(rng.integers(0, 4)), scale=float(rng.uniform(0.2, 2)))
        crit = Criterion(family, sigma_mode=mode, k_max=int(rng.integers(0, m_total - 2)))
        if family == "mBIC1":
            crit = Criterion(family, constant=None, sigma_mode=mode, k_max=min(crit.k_max, 3))
        a, b = select_nested(crit, data), select_exhaustive(crit, data)
        assert a.criterion_value == pytest.approx(b.criterion_value, rel=1e-10, abs=1e-10)
        if a.k == b.k:
            assert np.array_equal(a.included, b.included) or a.criterion_value == pytest.approx(
                b.criterion_value)


def test_exhaustive_size_limit():
    data = random_data(np.random.default_rng(0), 32)
    with pytest.raises(DomainError):
        select_exhaustive(Criterion("mBIC"), data)


def test_k_max_zero_selects_nothing():
    data = random_data(np.random.default_rng(3), 64, k=5, scale=5.0)
    sel = select_nested(Criterion("mBIC", k_max=0), data)
    assert sel.k == 0 and not sel.included.any()


def test_noiseless_two_strong_signals():
    design = hadamard_design(64)
    beta = np.zeros(64)
    beta[[5, 40]] = (3.0, -2.0)
    data = RegressionData(design, design.apply(beta), beta, sigma=1.0)
    for fam in ("mBIC", "mBIC2", "mBIC3", "FDR_PEN"):
        sel = select_nested(Criterion(fam), data)
        assert sel.k == 2 and sel.included[4] and sel.included[39]
        assert sel.rss == pytest.approx(0.0, abs=1e-9)


def test_mbic_is_threshold_rule():
    rng = np.random.default_rng(4)
    for _ in range(50):
        data = random_data(rng, 256, k=10, scale=0.3)
        sel = select_nested(Criterion("mBIC"), data)
        stat = 256 * np.square(data.beta_hat[1:])
        assert np.array_equal(sel.included, stat > MBIC_CUT_256)
    assert mbic_threshold(256, 255) == pytest.approx(MBIC_CUT_256, rel=1e-14)


def test_nesting_null_and_saturated():
    design = hadamard_design(64)
    rng = np.random.default_rng(5)
    null = simulate_data(design, np.zeros(64), 1.0, rng)
    rep = fdr_nesting_check(null)
    assert rep.sizes_nested and rep.sets_nested
    beta = np.zeros(64)
    beta[1:] = 20.0
    full = simulate_data(design, beta, 1.0, rng)
    rep = fdr_nesting_check(full)
    assert rep.k_sel == rep.k_F == rep.k_G_minus_1 == 63
    assert rep.sets_nested


def test_nesting_random():
    rng = np.random.default_rng(6)
    for _ in range(300):
        m_total = int(rng.choice([16, 64, 256]))
        data = random_data(rng, m_total, k=int(rng.integers(0, m_total // 4)),
                           scale=float(rng.uniform(0.1, 1.0)))
        rep = fdr_nesting_check(data, alpha=float(rng.choice([0.05, 0.1, 0.2])))
        assert rep.sizes_nested and rep.sets_nested


def test_oracle_threshold_values():
    assert oracle_threshold(256, 0.05, 0.9) == pytest.approx(ORACLE_CUT_256, rel=1e-13)
    # p = 1/2 leaves only the log(u + 1) term
    assert oracle_threshold(100, 0.5, 1.0) == pytest.approx(101 / 100 * math.log(101))
    cuts = [oracle_threshold(256, p, 0.9) for p in (0.2, 0.1, 0.01, 0.001)]
    assert all(b > a for a, b in zip(cuts, cuts[1:]))
    with pytest.raises(ValueError):
        oracle_threshold(256, 0.0, 0.9)


def test_oracle_select_uses_cut():
    data = random_data(np.random.default_rng(7), 256, k=8, scale=0.5)
    sel = oracle_select(data, 0.05, 0.9)
    assert np.array_equal(sel.included, 256 * np.square(data.beta_hat[1:]) > ORACLE_CUT_256)


@pytest.mark.parametrize("df", [1, 3, 14, 254])
def test_t_pvalue_against_scipy(df):
    t = np.array([0.0, 0.3, 1.0, 2.5, -4.0, 12.0])
    np.testing.assert_allclose(t_two_sided_pvalue(t, df), 2 * stats.t.sf(np.abs(t), df), rtol=1e-12)


def test_t_pvalue_large_df_is_normal():
    t = np.array([0.5, 1.96, 3.0])
    np.testing.assert_allclose(t_two_sided_pvalue(t, 10 ** 6), 2 * stats.norm.sf(t), atol=1e-3)


def test_simple_tests_known_sigma_are_z():
    data = random_data(np.random.default_rng(8), 64, sigma=2.0)
    res = simple_regression_tests(data, "known")
    np.testing.assert_allclose(res.statistics, 8 * data.beta_hat[1:] / 2.0)


def test_unknown_sigma_t_below_z():
    # residual sd of each one-regressor fit absorbs the other signals, so |t| < |z| here
    data = random_data(np.random.default_rng(9), 64, k=10, scale=2.0)
    z = simple_regression_tests(data, "known").statistics
    t = simple_regression_tests(data, "unknown")
    assert np.all(np.abs(t.statistics) < np.abs(z))
    assert not t.degenerate.any()
    np.testing.assert_allclose(t.pvalues, 2 * stats.t.sf(np.abs(t.statistics), 62), rtol=1e-10)


def test_simple_tests_degenerate_fit():
    design = hadamard_design(16)
    beta = np.zeros(16)
    beta[3] = 1.0
    data = RegressionData(design, design.apply(beta))
    res = simple_regression_tests(data, "unknown")
    assert res.degenerate[2] and res.pvalues[2] == 0.0 and math.isinf(res.statistics[2])
    assert res.degenerate.sum() == 1
