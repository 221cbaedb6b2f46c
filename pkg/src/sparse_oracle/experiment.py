"""Seeded Monte-Carlo harness for orthogonal-regression selection rules.

Each replicate draws ``k* ~ Binomial(m_total - 1, p)`` active slopes at random
positions, coefficients from ``N(0, tau2)`` and unit-variance noise, then
runs every configured method on that same dataset.  Replicate ``i`` of a
scenario uses its own stream spawned from ``(seed, stream, i)``, so results
do not depend on how replicates are scheduled.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .regression import (Criterion, hadamard_design, oracle_select, select_nested,
                         simple_regression_tests, simulate_data)
from .rules import bh_step_up, sd_step_down

METHODS = ("oracle", "mBIC", "mBIC1", "mBIC2", "mBIC3", "BH", "SD")
PART1_P = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2)
PART1_M = (256, 1024)
PART2_M = (128, 256, 512, 1024, 2048, 4096)
PART2_BETA = (1.0, 0.5, 0.25, 0.125)
THREADS_ENV = "SPARSE_ORACLE_THREADS"


@dataclass(frozen=True)
class ScenarioConfig:
    m_total: int
    p: float
    tau2: float = 0.9
    sigma_mode: str = "known"
    methods: tuple = METHODS
    alpha: float = 0.05
    replicates: int = 10000
    seed: int = 0
    k_max_fraction: float = 0.3
    sigma: float = 1.0
    binomial_over_all_columns: bool = False
    beta_exponent: float | None = None
    stream: int = 0

    def __post_init__(self):
        m = self.m_total
        if not isinstance(m, (int, np.integer)) or m < 4 or m & (m - 1):
            raise ValueError(f"m_total must be a power of two >= 4, got {m!r}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must lie in [0, 1), got {self.p!r}")
        if not self.tau2 > 0:
            raise ValueError("tau2 must be > 0")
        if self.sigma_mode not in ("known", "unknown"):
            raise ValueError("sigma_mode must be 'known' or 'unknown'")
        methods = tuple(self.methods)
        unknown = [x for x in methods if x not in METHODS]
        if unknown or not methods or len(set(methods)) != len(methods):
            raise ValueError(f"methods must be distinct names from {METHODS}, got {methods!r}")
        object.__setattr__(self, "methods", methods)
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 < self.k_max_fraction <= 1:
            raise ValueError("k_max_fraction must lie in (0, 1]")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.stream < 0:
            raise ValueError("stream must be >= 0")

    @property
    def k_max(self):
        cap = self.m_total - 1 if self.sigma_mode == "known" else self.m_total - 2
        return min(int(math.floor(self.k_max_fraction * self.m_total)), cap)

    def rng(self, replicate_index):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, replicate_index))
        return np.random.default_rng(ss)

    def digest(self):
        text = "\n".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ReplicateResult:
    method: str
    FP: int
    FN: int
    k_star: int
    data_digest: str = ""


@dataclass(frozen=True)
class MetricsSummary:
    MP: float
    FDR: float
    Power: float
    MP_se: float
    FDR_se: float
    Power_se: float
    n_power_replicates: int
    replicates: int


def _draw_data(cfg, rng):
    m = cfg.m_total
    design = hadamard_design(m)
    trials = m if cfg.binomial_over_all_columns else m - 1
    k_star = min(int(rng.binomial(trials, cfg.p)), m - 1)
    beta = np.zeros(m)
    pos = rng.choice(m - 1, size=k_star, replace=False) + 1
    beta[pos] = rng.normal(0.0, math.sqrt(cfg.tau2), size=k_star)
    return simulate_data(design, beta, cfg.sigma, rng)


def _select(cfg, method, data):
    if method == "oracle":
        if cfg.p == 0:
            return np.zeros(data.m, dtype=bool)
        return oracle_select(data, cfg.p, cfg.tau2, cfg.sigma).included
    if method in ("BH", "SD"):
        tests = simple_regression_tests(data, cfg.sigma_mode, cfg.sigma)
        rule = bh_step_up if method == "BH" else sd_step_down
        return rule(tests.pvalues, cfg.alpha).rejected
    crit = Criterion(method, None, cfg.sigma_mode, cfg.sigma, cfg.k_max)
    return select_nested(crit, data).included


def run_replicate(cfg, replicate_index):
    """Outcome of every configured method on replicate ``replicate_index``."""
    data = _draw_data(cfg, cfg.rng(replicate_index))
    active = data.beta_true[1:] != 0
    digest = hashlib.blake2b(data.y.tobytes(), digest_size=8).hexdigest()
    out = []
    for method in cfg.methods:
        sel = _select(cfg, method, data)
        fp = int(np.count_nonzero(sel & ~active))
        fn = int(np.count_nonzero(~sel & active))
        out.append(ReplicateResult(method, fp, fn, data.k_star, digest))
    return out


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def aggregate(results, m_total):
    """Average MP, FDR and Power over replicates of a single method."""
    if not results:
        raise ValueError("no replicate results to aggregate")
    if len({r.method for r in results}) != 1:
        raise ValueError("aggregate expects results of a single method")
    fp = np.array([r.FP for r in results], dtype=float)
    fn = np.array([r.FN for r in results], dtype=float)
    ks = np.array([r.k_star for r in results], dtype=float)
    mp = (fp + fn) / (m_total - 1)
    disc = fp + ks - fn
    fdr = np.divide(fp, disc, out=np.zeros_like(fp), where=disc > 0)
    has = ks > 0
    power = (ks[has] - fn[has]) / ks[has]
    mp_m, mp_se = _mean_se(mp)
    fdr_m, fdr_se = _mean_se(fdr)
    pw_m, pw_se = _mean_se(power)
    return MetricsSummary(mp_m, fdr_m, pw_m, mp_se, fdr_se, pw_se, int(has.sum()), len(results))


def worker_count():
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(n, 1)


def _run_chunk(args):
    cfg, lo, hi = args
    return [run_replicate(cfg, i) for i in range(lo, hi)]


def run_scenario(cfg, workers=None):
    """All replicates of ``cfg`` in index order, grouped by method."""
    workers = worker_count() if workers is None else workers
    n = cfg.replicates
    if workers <= 1 or n < 64:
        per_rep = [run_replicate(cfg, i) for i in range(n)]
    else:
        size = max(16, n // (8 * workers))
        chunks = [(cfg, lo, min(lo + size, n)) for lo in range(0, n, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = [r for part in pool.map(_run_chunk, chunks) for r in part]
    grouped = {m: [] for m in cfg.methods}
    for rep in per_rep:
        for r in rep:
            grouped[r.method].append(r)
    return grouped


@dataclass(frozen=True)
class SweepRow:
    scenario_id: str
    config: ScenarioConfig
    method: str
    summary: MetricsSummary


def run_config(cfg, scenario_id=None, workers=None):
    scenario_id = scenario_id or f"m{cfg.m_total}-p{cfg.p:g}-{cfg.sigma_mode}"
    grouped = run_scenario(cfg, workers)
    return [SweepRow(scenario_id, cfg, m, aggregate(grouped[m], cfg.m_total)) for m in cfg.methods]


def part1_configs(base, m_values=PART1_M, p_values=PART1_P, sigma_modes=("known", "unknown")):
    out = []
    for m in m_values:
        for p in p_values:
            for mode in sigma_modes:
                cfg = replace(base, m_total=m, p=p, sigma_mode=mode, beta_exponent=None,
                              stream=len(out))
                out.append((f"part1-m{m}-p{p:g}-{mode}", cfg))
    return out


def part2_p(m, beta):
    """``p = c_beta m^-beta`` with ``c_beta = 0.125 * 128^beta``, so ``p(128) = 0.125``."""
    return 0.125 * (128.0 / m) ** beta


def part2_configs(base, m_values=PART2_M, betas=PART2_BETA):
    out = []
    for beta in betas:
        for m in m_values:
            cfg = replace(base, m_total=m, p=part2_p(m, beta), beta_exponent=beta,
                          stream=len(out))
            out.append((f"part2-b{beta:g}-m{m}", cfg))
    return out


def sweep_part1(base, workers=None, **grid):
    return [row for sid, cfg in part1_configs(base, **grid) for row in run_config(cfg, sid, workers)]


def sweep_part2(base, workers=None, **grid):
    return [row for sid, cfg in part2_configs(base, **grid) for row in run_config(cfg, sid, workers)]
