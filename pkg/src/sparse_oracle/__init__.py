"""Bayes-oracle multiple testing and sparse model selection for orthogonal regression."""

from .errors import (BracketError, DegenerateFitError, DomainError, NoSolutionError,
                     QuadratureError, UnsupportedPriorError)
from .experiment import (MetricsSummary, ReplicateResult, ScenarioConfig, aggregate, run_replicate,
                         run_scenario, sweep_part1, sweep_part2)
from .model import (AsymptoticParams, GridPrior, NormalPrior, TwoGroupsModel, TwoPointPrior,
                    density_at_zero, marginal_abs_z_cdf, prior_cdf, sample_effects)
from .numerics import (QuadratureSpec, RootSpec, find_root, integrate, normal_cdf,
                       normal_quantile)
from .oracle import (ThresholdPair, abos_diagnostics, bayes_risk, error_rates,
                     oracle_risk_asymptotic, oracle_thresholds_asymptotic, oracle_thresholds_exact)
from .regression import (Criterion, OrthogonalDesign, RegressionData, SelectedModel,
                         criterion_value, fdr_nesting_check, hadamard_design, ols_orthogonal,
                         oracle_select, select_exhaustive, select_nested, simple_regression_tests)
from .rules import (RejectionSet, bfdr, bfdr_threshold, bfdr_threshold_asymptotic, bh_step_up,
                    bonferroni, gw_threshold, pvalues_from_z, random_threshold_bh, sd_step_down)

__version__ = "0.1.0"
