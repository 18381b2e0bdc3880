"""Nonresponse bias analysis: missing-data patterns, proxy pattern-mixture
sensitivity analysis, response propensities, design-based estimation and a
simulation lab."""

from .dataset import ColumnSpec, RectDataset, load_table, missingness_summary
from .glm import DesignMatrixSpec, auc, fit_logistic, fit_ols, grow_tree, stepwise_forward
from .pipeline import NrbaConfig, NrbaReport, external_comparison, item_missingness_audit, run_pipeline
from .ppmm import (ProxySeries, build_proxy, classify_strength, g_coefficient, ppmm_mle,
                   sensitivity_sweep, standardized_deviation)
from .propensity import fit_stage_propensity, ipw_weights, quintile_strata
from .simlab import rubin_combine, run_grid, true_bias
from .survey_est import SurveyDesign, design_effect, rake, weighted_mean, weighting_class_adjust

__version__ = "0.1.0"
