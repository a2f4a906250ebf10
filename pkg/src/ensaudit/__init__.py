"""Audit and mitigate the disparate benefits of ensembling probabilistic binary classifiers."""

__version__ = "0.1.0"

from .data import IngestionError, LabeledPredictions, RunSet, load_predictions, save_predictions, select_members, validate_dataset
from .diversity import average_div, check_jensen_identity, diversity_cells, diversity_score
from .ensemble import EnsembleWeights, aggregate, ensemble_size_sweep, make_weights
from .metrics import FairnessReport, confusion_by_group, fairness_gaps, fairness_report, performance_metrics
from .postprocess import apply_decision_rule, build_roc_hull, fit_group_thresholds
from .stats import bootstrap_ci, delta_significance_table, welch_t_test
from .synthetic import SyntheticConfig, generate_synthetic
