"""Two-stage collective preference learning for UI design exploration.

Stage one fits a Gaussian-process regressor to crowd-averaged Likert
labels and proposes new design solutions by Expected Improvement; stage
two refines the ranking of the best candidates with a pairwise
comparison GP tuned through a Laplace-approximate evidence. The rater
crowd is pluggable: a synthetic oracle population or live humans behind
the bundled HTTP panel.

Modules
-------
space      : design-variable domains, sampling, unit-cube normalization
gp         : RBF-kernel GP regression and evidence-based width selection
proactive  : Likert aggregation, rater filtering, EI batch selection
preference : pairwise-comparison GP (MAP, Laplace evidence, tuning)
oracle     : synthetic ground truth and simulated rater panel
metrics    : AP, fold-gain NDCG, MAE
analysis   : top-k distributions, density grids, variable correlation
pipeline   : experiment directory orchestration (init/round/tune/evaluate)
service    : HTTP facade for live labeling and what-if exploration
"""

from .space import (
    DesignSpace,
    VariableSpec,
    denormalize,
    load_space,
    normalize,
    sample_uniform,
    toy_space_2d,
    validate,
)
from .gp import GpPosterior, KernelParams, fit, log_marginal_likelihood, predict, rbf_kernel, select_params
from .proactive import (
    LabeledSolution,
    RatingRecord,
    RoundPlan,
    aggregate,
    batch_size,
    best_observed,
    expected_improvement,
    filter_raters,
    select_next_batch,
)
from .preference import (
    ComparisonDataset,
    ComparisonRecord,
    PreferenceModel,
    fit_preference_model,
    generate_candidate_pairs,
    hessian_omega,
    log_evidence,
    map_estimate,
    pair_likelihood,
    predict_preference,
    tune_hyperparameters,
)
from .oracle import SyntheticOracle, rate_likert, toy_oracle, true_preference, vote_pair
from .metrics import average_precision, mae, ndcg, rank_by_score
from .analysis import AnalysisReport, density_2d, top_k_distribution, variable_correlation
from .pipeline import cmd_analyze, cmd_evaluate, cmd_init, cmd_round, cmd_tune

__version__ = "0.1.0"
