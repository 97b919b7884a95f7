from rebmbo.gp.deep import bayesian_linear_head, fit_deep, predict_deep
from rebmbo.gp.exact import DEFAULT_NOISE, fit_exact, log_marginal_likelihood, posterior_cov, predict, predict_many
from rebmbo.gp.hyperparams import HyperparamResult, initial_params, optimize_hyperparams
from rebmbo.gp.models import VARIANTS, Dataset, GpModel, standardize
from rebmbo.gp.sparse import default_inducing_count, fit_sparse, predict_sparse, select_inducing_points
from rebmbo.gp.stats import DuelResult, posterior_cdf, prob_duel, probability_of_improvement
