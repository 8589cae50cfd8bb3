"""Bayesian optimisation with a warm GP on pretrained network features and a cold GP on raw inputs."""

from ._backend import BACKEND
from .acquisition import AcqConfig, combine, exploration_weight, jumbo_acq, jumbo_lambda, maximize_acq, ucb
from .benchmarks import (SyntheticPair, TabularBenchmark, load_tabular, make_fig3_pair, make_hpo_table,
                         normalized_regret, prior_table, regret_curves, save_tabular)
from .errors import BudgetExhausted, InvalidArgument, NumericalFailure, ParseError
from .gp import (BLRState, GPState, KernelSpec, blr_fit_predict, fit_gp_hyperparams, gp_condition,
                 gp_nll, gp_posterior, kernel_eval, kernel_matrix)
from .loop import Comparison, RunOptions, RunTrace, Strategy, compare, run
from .nn import (MLPConfig, OfflineDataset, SurrogateModel, embed, joint_pretrain, load_model,
                 mlp_forward, pretrain, save_model)
from .space import Categorical, Continuous, Integer, SearchSpace, transform_T
from .theory import lemma1_coverage, mig_greedy, no_regret_trend

__version__ = "0.1.0"
