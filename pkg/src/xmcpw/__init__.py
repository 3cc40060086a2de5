"""Propensity-weighted losses, one-vs-rest training and metrics for extreme multi-label classification."""

from .data import SparseDataset, add_bias, l2_normalize, label_frequencies, load_xmc, parse_xmc, power_law_fit, write_xmc
from .losses import LossFamily, LossSpec, LossVariant, WeightScheme, eval_convex_weighted, eval_loss, positive_weight
from .metrics import evaluate, normalized_gain
from .ovr import OvrModel, TopK, TrainConfig, predict_topk, prune, train
from .propensity import PropensityModel, PropensityParams, default_params, from_params, inverse_propensities
from .solver import BinaryProblem, SolverConfig, SubproblemLoss, solve

__version__ = "0.1.0"
