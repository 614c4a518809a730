"""Tree ensembles as step networks, and the quantized one-hot "Hammock" MLP."""
from ._accel import backend
from .binning import BinningSpec, fit_binning, fit_quantile_bins, one_hot_encode, quantize
from .dataio import Dataset, SplitSpec, label_stats, load_csv, split
from .errors import HammockError, InputError, NumericOverflowError, ParseError
from .netconvert import (StepNetwork, apply_transform, build_indicator_transform,
                         convert_ensemble, forward_step, verify_equivalence)
from .nncore import (MlpModel, TrainConfig, adadelta_step, build_model, evaluate, forward,
                     init_model, load_model, loss_and_grad, save_model, train)
from .trees import (DecisionTree, TreeEnsemble, collect_thresholds, enumerate_paths,
                    eval_ensemble, eval_tree, parse_ensemble, predict, random_ensemble,
                    serialize_ensemble)

__version__ = "0.1.0"
