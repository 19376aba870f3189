"""Gradient-free MLP training where every synapse is a Q-learning agent
sharing one tabular policy, plus a gradient-descent baseline and the task
generators needed to reproduce the decision-boundary and character
recognition experiments."""

from .errors import ConfigError, DivergenceError, ShapeError, SynrlError
from .mlp import (ActivationKind, Dataset, InitScheme, LayerSpec, LossKind, Mlp,
                  accuracy, forward, init_weights, loss)
from .policy import (ActionSign, QTable, RewardSign, SynapseHistory, apply_action,
                     decode_state, encode_state, reward_from_losses, select_action, td_update)
from .trainer import MetricsLog, TrainerConfig, train
from .gd import GdConfig, backprop_gradients, finite_difference_gradients, train_gd
from .data import (BoundaryTaskSpec, ImageDatasetSpec, export_idx_cache,
                   generate_boundary_task, load_image_dataset)

__version__ = "0.1.0"
