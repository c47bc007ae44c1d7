"""Multi-path policy optimization over TRPO and PPO backends."""

from .controller import (MultiPathTrainer, PolicyBuffer, SinglePathTrainer, TrainConfig, VariantConfig,
                         make_trainer, min_max_normalize, pick, score, theorem1_bound)
from .neuralnet import FlatParamNet
from .policy import CategoricalPolicy, GaussianPolicy
from .ppo import PpoConfig
from .trpo import TrpoConfig

__version__ = "0.1.0"

__all__ = ["FlatParamNet", "CategoricalPolicy", "GaussianPolicy", "TrpoConfig", "PpoConfig", "TrainConfig",
           "VariantConfig", "PolicyBuffer", "SinglePathTrainer", "MultiPathTrainer", "make_trainer",
           "min_max_normalize", "score", "pick", "theorem1_bound"]
