from .estimator import FeasibilityClassifier
from .features import NAME_VOCAB, OBJECT_WIDTH, VALUE_WIDTH, object_feature, value_feature
from .model import Model, ModelConfig, forward, fuse_token, init_model, loss_and_gradients, zero_model
from .serialize import CorruptModelError, VersionMismatchError, load_model, save_model
from .tokenize import PlanTokenizer, SequenceOverflowError, Token, TokenSequence, tokenize
from .train import DivergenceError, TrainConfig, train

__all__ = [
    "FeasibilityClassifier", "PlanTokenizer", "Model", "ModelConfig", "Token", "TokenSequence",
    "NAME_VOCAB", "OBJECT_WIDTH", "VALUE_WIDTH", "object_feature", "value_feature", "forward", "fuse_token",
    "init_model", "zero_model", "loss_and_gradients", "save_model", "load_model", "CorruptModelError",
    "VersionMismatchError", "SequenceOverflowError", "tokenize", "train", "TrainConfig", "DivergenceError",
]
