from .tape import Tape, backward
from .unet import ArchSpec, EstimatorParams, forward, init_params
from .train import TrainConfig, TrainResult, despeckle, predict_branches, train

__all__ = ["Tape", "backward", "ArchSpec", "EstimatorParams", "forward", "init_params",
           "TrainConfig", "TrainResult", "despeckle", "predict_branches", "train"]
