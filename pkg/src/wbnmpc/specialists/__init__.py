"""Training data, PINN specialists, libraries and the symbolic ensemble."""
from .data import TrainingSet, generate_dataset
from .embed import build_ensemble, embed_net, embed_symbolic
from .library import OdeSpecialist, SpecialistLibrary, candidate_grid, select_library, select_regimes
from .net import SpecialistNet
from .train import TrainConfig, TrainingDiverged, physics_loss, train_specialist, train_specialist_pair

__all__ = [
    "OdeSpecialist", "SpecialistLibrary", "SpecialistNet", "TrainConfig", "TrainingDiverged",
    "TrainingSet", "build_ensemble", "candidate_grid", "embed_net", "embed_symbolic",
    "generate_dataset", "physics_loss", "select_library", "select_regimes",
    "train_specialist", "train_specialist_pair",
]
