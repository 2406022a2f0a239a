"""Prototype-based incremental class learning with importance-regularized autoencoders."""

from .config import RunConfig, TrainConfig, load_config
from .data import EmbeddingDataset, SynthConfig, TaskStream, generate_synthetic, split_tasks
from .losses import LossWeights
from .metrics import RunMetrics, SessionRecord, psi_metrics
from .nn import Network
from .outlier import LOFConfig
from .prototypes import PrototypeStore
from .trainer import run_stream, train_joint

__all__ = [
    "EmbeddingDataset", "LOFConfig", "LossWeights", "Network", "PrototypeStore", "RunConfig",
    "RunMetrics", "SessionRecord", "SynthConfig", "TaskStream", "TrainConfig", "generate_synthetic",
    "load_config", "psi_metrics", "run_stream", "split_tasks", "train_joint",
]
__version__ = "0.1.0"
