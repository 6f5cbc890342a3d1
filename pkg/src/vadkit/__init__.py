"""Future-frame prediction for video anomaly detection, trained with synthetic patch anomalies."""

from .model import Autoencoder, ModelConfig, build_autoencoder, forward, load_model, save_model
from .patches import TransformPolicy, apply_patch_anomaly

__all__ = [
    "Autoencoder",
    "ModelConfig",
    "TransformPolicy",
    "apply_patch_anomaly",
    "build_autoencoder",
    "forward",
    "load_model",
    "save_model",
]
__version__ = "0.1.0"
