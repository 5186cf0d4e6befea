"""Motor-imagery command channel: spatial filtering, spectral features,
a diagonal Gaussian classifier, evidence integration and thresholded
command emission, plus the synthetic signal generator used to drive it."""
from .classifier import GaussianModel, classify, fisher_scores, select_top_k, train_gaussian
from .decoder import (
    MODEL_FORMAT,
    CalibrationError,
    CalibrationResult,
    OnlineDecoder,
    calibrate,
    extract_features,
    load_model,
    save_model,
)
from .montage import CHANNELS, SAMPLE_RATE, EegFrame, laplacian, neighbor_map
from .posterior import (
    PosteriorState,
    PosteriorStream,
    PosteriorStreamConfig,
    integrate,
    maybe_emit,
)
from .spectral import SpectralConfig, sliding_windows, welch_psd
from .synth import SyntheticEegConfig, generate_trial

__all__ = [
    "CHANNELS", "SAMPLE_RATE", "EegFrame", "laplacian", "neighbor_map",
    "SpectralConfig", "welch_psd", "sliding_windows",
    "fisher_scores", "select_top_k", "GaussianModel", "train_gaussian", "classify",
    "PosteriorState", "integrate", "maybe_emit",
    "PosteriorStream", "PosteriorStreamConfig",
    "SyntheticEegConfig", "generate_trial",
    "OnlineDecoder", "calibrate", "extract_features",
    "CalibrationResult", "CalibrationError",
    "MODEL_FORMAT", "save_model", "load_model",
]
