"""Weak-to-strong distillation lab: C++ engine with a thin Python surface."""

from ._w2s import (
    ConfigError,
    Error,
    Model,
    ParseError,
    ShapeError,
    TrainingAborted,
    beta_weights,
    confidence_interval95,
    episode_accuracy,
    inject_noise,
    kd_loss,
    load_model,
    objective,
    run_experiment,
    sample_episode,
    softmax,
    synth_blobs,
)

__all__ = [
    "ConfigError",
    "Error",
    "Model",
    "ParseError",
    "ShapeError",
    "TrainingAborted",
    "beta_weights",
    "confidence_interval95",
    "episode_accuracy",
    "inject_noise",
    "kd_loss",
    "load_model",
    "objective",
    "run_experiment",
    "sample_episode",
    "softmax",
    "synth_blobs",
]
