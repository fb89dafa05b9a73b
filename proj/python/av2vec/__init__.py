"""Audio-visual self-distillation toolkit: core operations exposed from C++."""

from av2vec._core import (
    ConfigError,
    DegenerateInputError,
    __version__,
    ema_update,
    generate_corpus,
    instance_norm,
    kmeans_fit,
    lambda_at,
    lr_at,
    measure_snr,
    mix_noise,
    sample_span_mask,
)

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "__version__",
    "ema_update",
    "generate_corpus",
    "instance_norm",
    "kmeans_fit",
    "lambda_at",
    "lr_at",
    "measure_snr",
    "mix_noise",
    "sample_span_mask",
]
