"""Wearable-sensor stress classification pipeline.

Preprocess multichannel wearable recordings into 5-minute epochs, extract
the 42-feature vector, rebalance classes with SMOTE/Tomek, train a stacked
ensemble (random forest + boosted trees + MLP over a logistic-regression
meta-learner), and evaluate with leakage-aware protocols.
"""

__version__ = "0.1.0"

from .data import (ChannelKind, LabeledInterval, RawStream, StressLabel,
                   SynthConfig, generate_synthetic, load_streams, save_streams)

__all__ = [
    "ChannelKind", "LabeledInterval", "RawStream", "StressLabel",
    "SynthConfig", "generate_synthetic", "load_streams", "save_streams",
    "__version__",
]
