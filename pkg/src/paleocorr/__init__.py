"""Bayesian correlation estimates between irregularly sampled, age-uncertain
paleoclimate records, with a pseudoproxy benchmark to evaluate them."""

from .alignment import AlignmentSpec, align, gacf, highpass, lag_scan, normalize, windows
from .bayes import InferenceConfig, PosteriorSample, metropolis, summarize
from .errors import ConfigError, DataError, NumericalError, PaleocorrError
from .timeseries import TimeSeries

__version__ = "0.1.0"

__all__ = [
    "AlignmentSpec", "ConfigError", "DataError", "InferenceConfig", "NumericalError",
    "PaleocorrError", "PosteriorSample", "TimeSeries", "align", "gacf", "highpass",
    "lag_scan", "metropolis", "normalize", "summarize", "windows",
]
