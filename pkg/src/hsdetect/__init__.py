"""Sub-pixel hyperspectral target detection under matrix-variate t backgrounds.

Kelly (additive), ACUTE (replacement) and SPADE (mixed) GLR detectors, the
background models they are derived from, and a Monte-Carlo harness for ROC
and false-alarm-gain experiments.
"""

__version__ = "0.1.0"

from .detectors import (  # noqa: E402
    DetectionOutcome,
    TrainingSummary,
    acute,
    detect,
    kelly,
    spade,
    summarize,
)
from .distributions import (  # noqa: E402
    BackgroundModel,
    Family,
    Hypothesis,
    JointSample,
    ModelKind,
    Scenario,
    sample_joint,
)

__all__ = [
    "__version__",
    "BackgroundModel",
    "DetectionOutcome",
    "Family",
    "Hypothesis",
    "JointSample",
    "ModelKind",
    "Scenario",
    "TrainingSummary",
    "acute",
    "detect",
    "kelly",
    "sample_joint",
    "spade",
    "summarize",
]
