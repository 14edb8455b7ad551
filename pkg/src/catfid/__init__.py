"""catfid: category-fidelity evaluation of generative systems.

Measures how well generated samples blend into an original sample set by
taking the worst-case aggregated score gap over a family of
distinguishers, then turning that gap into a tolerance verdict with an
honest account of what the family can actually resolve.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    DeltaReport,
    Distinguisher,
    DistinguisherFamily,
    ResolutionEstimate,
    Sample,
    SampleSet,
    ScoringFunction,
    Verdict,
    bootstrap_delta_ci,
    delta,
    estimate_resolution,
    evaluate,
    score_multiset,
    verdict,
)
