import numpy as np
import pytest

from catfid.core import Sample, SampleSet, ScoringFunction
from catfid.distinguishers import FeatureExtractor, ThresholdFamilySpec, make_threshold_family


def scalar_set(values, role="original", prefix="s"):
    return SampleSet(
        [Sample(id=f"{prefix}{i}", payload=float(v), codec="scalar") for i, v in enumerate(values)],
        role=role,
    )


def symbol_set(seqs, role="original", prefix="s"):
    return SampleSet(
        [Sample(id=f"{prefix}{i}", payload=tuple(seq), codec="symbol-sequence") for i, seq in enumerate(seqs)],
        role=role,
    )


SCALAR_FEATURE = FeatureExtractor(kind="scalar-identity")


def midpoint_family_builder(feature=SCALAR_FEATURE, polarity="geq"):
    spec = ThresholdFamilySpec(feature=feature, polarity=polarity)
    return lambda s, s_hat: make_threshold_family(spec, s, s_hat)


@pytest.fixture
def mean_sigma():
    return ScoringFunction("mean")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
