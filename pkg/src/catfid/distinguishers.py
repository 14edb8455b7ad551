"""Concrete distinguisher families.

Threshold grids over sample features, a deterministic dictionary
compressor, a from-scratch logistic-regression two-sample distinguisher,
and exact-match members. Everything here runs in time polynomial in
payload length and set size, and is bit-reproducible given its spec and
seed.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from .core import (
    Distinguisher,
    DistinguisherFamily,
    Sample,
    SampleSet,
    ScoringFunction,
)
from .errors import CodecMismatch, EmptyFamily, EmptyInput, TooFewSamples

SEQUENCE_CODECS = frozenset({"utf8-text", "symbol-sequence", "opaque-bytes"})


def _atoms(x: Sample) -> tuple[int, ...] | bytes:
    """Payload as a sequence of comparable integer atoms."""
    if x.codec == "utf8-text":
        return x.payload.encode("utf-8")
    if x.codec == "opaque-bytes":
        return bytes(x.payload)
    if x.codec == "symbol-sequence":
        return x.payload
    raise CodecMismatch(f"codec {x.codec!r} has no atom view")


@dataclass(frozen=True)
class FeatureExtractor:
    """Deterministic map from a sample to [0,1].

    Raw values pass through the clamped affine normalizer
    (v - lo) / (hi - lo), pinned to [0,1]. Kinds:

    - payload-length: number of atoms (bytes or symbols)
    - mean-symbol-value: arithmetic mean of atom values (0 when empty)
    - scalar-identity: the scalar payload itself
    - ngram-frequency: occurrences of `gram` per n-gram position
    - stored-feature: a named entry of the sample's feature map
    """

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    n: int = 0
    gram: tuple[int, ...] = ()
    feature: str = ""

    KINDS = (
        "payload-length",
        "mean-symbol-value",
        "scalar-identity",
        "ngram-frequency",
        "stored-feature",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown feature extractor kind {self.kind!r}")
        if self.hi <= self.lo:
            raise ValueError("normalizer needs lo < hi")
        if self.kind == "ngram-frequency" and (self.n < 1 or len(self.gram) != self.n):
            raise ValueError("ngram-frequency needs n >= 1 and a gram of length n")
        if self.kind == "stored-feature" and not self.feature:
            raise ValueError("stored-feature needs a feature name")

    @property
    def key(self) -> str:
        parts = [self.kind]
        if self.kind == "ngram-frequency":
            parts.append(f"n={self.n},gram={','.join(map(str, self.gram))}")
        if self.kind == "stored-feature":
            parts.append(self.feature)
        parts.append(f"norm={self.lo!r}:{self.hi!r}")
        return ":".join(parts)

    def raw(self, x: Sample) -> float:
        if self.kind == "stored-feature":
            try:
                return x.features[self.feature]
            except KeyError:
                raise CodecMismatch(
                    f"sample {x.id!r} lacks feature {self.feature!r}"
                ) from None
        if self.kind == "scalar-identity":
            if x.codec != "scalar":
                raise CodecMismatch("scalar-identity needs a scalar payload")
            return x.payload
        atoms = _atoms(x)
        if self.kind == "payload-length":
            return float(len(atoms))
        if self.kind == "mean-symbol-value":
            if len(atoms) == 0:
                return 0.0
            return sum(atoms) / len(atoms)
        # ngram-frequency
        positions = len(atoms) - self.n + 1
        if positions <= 0:
            return 0.0
        gram = self.gram
        count = sum(1 for i in range(positions) if tuple(atoms[i : i + self.n]) == gram)
        return count / positions

    def value(self, x: Sample) -> float:
        v = (self.raw(x) - self.lo) / (self.hi - self.lo)
        return min(max(v, 0.0), 1.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        if self.kind == "ngram-frequency":
            d["n"] = self.n
            d["gram"] = list(self.gram)
        if self.kind == "stored-feature":
            d["feature"] = self.feature
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureExtractor":
        return cls(
            kind=d["kind"],
            lo=d.get("lo", 0.0),
            hi=d.get("hi", 1.0),
            n=d.get("n", 0),
            gram=tuple(d.get("gram", ())),
            feature=d.get("feature", ""),
        )


@dataclass(frozen=True)
class ThresholdFamilySpec:
    """Indicator family over one feature.

    thresholds is either an explicit strictly ascending list or the string
    "midpoints": midpoints of consecutive distinct observed values over
    both sets, plus one sentinel below the minimum and one above the
    maximum. Midpoints realize every behavior any real threshold could
    show on the data, so that mode is exact, not a grid restriction.
    """

    feature: FeatureExtractor
    thresholds: tuple[float, ...] | str = "midpoints"
    polarity: str = "geq"

    def __post_init__(self):
        if self.polarity not in ("geq", "leq"):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        if isinstance(self.thresholds, str):
            if self.thresholds != "midpoints":
                raise ValueError(f"unknown threshold mode {self.thresholds!r}")
        else:
            ts = tuple(self.thresholds)
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("explicit thresholds must be strictly ascending")
            object.__setattr__(self, "thresholds", ts)


def midpoint_thresholds(values: list[float]) -> list[float]:
    distinct = sorted(set(values))
    mids = [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    return [distinct[0] - 1.0] + mids + [distinct[-1] + 1.0]


def make_threshold_family(
    spec: ThresholdFamilySpec, s: SampleSet, s_hat: SampleSet
) -> DistinguisherFamily:
    """One indicator member per threshold, enumerated in threshold order."""
    feature = spec.feature
    if isinstance(spec.thresholds, str):
        observed = [feature.value(x) for x in s] + [feature.value(x) for x in s_hat]
        thresholds = midpoint_thresholds(observed)
        data_dependent = True
        lower_bound = False
        mode = "midpoints"
    else:
        if len(spec.thresholds) == 0:
            raise EmptyFamily("explicit threshold list is empty")
        thresholds = list(spec.thresholds)
        data_dependent = False
        lower_bound = True  # a finite grid of an uncountable threshold family
        mode = "explicit"

    geq = spec.polarity == "geq"
    members = []
    for t in thresholds:
        members.append(
            Distinguisher(
                key=f"threshold[{feature.key}|{spec.polarity}|t={t!r}]",
                kind="threshold",
                fn=_indicator(feature, t, geq),
            )
        )
    fam = DistinguisherFamily(
        key=f"threshold[{feature.key}|{spec.polarity}|{mode}]",
        members=members,
        lower_bound=lower_bound,
        data_dependent=data_dependent,
    )
    fam.fast_delta = _threshold_fast_delta(feature, thresholds, geq)
    return fam


def _indicator(feature: FeatureExtractor, t: float, geq: bool):
    if geq:
        return lambda x: 1.0 if feature.value(x) >= t else 0.0
    return lambda x: 1.0 if feature.value(x) <= t else 0.0


def _threshold_fast_delta(feature: FeatureExtractor, thresholds: list[float], geq: bool):
    """Sorted-count sweep, bit-identical to the generic member loop.

    The generic path scores each indicator member by fsum of 0/1 outputs
    (an exact integer) divided by the set size; this path produces the
    same count by binary search and performs the identical divisions and
    subtraction, so the floats agree exactly. Only the mean scorer has
    this closed form.
    """

    def fast(s: SampleSet, s_hat: SampleSet, sigma: ScoringFunction) -> float | None:
        if sigma.name != "mean":
            return None
        a = sorted(feature.value(x) for x in s)
        b = sorted(feature.value(x) for x in s_hat)
        n1, n2 = len(a), len(b)
        best = -1.0
        for t in thresholds:
            if geq:
                c1 = n1 - bisect_left(a, t)
                c2 = n2 - bisect_left(b, t)
            else:
                c1 = bisect_right(a, t)
                c2 = bisect_right(b, t)
            gap = abs(c1 / n1 - c2 / n2)
            if gap > best:
                best = gap
        return best

    return fast


def ks_delta(s: SampleSet, s_hat: SampleSet, feature: FeatureExtractor) -> float:
    """Two-sample Kolmogorov-Smirnov statistic on one feature.

    Equal, exactly, to the mean-scored gap under the midpoint threshold
    family: counts are exact integers and the final per-threshold gap uses
    the same two divisions and subtraction the family sweep performs.
    """
    if len(s) == 0 or len(s_hat) == 0:
        raise EmptyInput("both sample sets must be nonempty")
    a = sorted(feature.value(x) for x in s)
    b = sorted(feature.value(x) for x in s_hat)
    n1, n2 = len(a), len(b)
    best = 0.0
    for t in midpoint_thresholds(a + b):
        c1 = n1 - bisect_left(a, t)
        c2 = n2 - bisect_left(b, t)
        gap = abs(c1 / n1 - c2 / n2)
        if gap > best:
            best = gap
    return best


# --- compression ---------------------------------------------------------


@dataclass(frozen=True)
class CompressionSpec:
    """Fixed dictionary compressor; the scheme is part of the identity.

    Scheme "lz78-v1": parse the payload into phrases; each phrase is the
    longest already-known phrase plus one literal byte, added to the
    dictionary as it is emitted. The dictionary starts with the empty
    phrase at index 0. A token emitted while the dictionary holds d
    entries costs (d-1).bit_length() bits for the index plus 8 bits for
    the literal; the final token omits the literal when the input ends
    exactly on a known phrase. Compressed length is the total bit count
    rounded up to whole bytes. The output value is
    clamp(compressed_bytes / max(1, raw_bytes), 0, 1); empty payloads
    compress to 0 tokens, so their value is 0.0 by convention.
    """

    scheme: str = "lz78-v1"

    def __post_init__(self):
        if self.scheme != "lz78-v1":
            raise ValueError(f"unknown compression scheme {self.scheme!r}")


def lz78_tokens(data: bytes) -> list[tuple[int, int | None]]:
    """(dictionary index, literal byte or None) token stream for the scheme."""
    dictionary: dict[bytes, int] = {b"": 0}
    tokens: list[tuple[int, int | None]] = []
    i = 0
    n = len(data)
    while i < n:
        phrase = b""
        while i < n and phrase + data[i : i + 1] in dictionary:
            phrase += data[i : i + 1]
            i += 1
        if i < n:
            literal = data[i]
            tokens.append((dictionary[phrase], literal))
            dictionary[phrase + data[i : i + 1]] = len(dictionary)
            i += 1
        else:
            tokens.append((dictionary[phrase], None))
    return tokens


def lz78_compressed_length(data: bytes) -> int:
    """Compressed size in bytes under the lz78-v1 scheme."""
    dictionary_size = 1
    bits = 0
    for index, literal in lz78_tokens(data):
        bits += (dictionary_size - 1).bit_length()
        if literal is not None:
            bits += 8
            dictionary_size += 1
    return (bits + 7) // 8


def make_compression_distinguisher(spec: CompressionSpec = CompressionSpec()) -> Distinguisher:
    def fn(x: Sample) -> float:
        raw = x.payload_bytes()
        ratio = lz78_compressed_length(raw) / max(1, len(raw))
        return min(max(ratio, 0.0), 1.0)

    return Distinguisher(key=f"compression[{spec.scheme}]", kind="compression", fn=fn)


def make_exact_match(target: Sample) -> Distinguisher:
    """1.0 on payload-identical samples of the same codec, else 0.0."""
    digest = hashlib.sha256(target.payload_bytes()).hexdigest()[:16]
    codec = target.codec
    payload = target.payload

    def fn(x: Sample) -> float:
        return 1.0 if (x.codec == codec and x.payload == payload) else 0.0

    return Distinguisher(key=f"exact-match[{codec}:{digest}]", kind="exact-match", fn=fn)


# --- learned two-sample distinguisher ------------------------------------


@dataclass(frozen=True)
class ClassifierSpec:
    """Logistic regression on the sample feature vector.

    Full-batch gradient descent, fixed learning rate and iteration count,
    weights initialized at zero; the seed only drives the train/heldout
    split. The returned distinguisher is frozen.
    """

    split_fraction: float = 0.5
    seed: int = 0
    learning_rate: float = 0.5
    iterations: int = 400

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0,1)")
        if self.iterations < 1 or self.learning_rate <= 0:
            raise ValueError("bad trainer parameters")


def _feature_matrix(sets: list[SampleSet]) -> tuple[list[str], np.ndarray, np.ndarray]:
    names = sorted(sets[0].items[0].features.keys())
    if not names:
        raise ValueError("classifier needs at least one feature")
    rows, labels = [], []
    for label, s in zip((1.0, 0.0), sets):
        for x in s:
            if sorted(x.features.keys()) != names:
                raise ValueError(f"sample {x.id!r} has mismatched feature keys")
            rows.append([x.features[k] for k in names])
            labels.append(label)
    return names, np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.float64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def train_classifier_distinguisher(
    s: SampleSet, s_hat: SampleSet, spec: ClassifierSpec
) -> tuple[Distinguisher, float]:
    """Train on a split, freeze, and report held-out balanced accuracy.

    Label 1 marks originals. The advantage is computed only on samples the
    trainer never saw; quoting training fit would let any family reach 1.
    """
    if len(s) < 4 or len(s_hat) < 4:
        raise TooFewSamples("need at least 4 samples per set to split and hold out")

    names, X, y = _feature_matrix([s, s_hat])
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))

    n_orig = len(s)
    train_idx, held_idx = [], []
    for offset, count in ((0, n_orig), (n_orig, len(s_hat))):
        perm = rng.permutation(count) + offset
        n_train = int(round(spec.split_fraction * count))
        n_train = min(max(n_train, 1), count - 1)
        train_idx.extend(perm[:n_train].tolist())
        held_idx.extend(perm[n_train:].tolist())

    Xt = np.column_stack([X[train_idx], np.ones(len(train_idx))])
    yt = y[train_idx]
    w = np.zeros(Xt.shape[1])
    for _ in range(spec.iterations):
        p = _sigmoid(Xt @ w)
        w -= spec.learning_rate * (Xt.T @ (p - yt)) / len(yt)

    Xh = np.column_stack([X[held_idx], np.ones(len(held_idx))])
    yh = y[held_idx]
    pred = _sigmoid(Xh @ w) >= 0.5
    tpr = float(np.mean(pred[yh == 1.0])) if np.any(yh == 1.0) else 0.0
    tnr = float(np.mean(~pred[yh == 0.0])) if np.any(yh == 0.0) else 0.0
    advantage = (tpr + tnr) / 2.0

    weights = w.copy()
    digest = hashlib.sha256(weights.tobytes()).hexdigest()[:12]
    feature_names = list(names)

    def fn(x: Sample) -> float:
        vec = np.array([x.features[k] for k in feature_names] + [1.0])
        return float(min(max(_sigmoid(vec @ weights), 0.0), 1.0))

    member = Distinguisher(
        key=(
            f"classifier[seed={spec.seed},split={spec.split_fraction!r},"
            f"lr={spec.learning_rate!r},iters={spec.iterations},w={digest}]"
        ),
        kind="classifier",
        fn=fn,
    )
    return member, advantage


def advantage_to_delta(balanced_accuracy: float) -> float:
    """Classifier two-sample convention: chance maps to 0, separation to 1."""
    if not 0.0 <= balanced_accuracy <= 1.0:
        raise ValueError("balanced accuracy must lie in [0,1]")
    return abs(2.0 * balanced_accuracy - 1.0)
