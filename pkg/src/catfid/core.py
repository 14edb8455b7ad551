"""Distinguisher-gap evaluation core.

Computes the supremum gap between aggregated distinguisher scores on an
original sample multiset and a generated one, issues tolerance verdicts,
and estimates the noise floor a distinguisher family can actually resolve
on data of a given size.

All operations are pure functions of their inputs plus explicit 64-bit
seeds; identical inputs and seeds give bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    CodecMismatch,
    EmptyFamily,
    EmptyInput,
    TooFewSamples,
)

CODECS = ("utf8-text", "symbol-sequence", "scalar", "opaque-bytes")

SIGMA_NAMES = ("mean", "max", "quantile")


@dataclass
class Sample:
    """One opaque payload with named real-valued features.

    payload holds the codec-native value: str for utf8-text, bytes for
    opaque-bytes, tuple[int] for symbol-sequence, float for scalar.
    """

    id: str
    payload: str | bytes | tuple[int, ...] | float
    codec: str
    features: dict[str, float] = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        if self.codec not in CODECS:
            raise ValueError(f"unknown codec {self.codec!r}")
        if self.codec == "symbol-sequence" and not isinstance(self.payload, tuple):
            self.payload = tuple(self.payload)
        if self.codec == "scalar":
            self.payload = float(self.payload)
        for name, value in self.features.items():
            if not math.isfinite(value):
                raise ValueError(f"feature {name!r} is not finite: {value!r}")

    def payload_bytes(self) -> bytes:
        """Canonical byte encoding of the payload, identical on all platforms."""
        if self.codec == "utf8-text":
            return self.payload.encode("utf-8")
        if self.codec == "opaque-bytes":
            return bytes(self.payload)
        if self.codec == "symbol-sequence":
            # two bytes per symbol, big-endian; alphabet sizes above 65536 unsupported
            out = bytearray()
            for s in self.payload:
                if not 0 <= s < 65536:
                    raise ValueError(f"symbol {s} out of encodable range")
                out += int(s).to_bytes(2, "big")
            return bytes(out)
        # scalar
        return np.float64(self.payload).tobytes()


@dataclass
class SampleSet:
    """Finite multiset of samples. Duplicates allowed; ids must be unique."""

    items: list[Sample]
    role: str = "original"  # "original" | "generated"
    label: str | None = None

    def __post_init__(self):
        if len(self.items) < 1:
            raise EmptyInput("a sample set needs at least one sample")
        if self.role not in ("original", "generated"):
            raise ValueError(f"unknown role {self.role!r}")
        seen = set()
        for s in self.items:
            if s.id in seen:
                raise ValueError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


@dataclass
class Distinguisher:
    """Total deterministic map from compatible samples to [0,1].

    key must encode the full identity, parameters included. codecs is the
    set of payload codecs the member can read; None means all.
    """

    key: str
    kind: str
    fn: Callable[[Sample], float]
    codecs: frozenset[str] | None = None

    def __call__(self, x: Sample) -> float:
        return evaluate(self, x)


@dataclass
class DistinguisherFamily:
    """Finite, deterministically ordered enumeration of distinguishers.

    lower_bound marks families that are grid restrictions of an infinite
    family: the computed gap is then a lower bound on the true supremum.
    data_dependent marks families constructed from the evaluated sets
    themselves (midpoint thresholds, trained classifiers).
    """

    key: str
    members: list[Distinguisher]
    lower_bound: bool = False
    data_dependent: bool = False
    # optional exact fast path: (S, S_hat, sigma) -> same float delta the
    # generic member sweep would produce, or None to decline
    fast_delta: Callable[["SampleSet", "SampleSet", "ScoringFunction"], float | None] | None = None

    def __post_init__(self):
        if not self.members:
            raise EmptyFamily(f"family {self.key!r} has no members")
        keys = [m.key for m in self.members]
        if len(set(keys)) != len(keys):
            raise ValueError(f"family {self.key!r} has duplicate member keys")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


@dataclass(frozen=True)
class ScoringFunction:
    """Permutation-invariant aggregation of a value multiset into [0,1]."""

    name: str = "mean"
    q: float = 0.5

    def __post_init__(self):
        if self.name not in SIGMA_NAMES:
            raise ValueError(f"unknown scoring function {self.name!r}")
        if self.name == "quantile" and not 0.0 <= self.q <= 1.0:
            raise ValueError("quantile level must lie in [0,1]")

    def to_dict(self) -> dict:
        d = {"name": self.name}
        if self.name == "quantile":
            d["q"] = self.q
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScoringFunction":
        return cls(name=d["name"], q=d.get("q", 0.5))


@dataclass
class DeltaReport:
    """The computed gap, which member attained it, and how."""

    delta: float
    argmax_key: str
    per_member_gaps: dict[str, float]
    sizes: tuple[int, int]
    sigma: ScoringFunction
    family_key: str
    lower_bound: bool = False
    data_dependent: bool = False

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "argmax_key": self.argmax_key,
            "per_member_gaps": dict(self.per_member_gaps),
            "sizes": list(self.sizes),
            "sigma": self.sigma.to_dict(),
            "family_key": self.family_key,
            "lower_bound": self.lower_bound,
            "data_dependent": self.data_dependent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeltaReport":
        return cls(
            delta=d["delta"],
            argmax_key=d["argmax_key"],
            per_member_gaps=dict(d["per_member_gaps"]),
            sizes=(d["sizes"][0], d["sizes"][1]),
            sigma=ScoringFunction.from_dict(d["sigma"]),
            family_key=d["family_key"],
            lower_bound=d["lower_bound"],
            data_dependent=d["data_dependent"],
        )


@dataclass
class Verdict:
    """Tolerance decision. passed iff delta <= epsilon (boundary inclusive)."""

    epsilon: float
    delta: float
    passed: bool
    resolution_floor: float | None = None
    resolution_caveat: bool = False

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "pass": self.passed,
            "resolution_floor": self.resolution_floor,
            "resolution_caveat": self.resolution_caveat,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(
            epsilon=d["epsilon"],
            delta=d["delta"],
            passed=d["pass"],
            resolution_floor=d.get("resolution_floor"),
            resolution_caveat=d["resolution_caveat"],
        )


@dataclass
class ResolutionEstimate:
    """Split-half self-distinguishability of a set under a family.

    The mean over splits is the noise floor: gaps below it are not
    resolvable by this family at this sample size.
    """

    epsilon_f_mean: float
    epsilon_f_max: float
    n_splits: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon_f_mean <= self.epsilon_f_max <= 1.0:
            raise ValueError("resolution estimate out of order")

    def to_dict(self) -> dict:
        return {
            "epsilon_f_mean": self.epsilon_f_mean,
            "epsilon_f_max": self.epsilon_f_max,
            "n_splits": self.n_splits,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResolutionEstimate":
        return cls(d["epsilon_f_mean"], d["epsilon_f_max"], d["n_splits"], d["seed"])


# family arguments below may be a ready family or a builder called with the
# two sets, so data-dependent families (midpoint thresholds, classifiers)
# can be rebuilt per split / per resample
FamilyLike = DistinguisherFamily | Callable[[SampleSet, SampleSet], DistinguisherFamily]


def resolve_family(family: FamilyLike, s: SampleSet, s_hat: SampleSet) -> DistinguisherFamily:
    if isinstance(family, DistinguisherFamily):
        return family
    return family(s, s_hat)


def score_multiset(sigma: ScoringFunction, values: Iterable[float]) -> float:
    """Aggregate a nonempty multiset of unit-interval values into [0,1].

    quantile uses the lower empirical quantile: sort ascending and take
    index ceil(q*n) - 1, clamped to [0, n-1]. No interpolation.
    """
    vals = list(values)
    if not vals:
        raise EmptyInput("scoring function undefined on the empty multiset")
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"score {v!r} outside [0,1]")
    if sigma.name == "mean":
        # fsum is exact on 0/1 indicator outputs, so mean == count/n exactly
        return math.fsum(vals) / len(vals)
    if sigma.name == "max":
        return max(vals)
    n = len(vals)
    idx = min(max(math.ceil(sigma.q * n) - 1, 0), n - 1)
    return sorted(vals)[idx]


def evaluate(f: Distinguisher, x: Sample) -> float:
    """Apply one distinguisher to one sample; result is always in [0,1]."""
    if f.codecs is not None and x.codec not in f.codecs:
        raise CodecMismatch(f"{f.key!r} cannot read codec {x.codec!r}")
    v = f.fn(x)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"distinguisher {f.key!r} returned {v!r} outside [0,1]")
    return v


def delta(
    s: SampleSet,
    s_hat: SampleSet,
    family: FamilyLike,
    sigma: ScoringFunction,
) -> DeltaReport:
    """Maximum absolute score gap over the family's enumeration.

    Ties go to the member that enumerates first. When the family is a grid
    restriction of an infinite family the result is a lower bound on the
    true supremum, flagged in the report.
    """
    if len(s) == 0 or len(s_hat) == 0:
        raise EmptyInput("both sample sets must be nonempty")
    fam = resolve_family(family, s, s_hat)
    if len(fam) == 0:
        raise EmptyFamily("sup over the empty family is undefined")

    gaps: dict[str, float] = {}
    best_key = None
    best_gap = -1.0
    for member in fam:
        a = score_multiset(sigma, [evaluate(member, x) for x in s])
        b = score_multiset(sigma, [evaluate(member, x) for x in s_hat])
        gap = abs(a - b)
        gaps[member.key] = gap
        if gap > best_gap:
            best_gap = gap
            best_key = member.key
    return DeltaReport(
        delta=best_gap,
        argmax_key=best_key,
        per_member_gaps=gaps,
        sizes=(len(s), len(s_hat)),
        sigma=sigma,
        family_key=fam.key,
        lower_bound=fam.lower_bound,
        data_dependent=fam.data_dependent,
    )


def delta_value(
    s: SampleSet,
    s_hat: SampleSet,
    family: FamilyLike,
    sigma: ScoringFunction,
) -> float:
    """The gap alone, via a family's exact fast path when it offers one.

    A fast path must reproduce the generic member sweep bit-exactly; the
    test suite cross-checks this, so callers may treat the two as one.
    """
    fam = resolve_family(family, s, s_hat)
    if fam.fast_delta is not None:
        v = fam.fast_delta(s, s_hat, sigma)
        if v is not None:
            return v
    return delta(s, s_hat, fam, sigma).delta


def verdict(
    report: DeltaReport,
    epsilon: float,
    resolution: ResolutionEstimate | None = None,
) -> Verdict:
    """Tolerance decision, caveated when the family cannot resolve epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0,1]")
    floor = resolution.epsilon_f_mean if resolution is not None else None
    return Verdict(
        epsilon=epsilon,
        delta=report.delta,
        passed=report.delta <= epsilon,
        resolution_floor=floor,
        resolution_caveat=floor is not None and floor >= epsilon,
    )


def estimate_resolution(
    s: SampleSet,
    family: FamilyLike,
    sigma: ScoringFunction,
    n_splits: int,
    seed: int,
    delta_fn: Callable[[SampleSet, SampleSet], float] | None = None,
) -> ResolutionEstimate:
    """Noise floor of the family on data of this size.

    Each split partitions the set uniformly at random into halves of sizes
    floor(m/2) and ceil(m/2) and measures the gap between them; a family
    cannot meaningfully resolve gaps below the mean of those self-gaps.
    delta_fn overrides the gap computation (used for procedures that do not
    reduce to a single family sweep, e.g. held-out classifier advantage).
    """
    m = len(s)
    if m < 2:
        raise TooFewSamples("need at least 2 samples to split")
    if n_splits < 1:
        raise ValueError("n_splits must be positive")
    if delta_fn is None:
        delta_fn = lambda a, b: delta_value(a, b, family, sigma)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    half = m // 2
    values = []
    for _ in range(n_splits):
        perm = rng.permutation(m)
        left = SampleSet([s.items[i] for i in perm[:half]], role="original")
        right = SampleSet([s.items[i] for i in perm[half:]], role="generated")
        values.append(delta_fn(left, right))
    return ResolutionEstimate(
        epsilon_f_mean=math.fsum(values) / len(values),
        epsilon_f_max=max(values),
        n_splits=n_splits,
        seed=seed,
    )


def bootstrap_delta_ci(
    s: SampleSet,
    s_hat: SampleSet,
    family: FamilyLike,
    sigma: ScoringFunction,
    n_boot: int,
    level: float,
    seed: int,
    delta_fn: Callable[[SampleSet, SampleSet], float] | None = None,
) -> tuple[float, float]:
    """Percentile interval of the gap over paired resamples with replacement."""
    if len(s) == 0 or len(s_hat) == 0:
        raise EmptyInput("both sample sets must be nonempty")
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0,1)")
    if delta_fn is None:
        delta_fn = lambda a, b: delta_value(a, b, family, sigma)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    m, n = len(s), len(s_hat)
    deltas = np.empty(n_boot)
    for i in range(n_boot):
        idx_s = rng.integers(0, m, size=m)
        idx_h = rng.integers(0, n, size=n)
        rs = _resample(s, idx_s)
        rh = _resample(s_hat, idx_h)
        deltas[i] = delta_fn(rs, rh)
    lo, hi = np.quantile(deltas, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return float(lo), float(hi)


def _resample(s: SampleSet, indices: Sequence[int]) -> SampleSet:
    # resampled ids must stay unique within the new multiset
    items = []
    for j, i in enumerate(indices):
        base = s.items[int(i)]
        items.append(
            Sample(
                id=f"{base.id}#b{j}",
                payload=base.payload,
                codec=base.codec,
                features=dict(base.features),
                label=base.label,
            )
        )
    return SampleSet(items, role=s.role, label=s.label)
