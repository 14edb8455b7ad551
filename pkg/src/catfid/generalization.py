"""Multi-category holdout harness.

Synthetic category suites with constructive membership, k-shot blind
evaluation of generators on held-out categories, memorization baselines,
and transport of distinguisher families along bijective payload
re-encodings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Callable

import numpy as np

from .core import (
    CODECS,
    Distinguisher,
    DistinguisherFamily,
    FamilyLike,
    Sample,
    SampleSet,
    ScoringFunction,
    Verdict,
    delta as core_delta,
    evaluate,
    verdict as core_verdict,
)
from .ctest import parse_program, run_program
from .errors import CodecMismatch, EmptyHoldout

DEFAULT_MIN_REF = 20


def _derived_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


# --- categories -----------------------------------------------------------


@dataclass(frozen=True)
class ProgramCategory:
    """Sequences from one program template; '?' slots range over integers.

    The fibre is the finite set of sequences the template can produce, so
    membership is decidable by construction.
    """

    label: str
    template: str  # program text with '?' placeholders, e.g. "S?;A1"
    ranges: tuple[tuple[int, int], ...]  # inclusive (lo, hi) per placeholder
    seq_len: int = 8
    alphabet: int = 26

    def __post_init__(self):
        if self.template.count("?") != len(self.ranges):
            raise ValueError("one range per placeholder required")
        if self.seq_len < 2:
            raise ValueError("sequences need at least 2 symbols")

    def _instantiate(self, values: tuple[int, ...]) -> tuple[int, ...]:
        text = self.template
        for v in values:
            text = text.replace("?", str(v), 1)
        program = parse_program(text)
        return run_program(program, self.seq_len, self.seq_len, self.alphabet)

    @cached_property
    def fibre(self) -> frozenset[tuple[int, ...]]:
        spans = [range(lo, hi + 1) for lo, hi in self.ranges]
        return frozenset(self._instantiate(v) for v in product(*spans))

    def sample(self, m: int, seed: int) -> SampleSet:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        items = []
        for i in range(m):
            values = tuple(int(rng.integers(lo, hi + 1)) for lo, hi in self.ranges)
            items.append(
                Sample(id=f"x{i:05d}", payload=self._instantiate(values), codec="symbol-sequence")
            )
        return SampleSet(items, role="original", label=self.label)

    def contains(self, x: Sample) -> bool:
        return x.codec == "symbol-sequence" and tuple(x.payload) in self.fibre

    def to_dict(self) -> dict:
        return {
            "kind": "program",
            "label": self.label,
            "template": self.template,
            "ranges": [list(r) for r in self.ranges],
            "seq_len": self.seq_len,
            "alphabet": self.alphabet,
        }


@dataclass(frozen=True)
class NumericCategory:
    """Scalars drawn uniformly from the window [loc - scale, loc + scale]."""

    label: str
    loc: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def sample(self, m: int, seed: int) -> SampleSet:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        items = []
        for i in range(m):
            x = self.loc + self.scale * float(rng.uniform(-1.0, 1.0))
            items.append(Sample(id=f"x{i:05d}", payload=x, codec="scalar"))
        return SampleSet(items, role="original", label=self.label)

    def contains(self, x: Sample) -> bool:
        return x.codec == "scalar" and self.loc - self.scale <= x.payload <= self.loc + self.scale

    def to_dict(self) -> dict:
        return {"kind": "numeric", "label": self.label, "loc": self.loc, "scale": self.scale}


CategorySpec = ProgramCategory | NumericCategory


def category_from_dict(d: dict) -> CategorySpec:
    kind = d.get("kind")
    if kind == "program":
        return ProgramCategory(
            label=d["label"],
            template=d["template"],
            ranges=tuple(tuple(r) for r in d["ranges"]),
            seq_len=d.get("seq_len", 8),
            alphabet=d.get("alphabet", 26),
        )
    if kind == "numeric":
        return NumericCategory(label=d["label"], loc=d["loc"], scale=d["scale"])
    raise ValueError(f"unknown category kind {kind!r}")


@dataclass
class CategorySuite:
    specs: list[CategorySpec]
    train_indices: list[int]
    holdout_indices: list[int]

    def __post_init__(self):
        m = len(self.specs)
        if m < 2:
            raise ValueError("a suite needs at least two categories")
        train, hold = set(self.train_indices), set(self.holdout_indices)
        if train & hold:
            raise ValueError("train and holdout indices overlap")
        if train | hold != set(range(m)):
            raise ValueError("train and holdout must cover all categories")

    def to_dict(self) -> dict:
        return {
            "categories": [s.to_dict() for s in self.specs],
            "train": list(self.train_indices),
            "holdout": list(self.holdout_indices),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategorySuite":
        return cls(
            specs=[category_from_dict(c) for c in d["categories"]],
            train_indices=list(d["train"]),
            holdout_indices=list(d["holdout"]),
        )


def load_suite(path) -> CategorySuite:
    with open(path, encoding="utf-8") as f:
        return CategorySuite.from_dict(json.load(f))


def builtin_suite(name: str) -> CategorySuite:
    """Shipped desk-scale suites with pairwise-disjoint fibres."""
    if name == "sequences":
        specs = [
            ProgramCategory("step1", "S?;A1", ((0, 25),)),
            ProgramCategory("step3", "S?;A3", ((0, 25),)),
            ProgramCategory("double", "S?;M2", ((1, 25),)),
            ProgramCategory("downcount", "S?;D1", ((0, 25),)),
            ProgramCategory("stairs", "S?;A1;A2", ((0, 25),)),
            ProgramCategory("wobble", "S?;A3;D1", ((0, 25),)),
        ]
        return CategorySuite(specs, train_indices=[0, 2, 4], holdout_indices=[1, 3, 5])
    if name == "scalars":
        specs = [
            NumericCategory("band-lo", loc=0.10, scale=0.05),
            NumericCategory("band-mid", loc=0.35, scale=0.05),
            NumericCategory("band-hi", loc=0.60, scale=0.05),
            NumericCategory("band-top", loc=0.85, scale=0.05),
        ]
        return CategorySuite(specs, train_indices=[0, 2], holdout_indices=[1, 3])
    raise ValueError(f"unknown builtin suite {name!r}")


# --- generators under test -------------------------------------------------


@dataclass
class GeneratorUnderTest:
    """Opaque generator: k-shot samples in, generated samples out.

    produce never sees category labels or specs; the harness strips
    labels before calling it.
    """

    key: str
    produce: Callable[[SampleSet, int, int], SampleSet]


def _strip_labels(s: SampleSet) -> SampleSet:
    items = [
        Sample(id=x.id, payload=x.payload, codec=x.codec, features=dict(x.features), label=None)
        for x in s
    ]
    return SampleSet(items, role=s.role, label=None)


def oracle_generator(suite: CategorySuite) -> GeneratorUnderTest:
    """Test-only cheat: identifies the fibre by membership and draws fresh
    true samples from it. Upper-bounds what any generator could achieve."""

    def produce(kshot: SampleSet, count: int, seed: int) -> SampleSet:
        for spec in suite.specs:
            if all(spec.contains(x) for x in kshot):
                fresh = _strip_labels(spec.sample(count, seed))
                fresh.role = "generated"
                return fresh
        raise ValueError("k-shot samples match no category in the suite")

    return GeneratorUnderTest(key="oracle", produce=produce)


def baseline_copy_generator(noise: float = 0.0) -> GeneratorUnderTest:
    """Memorization baseline: perturbed duplicates of the k-shot samples.

    noise is the per-position flip rate for sequence payloads and the
    jitter amplitude for scalars; 0 reproduces the k-shot samples
    verbatim.
    """
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0,1]")

    def produce(kshot: SampleSet, count: int, seed: int) -> SampleSet:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        alphabet = 1 + max(
            (max(x.payload) for x in kshot if x.codec == "symbol-sequence" and x.payload),
            default=1,
        )
        items = []
        for j in range(count):
            base = kshot.items[j % len(kshot)]
            payload = base.payload
            if base.codec == "symbol-sequence":
                payload = tuple(
                    int(rng.integers(0, alphabet)) if rng.random() < noise else s
                    for s in payload
                )
            elif base.codec == "scalar":
                payload = payload + noise * float(rng.uniform(-1.0, 1.0))
            elif base.codec == "utf8-text":
                payload = "".join(
                    chr(int(rng.integers(32, 127))) if rng.random() < noise else ch
                    for ch in payload
                )
            else:  # opaque-bytes
                payload = bytes(
                    int(rng.integers(0, 256)) if rng.random() < noise else b
                    for b in payload
                )
            items.append(
                Sample(id=f"g{j:05d}", payload=payload, codec=base.codec, features=dict(base.features))
            )
        return SampleSet(items, role="generated")

    return GeneratorUnderTest(key=f"copy[noise={noise!r}]", produce=produce)


def constant_generator() -> GeneratorUnderTest:
    """Degenerate baseline: one fixed payload, whatever the category."""

    def produce(kshot: SampleSet, count: int, seed: int) -> SampleSet:
        first = kshot.items[0]
        if first.codec == "symbol-sequence":
            payload = (0,) * len(first.payload)
        elif first.codec == "scalar":
            payload = 0.0
        elif first.codec == "utf8-text":
            payload = "x" * max(1, len(first.payload))
        else:
            payload = b"\x00" * max(1, len(first.payload))
        items = [
            Sample(id=f"g{j:05d}", payload=payload, codec=first.codec) for j in range(count)
        ]
        return SampleSet(items, role="generated")

    return GeneratorUnderTest(key="constant", produce=produce)


BUILTIN_GENERATORS = ("oracle", "copy", "constant")


def builtin_generator(name: str, suite: CategorySuite, noise: float = 0.0) -> GeneratorUnderTest:
    if name == "oracle":
        return oracle_generator(suite)
    if name == "copy":
        return baseline_copy_generator(noise)
    if name == "constant":
        return constant_generator()
    raise ValueError(f"unknown generator {name!r}; builtins: {', '.join(BUILTIN_GENERATORS)}")


# --- holdout evaluation ----------------------------------------------------


@dataclass
class HoldoutRow:
    label: str
    delta: float
    verdict: Verdict
    argmax_key: str
    sizes: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "delta": self.delta,
            "verdict": self.verdict.to_dict(),
            "argmax_key": self.argmax_key,
            "sizes": list(self.sizes),
        }


@dataclass
class HoldoutResult:
    generator_key: str
    rows: list[HoldoutRow]
    delta_mean: float
    delta_max: float
    epsilon: float
    all_pass: bool

    def to_dict(self) -> dict:
        return {
            "generator_key": self.generator_key,
            "rows": [r.to_dict() for r in self.rows],
            "delta_mean": self.delta_mean,
            "delta_max": self.delta_max,
            "epsilon": self.epsilon,
            "all_pass": self.all_pass,
        }


def holdout_eval(
    gen: GeneratorUnderTest,
    suite: CategorySuite,
    k_shot: int,
    m_gen: int,
    family: FamilyLike,
    sigma: ScoringFunction,
    epsilon: float,
    seed: int,
    m_ref: int | None = None,
) -> HoldoutResult:
    """Blind k-shot evaluation on every holdout category.

    Per category: an independent reference draw, a k-shot draw handed to
    the generator with labels stripped, and a gap computation between the
    reference and the generated set. The summary is the synchronic view:
    mean and max gap across the current holdout categories.
    """
    if k_shot < 1 or m_gen < 1:
        raise ValueError("k_shot and m_gen must be positive")
    if not suite.holdout_indices:
        raise EmptyHoldout("suite has no holdout categories")
    if m_ref is None:
        m_ref = max(m_gen, DEFAULT_MIN_REF)

    rows = []
    for idx in suite.holdout_indices:
        spec = suite.specs[idx]
        reference = spec.sample(m_ref, _derived_seed(seed, idx, 0))
        reference.role = "original"
        kshot = _strip_labels(spec.sample(k_shot, _derived_seed(seed, idx, 1)))
        generated = gen.produce(kshot, m_gen, _derived_seed(seed, idx, 2))
        if len(generated) != m_gen:
            raise ValueError(f"generator returned {len(generated)} samples, wanted {m_gen}")
        generated.role = "generated"
        report = core_delta(reference, generated, family, sigma)
        rows.append(
            HoldoutRow(
                label=spec.label,
                delta=report.delta,
                verdict=core_verdict(report, epsilon),
                argmax_key=report.argmax_key,
                sizes=report.sizes,
            )
        )
    deltas = [r.delta for r in rows]
    return HoldoutResult(
        generator_key=gen.key,
        rows=rows,
        delta_mean=math.fsum(deltas) / len(deltas),
        delta_max=max(deltas),
        epsilon=epsilon,
        all_pass=all(r.verdict.passed for r in rows),
    )


# --- functor transport -----------------------------------------------------


@dataclass(frozen=True)
class FunctorMap:
    """Bijective payload re-encoding with an exact inverse.

    Bijectivity makes the embedding full, faithful, and essentially
    surjective by construction, so transported distinguishers carry their
    guarantees to the new domain.
    """

    key: str
    forward: Callable[[Sample], Sample]
    inverse: Callable[[Sample], Sample]
    codecs: frozenset[str]


def _remap(x: Sample, payload) -> Sample:
    return Sample(id=x.id, payload=payload, codec=x.codec, features=dict(x.features), label=x.label)


def identity_functor() -> FunctorMap:
    same = lambda x: _remap(x, x.payload)
    return FunctorMap(key="identity", forward=same, inverse=same, codecs=frozenset(CODECS))


def symbol_permutation_functor(perm: tuple[int, ...]) -> FunctorMap:
    """Relabels symbols by a permutation of 0..len(perm)-1."""
    if sorted(perm) != list(range(len(perm))):
        raise ValueError("not a permutation of 0..n-1")
    inverse_perm = [0] * len(perm)
    for i, p in enumerate(perm):
        inverse_perm[p] = i

    def fwd(x: Sample) -> Sample:
        _require_codec(x, "symbol-sequence")
        return _remap(x, tuple(perm[s] for s in x.payload))

    def inv(x: Sample) -> Sample:
        _require_codec(x, "symbol-sequence")
        return _remap(x, tuple(inverse_perm[s] for s in x.payload))

    digest = ",".join(map(str, perm[:8]))
    return FunctorMap(
        key=f"perm[{len(perm)}:{digest}]",
        forward=fwd,
        inverse=inv,
        codecs=frozenset({"symbol-sequence"}),
    )


def scalar_affine_functor(a: float, b: float = 0.0) -> FunctorMap:
    """x -> a*x + b on scalar payloads.

    The inverse is exact in floating point when a is a power of two and
    b is 0; other parameters are honest bijections of the reals but may
    round-trip with 1-ulp error. Transport invariance does not depend on
    the inverse either way.
    """
    if a == 0.0:
        raise ValueError("scale must be nonzero")

    def fwd(x: Sample) -> Sample:
        _require_codec(x, "scalar")
        return _remap(x, a * x.payload + b)

    def inv(x: Sample) -> Sample:
        _require_codec(x, "scalar")
        return _remap(x, (x.payload - b) / a)

    return FunctorMap(
        key=f"affine[a={a!r},b={b!r}]",
        forward=fwd,
        inverse=inv,
        codecs=frozenset({"scalar"}),
    )


def _require_codec(x: Sample, codec: str):
    if x.codec != codec:
        raise CodecMismatch(f"functor needs codec {codec!r}, sample has {x.codec!r}")


def transport_family(family: DistinguisherFamily, functor: FunctorMap) -> DistinguisherFamily:
    """Pre-compose every member with the functor's forward map."""

    def transported(member: Distinguisher) -> Distinguisher:
        return Distinguisher(
            key=f"{member.key}|{functor.key}",
            kind=member.kind,
            fn=lambda x, m=member: evaluate(m, functor.forward(x)),
        )

    return DistinguisherFamily(
        key=f"{family.key}|{functor.key}",
        members=[transported(m) for m in family],
        lower_bound=family.lower_bound,
        data_dependent=family.data_dependent,
    )


def transport_invariance_check(
    s_b: SampleSet,
    s_hat_b: SampleSet,
    family_a: DistinguisherFamily,
    functor: FunctorMap,
    sigma: ScoringFunction,
) -> bool:
    """Evaluating transported members equals evaluating the original family
    on forward-mapped sets; exposed as a runnable exact-equality check."""
    left = core_delta(s_b, s_hat_b, transport_family(family_a, functor), sigma).delta
    mapped_s = SampleSet([functor.forward(x) for x in s_b], role=s_b.role, label=s_b.label)
    mapped_h = SampleSet(
        [functor.forward(x) for x in s_hat_b], role=s_hat_b.role, label=s_hat_b.label
    )
    right = core_delta(mapped_s, mapped_h, family_a, sigma).delta
    return left == right
