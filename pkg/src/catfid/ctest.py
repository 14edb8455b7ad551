"""Sequence-induction battery with verified unique minimal explanations.

A tiny modular-arithmetic program language generates symbol sequences;
item difficulty is program length plus log2 of execution steps, rounded
up. Items are kept only when an exhaustive bounded enumeration shows a
single minimal explanation whose continuation every equally-simple
explanation shares, with the nearest differing explanation at least one
difficulty level away.

The enumeration prunes by the transition constraints the prefix imposes
on each op slot, which is equivalent to running every program: the op
applied at step s is fully determined by its slot, so a program
reproduces the prefix exactly when every slot satisfies all transitions
routed to it.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

from .core import DistinguisherFamily, Sample, SampleSet, ScoringFunction, delta as core_delta
from .distinguishers import make_exact_match
from .errors import (
    GenerationExhausted,
    NoExplanation,
    OutOfAlphabet,
    ParseError,
    StepBudgetExceeded,
)

OP_KINDS = ("A", "D", "M")  # add, subtract, multiply; all mod alphabet
MAX_CONSTANT = 4
ALL_OPS = tuple((kind, k) for kind in OP_KINDS for k in range(1, MAX_CONSTANT + 1))


@dataclass(frozen=True)
class Program:
    """start symbol plus a nonempty cyclic op list; one token per piece."""

    start: int
    ops: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("start must be nonnegative")
        if len(self.ops) < 1:
            raise ValueError("a program needs at least one op")
        for kind, k in self.ops:
            if kind not in OP_KINDS:
                raise ValueError(f"unknown op kind {kind!r}")
            if not 1 <= k <= MAX_CONSTANT:
                raise ValueError(f"op constant {k} outside 1..{MAX_CONSTANT}")

    @property
    def token_length(self) -> int:
        return 1 + len(self.ops)

    def to_text(self) -> str:
        return f"S{self.start}" + "".join(f";{kind}{k}" for kind, k in self.ops)


def apply_op(op: tuple[str, int], value: int, alphabet: int) -> int:
    kind, k = op
    if kind == "A":
        return (value + k) % alphabet
    if kind == "D":
        return (value - k) % alphabet
    return (value * k) % alphabet


def parse_program(text: str) -> Program:
    """Parse `S<int>(;(A|D|M)<int>)+` with byte-offset diagnostics."""
    pos = 0

    def read_int(expected: str) -> int:
        nonlocal pos
        begin = pos
        while pos < len(text) and text[pos].isdigit():
            pos += 1
        if pos == begin:
            raise ParseError(f"expected {expected}", begin)
        return int(text[begin:pos])

    if not text.startswith("S"):
        raise ParseError("expected 'S'", 0)
    pos = 1
    start = read_int("start integer")
    ops = []
    while pos < len(text):
        if text[pos] != ";":
            raise ParseError("expected ';'", pos)
        pos += 1
        if pos >= len(text) or text[pos] not in OP_KINDS:
            raise ParseError("expected op letter A, D, or M", pos)
        kind = text[pos]
        pos += 1
        k = read_int("op constant")
        if not 1 <= k <= MAX_CONSTANT:
            raise ParseError(f"op constant must lie in 1..{MAX_CONSTANT}", pos - 1)
        ops.append((kind, k))
    if not ops:
        raise ParseError("expected ';' and at least one op", pos)
    return Program(start=start, ops=tuple(ops))


def run_program(p: Program, n: int, step_budget: int, alphabet: int = 26) -> tuple[int, ...]:
    """Emit the start symbol, then one symbol per cyclic op application."""
    if n < 1:
        raise ValueError("need at least one symbol")
    steps = n - 1
    if steps > step_budget:
        raise StepBudgetExceeded(f"{steps} steps needed, budget {step_budget}")
    out = [p.start % alphabet]
    value = out[0]
    m = len(p.ops)
    for s in range(steps):
        value = apply_op(p.ops[s % m], value, alphabet)
        out.append(value)
    return tuple(out)


def kt(p: Program, steps: int) -> float:
    """Program length plus log2 of the steps spent producing the output."""
    if steps < 1:
        raise ValueError("steps must be positive")
    return p.token_length + math.log2(steps)


def quantized_kt(token_length: int, prefix_len: int) -> int:
    return math.ceil(token_length + math.log2(prefix_len - 1))


@dataclass(frozen=True)
class CtestItem:
    prefix: tuple[int, ...]
    continuation: int
    difficulty_h: int
    minimal_program: Program
    alphabet_size: int
    enumeration_bound: float


def _transition_candidates(a: int, b: int, alphabet: int) -> tuple[tuple[str, int], ...]:
    """Ops mapping a to b, in enumeration order."""
    return tuple(op for op in ALL_OPS if apply_op(op, a, alphabet) == b)


def _slot_candidates(
    prefix: tuple[int, ...], m: int, alphabet: int
) -> list[tuple[tuple[str, int], ...]] | None:
    """Per-slot admissible ops for an op list of length m, or None if any
    slot is unsatisfiable. Slots beyond every prefix transition are free."""
    slots: list[tuple[tuple[str, int], ...] | None] = [None] * m
    for s in range(1, len(prefix)):
        j = (s - 1) % m
        cands = _transition_candidates(prefix[s - 1], prefix[s], alphabet)
        slots[j] = cands if slots[j] is None else tuple(op for op in slots[j] if op in cands)
        if not slots[j]:
            return None
    return [ALL_OPS if c is None else c for c in slots]


def enumerate_minimal(
    prefix: tuple[int, ...], kt_bound: float, alphabet: int = 26
) -> list[tuple[Program, int]]:
    """All minimal-complexity explanations of the prefix, in program order.

    Searches every program of token length at most kt_bound. Complexity
    grows strictly with program length here (the step count is fixed by
    the prefix), so the minimal set is the first program length that
    reproduces the prefix; ties within it are returned in lexicographic
    op order.
    """
    prefix = tuple(int(x) for x in prefix)
    if len(prefix) < 2:
        raise ValueError("prefix must have length at least 2")
    if any(not 0 <= x < alphabet for x in prefix):
        raise OutOfAlphabet(f"prefix symbols must lie in 0..{alphabet - 1}")
    max_ops = int(math.floor(kt_bound)) - 1
    L = len(prefix)
    cont_slot_input = prefix[L - 1]
    for m in range(1, max_ops + 1):
        slots = _slot_candidates(prefix, m, alphabet)
        if slots is None:
            continue
        out = []
        cont_slot = (L - 1) % m
        for combo in itertools.product(*slots):
            program = Program(start=prefix[0], ops=combo)
            continuation = apply_op(combo[cont_slot], cont_slot_input, alphabet)
            out.append((program, continuation))
        return out
    raise NoExplanation(f"no program with token length <= {kt_bound} fits the prefix")


def min_kt_distinct_continuation(
    prefix: tuple[int, ...], kt_bound: float, alphabet: int, continuation: int
) -> int | None:
    """Smallest quantized complexity of an explanation that continues the
    prefix differently, or None when no such program exists in the bound."""
    prefix = tuple(int(x) for x in prefix)
    L = len(prefix)
    max_ops = int(math.floor(kt_bound)) - 1
    for m in range(1, max_ops + 1):
        slots = _slot_candidates(prefix, m, alphabet)
        if slots is None:
            continue
        cont_slot = (L - 1) % m
        for op in slots[cont_slot]:
            if apply_op(op, prefix[L - 1], alphabet) != continuation:
                return quantized_kt(m + 1, L)
    return None


def generate_item(
    h: int,
    prefix_len: int,
    alphabet: int = 26,
    seed: int = 0,
    kt_ceiling: float | None = None,
    max_attempts: int = 5000,
) -> CtestItem:
    """Rejection-sample an item whose minimal explanation is unique at
    difficulty h with every differing explanation at h+1 or beyond."""
    if h < 3:
        raise ValueError("difficulty must be at least 3")
    if prefix_len < 3:
        raise ValueError("prefix length must be at least 3")
    if kt_ceiling is None:
        kt_ceiling = float(h + 1)
    if kt_ceiling < h + 1:
        raise ValueError("search ceiling must reach h+1 to certify the margin")

    step_bits = math.log2(prefix_len - 1)
    target_tokens = h - math.ceil(step_bits)
    if target_tokens < 2 or quantized_kt(target_tokens, prefix_len) != h:
        raise GenerationExhausted(
            f"no token length yields quantized complexity {h} at prefix length {prefix_len}"
        )
    if target_tokens - 1 > prefix_len - 1:
        # an op list longer than the transition count truncates to a shorter
        # explanation of the same prefix, so it can never be minimal
        raise GenerationExhausted(
            f"difficulty {h} needs {target_tokens - 1} ops but a length-{prefix_len} "
            "prefix admits minimal explanations only up to its transition count; "
            "increase the prefix length"
        )

    rng = random.Random(seed)
    for _ in range(max_attempts):
        start = rng.randrange(alphabet)
        ops = tuple(
            (OP_KINDS[rng.randrange(3)], rng.randint(1, MAX_CONSTANT))
            for _ in range(target_tokens - 1)
        )
        candidate = Program(start=start, ops=ops)
        prefix = run_program(candidate, prefix_len, prefix_len, alphabet)
        try:
            minimal = enumerate_minimal(prefix, kt_ceiling, alphabet)
        except NoExplanation:  # pragma: no cover - candidate explains itself
            continue
        if len(minimal) != 1:
            continue
        program, continuation = minimal[0]
        if quantized_kt(program.token_length, prefix_len) != h:
            continue
        rival = min_kt_distinct_continuation(prefix, kt_ceiling, alphabet, continuation)
        if rival is not None and rival <= h:
            continue
        return CtestItem(
            prefix=prefix,
            continuation=continuation,
            difficulty_h=h,
            minimal_program=program,
            alphabet_size=alphabet,
            enumeration_bound=kt_ceiling,
        )
    raise GenerationExhausted(f"no acceptable item after {max_attempts} attempts")


def score_item(item: CtestItem, answer: int) -> str:
    if not 0 <= answer < item.alphabet_size:
        raise OutOfAlphabet(f"answer {answer} outside alphabet 0..{item.alphabet_size - 1}")
    return "correct" if answer == item.continuation else "incorrect"


def item_as_delta(item: CtestItem, answer: int):
    """The binary verdict as a degenerate one-member gap computation."""
    score_item(item, answer)  # validates the alphabet
    reference = Sample(id="continuation", payload=(item.continuation,), codec="symbol-sequence")
    response = Sample(id="answer", payload=(answer,), codec="symbol-sequence")
    family = DistinguisherFamily(
        key=f"ctest-exact[h={item.difficulty_h}]",
        members=[make_exact_match(reference)],
    )
    return core_delta(
        SampleSet([reference], role="original"),
        SampleSet([response], role="generated"),
        family,
        ScoringFunction("mean"),
    )


def item_public_dict(item: CtestItem) -> dict:
    return {
        "prefix": list(item.prefix),
        "alphabet": item.alphabet_size,
        "h": item.difficulty_h,
    }


def item_key_dict(item: CtestItem) -> dict:
    return {
        "continuation": item.continuation,
        "program": item.minimal_program.to_text(),
    }
