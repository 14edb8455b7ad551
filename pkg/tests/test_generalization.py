import pytest

from catfid.core import Sample, SampleSet, ScoringFunction, delta as core_delta
from catfid.distinguishers import (
    FeatureExtractor,
    ThresholdFamilySpec,
    make_exact_match,
    make_threshold_family,
)
from catfid.core import DistinguisherFamily
from catfid.errors import CodecMismatch, EmptyHoldout
from catfid.generalization import (
    CategorySuite,
    GeneratorUnderTest,
    NumericCategory,
    ProgramCategory,
    baseline_copy_generator,
    builtin_suite,
    constant_generator,
    holdout_eval,
    identity_functor,
    oracle_generator,
    scalar_affine_functor,
    symbol_permutation_functor,
    transport_family,
    transport_invariance_check,
)

from conftest import SCALAR_FEATURE, midpoint_family_builder, scalar_set, symbol_set

MEAN = ScoringFunction("mean")
MEAN_SYMBOL = FeatureExtractor(kind="mean-symbol-value", lo=0.0, hi=25.0)


def symbol_family_builder():
    spec = ThresholdFamilySpec(feature=MEAN_SYMBOL)
    return lambda s, s_hat: make_threshold_family(spec, s, s_hat)


class TestCategories:
    def test_program_category_step1(self):
        spec = ProgramCategory("step1", "S?;A1", ((0, 25),))
        out = spec.sample(3, seed=5)
        assert len(out) == 3 and out.label == "step1"
        for x in out:
            diffs = {(b - a) % 26 for a, b in zip(x.payload, x.payload[1:])}
            assert diffs == {1}
            assert spec.contains(x)

    def test_same_seed_identical(self):
        spec = ProgramCategory("step1", "S?;A1", ((0, 25),))
        a = spec.sample(4, seed=9)
        b = spec.sample(4, seed=9)
        assert [x.payload for x in a] == [x.payload for x in b]

    def test_singleton_set_permitted(self):
        spec = NumericCategory("band", loc=0.5, scale=0.1)
        assert len(spec.sample(1, seed=1)) == 1

    def test_numeric_membership(self):
        spec = NumericCategory("band", loc=0.5, scale=0.1)
        for x in spec.sample(50, seed=3):
            assert spec.contains(x)
        assert not spec.contains(Sample(id="q", payload=0.9, codec="scalar"))

    def test_placeholder_count_checked(self):
        with pytest.raises(ValueError):
            ProgramCategory("bad", "S?;A?", ((0, 25),))

    def test_suite_validation(self):
        specs = [
            NumericCategory("a", loc=0.2, scale=0.05),
            NumericCategory("b", loc=0.6, scale=0.05),
        ]
        with pytest.raises(ValueError):
            CategorySuite(specs, train_indices=[0], holdout_indices=[0, 1])
        with pytest.raises(ValueError):
            CategorySuite(specs, train_indices=[0], holdout_indices=[])

    def test_suite_round_trip(self):
        suite = builtin_suite("sequences")
        again = CategorySuite.from_dict(suite.to_dict())
        assert [s.label for s in again.specs] == [s.label for s in suite.specs]
        assert again.holdout_indices == suite.holdout_indices

    def test_builtin_fibres_disjoint(self):
        suite = builtin_suite("sequences")
        fibres = [spec.fibre for spec in suite.specs]
        for i in range(len(fibres)):
            for j in range(i + 1, len(fibres)):
                assert not (fibres[i] & fibres[j])


class TestBlindness:
    def test_generator_never_sees_labels(self):
        seen = []

        def spy_produce(kshot, count, seed):
            seen.append(kshot)
            return constant_generator().produce(kshot, count, seed)

        spy = GeneratorUnderTest(key="spy", produce=spy_produce)
        suite = builtin_suite("scalars")
        holdout_eval(spy, suite, 3, 10, midpoint_family_builder(), MEAN, 0.2, seed=1)
        assert seen
        for kshot in seen:
            assert kshot.label is None
            assert all(x.label is None for x in kshot)


class TestHoldoutEval:
    def test_oracle_near_noise_floor(self):
        suite = builtin_suite("scalars")
        result = holdout_eval(
            oracle_generator(suite), suite, 5, 100, midpoint_family_builder(), MEAN, 0.2, seed=3
        )
        assert result.all_pass
        assert result.delta_max <= 0.2

    def test_constant_generator_fails_somewhere(self):
        suite = builtin_suite("scalars")
        result = holdout_eval(
            constant_generator(), suite, 5, 100, midpoint_family_builder(), MEAN, 0.2, seed=3
        )
        assert not result.all_pass
        assert result.delta_max > 0.5

    def test_single_holdout_single_shot_shape(self):
        specs = [
            NumericCategory("a", loc=0.2, scale=0.05),
            NumericCategory("b", loc=0.6, scale=0.05),
        ]
        suite = CategorySuite(specs, train_indices=[0], holdout_indices=[1])
        result = holdout_eval(
            oracle_generator(suite), suite, 1, 10, midpoint_family_builder(), MEAN, 0.3, seed=2
        )
        assert len(result.rows) == 1
        assert result.rows[0].label == "b"

    def test_empty_holdout_rejected(self):
        specs = [
            NumericCategory("a", loc=0.2, scale=0.05),
            NumericCategory("b", loc=0.6, scale=0.05),
        ]
        suite = CategorySuite(specs, train_indices=[0, 1], holdout_indices=[])
        with pytest.raises(EmptyHoldout):
            holdout_eval(
                oracle_generator(suite), suite, 1, 5, midpoint_family_builder(), MEAN, 0.3, seed=2
            )

    def test_deterministic(self):
        suite = builtin_suite("sequences")
        kwargs = dict(
            suite=suite, k_shot=4, m_gen=30, family=symbol_family_builder(),
            sigma=MEAN, epsilon=0.2, seed=11,
        )
        a = holdout_eval(oracle_generator(suite), **kwargs)
        b = holdout_eval(oracle_generator(suite), **kwargs)
        assert a.to_dict() == b.to_dict()


class TestCopyBaseline:
    def test_pure_memorization_copies(self):
        spec = ProgramCategory("step1", "S?;A1", ((0, 25),))
        kshot = spec.sample(5, seed=4)
        out = baseline_copy_generator(0.0).produce(kshot, 5, seed=9)
        assert [x.payload for x in out] == [x.payload for x in kshot]
        fam = symbol_family_builder()
        assert core_delta(kshot, out, fam, MEAN).delta == 0.0

    def test_copy_delta_matches_category_self_noise_scale(self):
        spec = NumericCategory("band", loc=0.5, scale=0.1)
        ref = spec.sample(40, seed=21)
        kshot = spec.sample(40, seed=22)
        out = baseline_copy_generator(0.0).produce(kshot, 40, seed=23)
        out.role = "generated"
        d = core_delta(ref, out, midpoint_family_builder(), MEAN).delta
        assert d < 0.35  # same-window draws differ only by sampling noise

    def test_noise_degrades_monotonically(self):
        # k-shot sets the same size as the request, so the only difference
        # between the paired runs is the injected noise
        spec = NumericCategory("band", loc=0.5, scale=0.05)
        fam = midpoint_family_builder()
        worse = 0
        for seed in range(20):
            ref = spec.sample(50, seed=1000 + seed)
            kshot = spec.sample(50, seed=2000 + seed)
            clean = baseline_copy_generator(0.0).produce(kshot, 50, seed=3000 + seed)
            noisy = baseline_copy_generator(1.0).produce(kshot, 50, seed=3000 + seed)
            clean.role = noisy.role = "generated"
            d_clean = core_delta(ref, clean, fam, MEAN).delta
            d_noisy = core_delta(ref, noisy, fam, MEAN).delta
            worse += d_noisy >= d_clean
        assert worse == 20

    def test_oracle_beats_full_noise_copy(self):
        suite = builtin_suite("sequences")
        fam = symbol_family_builder()
        means = {}
        for key, gen in (("oracle", oracle_generator(suite)),
                         ("noisy", baseline_copy_generator(1.0))):
            result = holdout_eval(gen, suite, 5, 60, fam, MEAN, 0.2, seed=17)
            means[key] = result.delta_mean
        assert means["oracle"] < means["noisy"]


class TestFunctorTransport:
    def test_identity_functor_keeps_evaluations(self):
        s = scalar_set([0.2, 0.7])
        s_hat = scalar_set([0.4], role="generated")
        fam = midpoint_family_builder()(s, s_hat)
        moved = transport_family(fam, identity_functor())
        for original, transported in zip(fam, moved):
            for x in list(s) + list(s_hat):
                assert original.fn(x) == transported.fn(x)
        assert all("identity" in m.key for m in moved)

    def test_permutation_exact_match_pullback(self):
        perm = tuple((i + 1) % 26 for i in range(26))  # shift by one
        functor = symbol_permutation_functor(perm)
        target = Sample(id="t", payload=(3, 4, 5), codec="symbol-sequence")
        fam = DistinguisherFamily(key="em", members=[make_exact_match(target)])
        moved = transport_family(fam, functor)
        # transported member fires exactly on the preimage of the target
        preimage = Sample(id="p", payload=(2, 3, 4), codec="symbol-sequence")
        assert moved.members[0].fn(preimage) == 1.0
        assert moved.members[0].fn(target) == 0.0

    def test_affine_thresholds_act_at_preimages(self):
        functor = scalar_affine_functor(2.0, 0.1)
        spec = ThresholdFamilySpec(feature=SCALAR_FEATURE, thresholds=(0.5,))
        s = scalar_set([0.0])
        fam = make_threshold_family(spec, s, s)
        moved = transport_family(fam, functor)
        for i in range(10):
            x = Sample(id=f"x{i}", payload=i / 10, codec="scalar")
            direct = fam.members[0].fn(functor.forward(x))
            assert moved.members[0].fn(x) == direct
            assert moved.members[0].fn(x) == (1.0 if 2.0 * (i / 10) + 0.1 >= 0.5 else 0.0)

    def test_inverse_exact_on_shipped_safe_instances(self, rng):
        perm = tuple(int(v) for v in rng.permutation(26))
        functor = symbol_permutation_functor(perm)
        for _ in range(30):
            x = Sample(
                id="x",
                payload=tuple(int(v) for v in rng.integers(0, 26, 6)),
                codec="symbol-sequence",
            )
            assert functor.inverse(functor.forward(x)).payload == x.payload
        dyadic = scalar_affine_functor(0.25)
        for _ in range(30):
            x = Sample(id="x", payload=float(rng.uniform(-5, 5)), codec="scalar")
            assert dyadic.inverse(dyadic.forward(x)).payload == x.payload

    def test_codec_mismatch(self):
        functor = symbol_permutation_functor((1, 0))
        with pytest.raises(CodecMismatch):
            functor.forward(Sample(id="x", payload=0.5, codec="scalar"))

    def test_invariance_check_always_true(self, rng):
        for trial in range(50):
            if trial % 2 == 0:
                s = scalar_set(rng.uniform(0, 1, int(rng.integers(1, 8))))
                s_hat = scalar_set(rng.uniform(0, 1, int(rng.integers(1, 8))), role="generated")
                functor = scalar_affine_functor(float(rng.uniform(0.5, 3)), float(rng.uniform(-1, 1)))
                fam = midpoint_family_builder()(
                    SampleSet([functor.forward(x) for x in s], role="original"),
                    SampleSet([functor.forward(x) for x in s_hat], role="generated"),
                )
            else:
                seqs = [tuple(int(v) for v in rng.integers(0, 26, 5)) for _ in range(5)]
                s = symbol_set(seqs[:3])
                s_hat = symbol_set(seqs[3:], role="generated")
                functor = symbol_permutation_functor(tuple(int(v) for v in rng.permutation(26)))
                fam = symbol_family_builder()(s, s_hat)
            assert transport_invariance_check(s, s_hat, fam, functor, MEAN)
