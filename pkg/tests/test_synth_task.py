from __future__ import annotations

import numpy as np
import pytest

from slu_denoise.data_model import Source, instance_to_obj, validate_instance
from slu_denoise.metrics import bio_spans
from slu_denoise.synth_task import (
    GENERATION_NOISE,
    TRANSLATION_NOISE,
    DatasetSizes,
    NoiseProfile,
    PseudoTranslator,
    TaskGrammar,
    build_augmented_corpora,
    default_grammar,
    generate_clean_dataset,
    inject_noise,
    load_grammar,
    make_translator,
    pseudo_translate,
    sample_instance,
    save_grammar,
)

from conftest import corpora_equal, make_instance


class TestGrammar:
    def test_schema_and_vocab(self, tiny_grammar):
        schema = tiny_grammar.schema()
        assert schema.intents == ("order", "cancel", "greet")
        assert schema.slot_types == ("item", "time")
        vocab = tiny_grammar.vocabulary()
        assert "tea" in vocab and "kindly" in vocab and "{item}" not in vocab

    def test_placeholder_without_lexicon_rejected(self):
        with pytest.raises(ValueError, match="no lexicon"):
            TaskGrammar(templates=(("a", ("{missing}",)),), slot_lexicons={})

    def test_roundtrip(self, tiny_grammar, tmp_path):
        save_grammar(tiny_grammar, tmp_path / "g.json")
        assert load_grammar(tmp_path / "g.json") == tiny_grammar

    def test_default_grammar_scale(self):
        g = default_grammar()
        schema = g.schema()
        assert schema.n_intents == 8
        assert len(schema.slot_types) == 6
        assert len(g.templates) == 40
        assert 250 <= len(g.vocabulary()) <= 350

    def test_samples_always_valid(self, tiny_grammar):
        schema = tiny_grammar.schema()
        for i in range(200):
            inst = sample_instance(tiny_grammar, np.random.default_rng(i), f"s-{i}")
            assert validate_instance(inst, schema) == []


class TestGenerateCleanDataset:
    def test_counts_and_validity(self, tiny_grammar):
        src, dev, tgt, test = generate_clean_dataset(tiny_grammar, 40, 10, 15, seed=3)
        assert (len(src), len(dev), len(tgt), len(test)) == (40, 10, 40, 15)
        for corpus in (src, dev, tgt, test):
            assert corpus.validate() == {}
        assert all(i.source == Source.SRC for i in src)
        assert all(i.source == Source.TRANS for i in tgt)

    def test_determinism(self, tiny_grammar):
        a = generate_clean_dataset(tiny_grammar, 25, 5, 5, seed=11)
        b = generate_clean_dataset(tiny_grammar, 25, 5, 5, seed=11)
        for ca, cb in zip(a, b):
            assert corpora_equal(ca, cb)

    def test_intent_mixture_matches_templates(self, tiny_grammar):
        # Templates are drawn uniformly, so intent counts over n samples are
        # multinomial; check each against its exact mean within 3 sigma.
        n = 10_000
        schema = tiny_grammar.schema()
        counts = {i: 0 for i in schema.intents}
        for i in range(n):
            inst = sample_instance(tiny_grammar, np.random.default_rng([5, i]), f"m-{i}")
            counts[inst.intent] += 1
        per_intent = {}
        for intent, _ in tiny_grammar.templates:
            per_intent[intent] = per_intent.get(intent, 0) + 1
        total = len(tiny_grammar.templates)
        for intent, k in per_intent.items():
            p = k / total
            sigma = (n * p * (1 - p)) ** 0.5
            assert abs(counts[intent] - n * p) <= 3 * sigma

    def test_span_type_mixture_matches_templates(self, tiny_grammar):
        # Span counts per type: mean and variance follow from the per-template
        # placeholder counts (enumerated exactly here as the oracle).
        n = 10_000
        occurrences = {}
        for _, pattern in tiny_grammar.templates:
            for tok in pattern:
                if tok.startswith("{"):
                    occurrences.setdefault(tok[1:-1], []).append(pattern)
        per_template = {
            t: [sum(1 for tok in p if tok == "{" + t + "}") for _, p in tiny_grammar.templates]
            for t in tiny_grammar.slot_lexicons
        }
        counts = {t: 0 for t in tiny_grammar.slot_lexicons}
        for i in range(n):
            inst = sample_instance(tiny_grammar, np.random.default_rng([6, i]), f"v-{i}")
            for label, _, _ in bio_spans(inst.slots):
                counts[label] += 1
        for t, occ in per_template.items():
            occ = np.asarray(occ, dtype=float)
            mean = occ.mean()
            var = occ.var()
            sigma = (n * var) ** 0.5
            assert abs(counts[t] - n * mean) <= max(3 * sigma, 1.0)


class TestPseudoTranslate:
    def test_fixed_lexicon_no_permutation(self):
        t = PseudoTranslator(lexicon={"play": "pley", "jazz": "jezz"}, permute_window=0)
        inst = make_instance(tokens=("play", "jazz"), slots=("O", "B-item"))
        out = pseudo_translate(inst, t, seed=0)
        assert out.tokens == ("pley", "jezz")
        assert out.slots == ("O", "B-item")

    def test_window_zero_is_identity_on_tags(self, tiny_grammar):
        t = make_translator(tiny_grammar, permute_window=0)
        for i in range(50):
            inst = sample_instance(tiny_grammar, np.random.default_rng(i), f"p-{i}")
            out = pseudo_translate(inst, t, seed=i)
            assert out.slots == inst.slots
            assert len(out.tokens) == len(inst.tokens)

    def test_inverse_recovers_source(self, tiny_grammar):
        t = make_translator(tiny_grammar, permute_window=0)
        inst = sample_instance(tiny_grammar, np.random.default_rng(1), "p-1")
        out = pseudo_translate(inst, t, seed=0)
        assert tuple(t.inverse[tok] for tok in out.tokens) == inst.tokens

    def test_unknown_token_rejected(self):
        t = PseudoTranslator(lexicon={"a": "b"}, permute_window=0)
        with pytest.raises(KeyError, match="zzz"):
            pseudo_translate(make_instance(tokens=("zzz",), slots=("O",)), t, seed=0)

    def test_non_bijective_lexicon_rejected(self):
        with pytest.raises(ValueError, match="bijective"):
            PseudoTranslator(lexicon={"a": "x", "b": "x"})

    def test_spans_move_with_tokens(self, tiny_grammar):
        # Brute-force check on 1k samples: every labeled span keeps its exact
        # (mapped) token content and type after local reordering.
        t = make_translator(tiny_grammar, permute_window=1)
        schema = tiny_grammar.schema()
        moved = 0
        for i in range(1000):
            inst = sample_instance(tiny_grammar, np.random.default_rng([7, i]), f"w-{i}")
            out = pseudo_translate(inst, t, [8, i])
            assert validate_instance(out, schema) == []
            before = sorted(
                (label, tuple(t.lexicon[tok] for tok in inst.tokens[s:e]))
                for label, s, e in bio_spans(inst.slots)
            )
            after = sorted(
                (label, tuple(out.tokens[s:e])) for label, s, e in bio_spans(out.slots)
            )
            assert after == before
            moved += out.tokens != tuple(t.lexicon[tok] for tok in inst.tokens)
        assert moved > 100  # reordering actually happens


class TestInjectNoise:
    def test_zero_profile_identity(self, tiny_grammar):
        schema = tiny_grammar.schema()
        inst = sample_instance(tiny_grammar, np.random.default_rng(0), "n-0")
        out = inject_noise(inst, NoiseProfile(), schema, seed=1)
        assert out.tokens == inst.tokens
        assert out.slots == inst.slots
        assert out.intent == inst.intent
        assert out.clean is not None
        assert out.clean.intent == inst.intent and out.clean.slots == inst.slots

    def test_forced_intent_flip(self, tiny_grammar):
        schema = tiny_grammar.schema()
        profile = NoiseProfile(p_intent_flip=1.0)
        for i in range(100):
            inst = sample_instance(tiny_grammar, np.random.default_rng(i), f"f-{i}")
            out = inject_noise(inst, profile, schema, seed=i)
            assert out.intent != out.clean.intent

    def test_soft_labels_rejected(self, tiny_schema):
        inst = make_instance(
            tokens=("a",), intent=np.array([1.0, 0, 0]), slots=np.array([[1.0, 0, 0, 0, 0]])
        )
        with pytest.raises(ValueError, match="hard labels"):
            inject_noise(inst, NoiseProfile(), tiny_schema, seed=0)

    def test_slot_flip_rate_monte_carlo(self, tiny_grammar):
        # Flip triggers are independent per span, so over ~10k spans the
        # observed rate lands within the binomial interval around 0.3.
        schema = tiny_grammar.schema()
        profile = NoiseProfile(p_slot_type_flip=0.3)
        spans = flips = 0
        i = 0
        while spans < 10_000:
            inst = sample_instance(tiny_grammar, np.random.default_rng([9, i]), f"mc-{i}")
            out = inject_noise(inst, profile, schema, [10, i])
            before = bio_spans(out.clean.slots)
            after = bio_spans(out.slots)
            assert len(before) == len(after)
            for (lb, s, e), (la, sa, ea) in zip(before, after):
                assert (s, e) == (sa, ea)
                spans += 1
                flips += lb != la
            i += 1
        assert abs(flips / spans - 0.3) <= 0.015

    def test_outputs_stay_valid_bio(self, tiny_grammar):
        schema = tiny_grammar.schema()
        profile = NoiseProfile(
            p_intent_flip=0.3,
            p_slot_type_flip=0.4,
            p_boundary_shift=0.5,
            p_token_substitute=0.3,
            p_token_drop=0.2,
        )
        pool = tiny_grammar.vocabulary()
        for i in range(300):
            inst = sample_instance(tiny_grammar, np.random.default_rng([11, i]), f"b-{i}")
            out = inject_noise(inst, profile, schema, [12, i], token_pool=pool)
            assert validate_instance(out, schema) == []
            assert len(out.slots) == len(out.tokens)
            assert out.clean is not None and len(out.clean.slots) == len(out.tokens)


class TestBuildAugmentedCorpora:
    def test_zero_trans_profile_keeps_labels(self, tiny_grammar):
        zero = NoiseProfile()
        gen = NoiseProfile(p_intent_flip=0.5)
        sizes = DatasetSizes(n_train=30, n_dev=5, n_test=5)
        corpora = build_augmented_corpora(
            tiny_grammar, make_translator(tiny_grammar), zero, gen, sizes, seed=2
        )
        for inst in corpora["trans"]:
            assert inst.slots == inst.clean.slots
            assert inst.intent == inst.clean.intent

    def test_profile_ordering_enforced(self, tiny_grammar):
        with pytest.raises(ValueError, match="strictly more"):
            build_augmented_corpora(
                tiny_grammar,
                make_translator(tiny_grammar),
                NoiseProfile(p_intent_flip=0.2),
                NoiseProfile(p_intent_flip=0.2),
                DatasetSizes(n_train=5, n_dev=2, n_test=2),
                seed=0,
            )

    def test_deterministic_bytes(self, tiny_grammar):
        sizes = DatasetSizes(n_train=20, n_dev=5, n_test=5)
        args = (tiny_grammar, make_translator(tiny_grammar), TRANSLATION_NOISE, GENERATION_NOISE, sizes)
        a = build_augmented_corpora(*args, seed=9)
        b = build_augmented_corpora(*args, seed=9)
        for name in a:
            assert [instance_to_obj(i) for i in a[name]] == [instance_to_obj(i) for i in b[name]]

    def test_gen_noisier_than_trans(self, tiny_grammar):
        sizes = DatasetSizes(n_train=800, n_dev=5, n_test=5)
        corpora = build_augmented_corpora(
            tiny_grammar, make_translator(tiny_grammar), TRANSLATION_NOISE, GENERATION_NOISE, sizes, seed=4
        )

        def label_error(corpus):
            wrong = total = 0
            for inst in corpus:
                total += len(inst.slots)
                wrong += sum(a != c for a, c in zip(inst.slots, inst.clean.slots))
            return wrong / total

        assert label_error(corpora["gen"]) > label_error(corpora["trans"])

    def test_structure_and_sources(self, tiny_grammar):
        sizes = DatasetSizes(n_train=12, n_dev=4, n_test=6, gen_copies=2)
        corpora = build_augmented_corpora(
            tiny_grammar, make_translator(tiny_grammar), TRANSLATION_NOISE, GENERATION_NOISE, sizes, seed=5
        )
        assert set(corpora) == {"src", "trans", "gen", "dev", "dev_tgt", "test"}
        assert len(corpora["gen"]) == 24  # gen_copies * n_train
        assert all(i.source == Source.GEN for i in corpora["gen"])
        assert all(i.source == Source.TRANS for i in corpora["trans"])
        # test labels are gold: no hidden clean copy, fully valid
        assert all(i.clean is None for i in corpora["test"])
        assert corpora["test"].validate() == {}
