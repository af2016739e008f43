from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slu_denoise.data_model import (
    BioViolationError,
    CleanLabels,
    Corpus,
    CorpusParseError,
    Instance,
    LabelSchema,
    SchemaViolationError,
    Source,
    load_corpus,
    load_schema,
    merge_corpora,
    orphan_i_positions,
    save_corpus,
    save_schema,
    to_soft,
    validate_instance,
)
from slu_denoise.encoder import Prediction
from slu_denoise.losses import joint_cross_entropy, joint_cross_entropy_hard

from conftest import corpora_equal, make_instance


class TestLabelSchema:
    def test_tag_layout(self, tiny_schema):
        assert tiny_schema.slot_tags == ("O", "B-item", "I-item", "B-time", "I-time")
        assert tiny_schema.tag_id("O") == 0
        assert tiny_schema.tag_id("I-time") == 4
        assert tiny_schema.intent_id("cancel") == 2

    def test_unknown_labels_rejected(self, tiny_schema):
        with pytest.raises(SchemaViolationError):
            tiny_schema.intent_id("nope")
        with pytest.raises(SchemaViolationError):
            tiny_schema.tag_id("B-color")

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            LabelSchema(intents=("a", "a"), slot_types=("x",))
        with pytest.raises(ValueError):
            LabelSchema(intents=("a",), slot_types=("x", "x"))

    def test_roundtrip(self, tiny_schema, tmp_path):
        save_schema(tiny_schema, tmp_path / "schema.json")
        assert load_schema(tmp_path / "schema.json") == tiny_schema


class TestValidateInstance:
    def test_valid_instance(self, tiny_schema):
        assert validate_instance(make_instance(), tiny_schema) == []

    def test_orphan_i_tag(self, tiny_schema):
        inst = make_instance(tokens=("a", "b", "c"), slots=("O", "I-item", "O"))
        violations = validate_instance(inst, tiny_schema)
        assert violations == ["orphan I-tag at position 1"]

    def test_orphan_positions_type_switch(self):
        assert orphan_i_positions(["B-item", "I-time"]) == [1]
        assert orphan_i_positions(["B-item", "I-item", "I-item"]) == []

    def test_soft_intent_bad_sum(self, tiny_schema):
        inst = make_instance(
            tokens=("a",), intent=np.array([0.6, 0.6, 0.0]), slots=np.array([[1.0, 0, 0, 0, 0]])
        )
        violations = validate_instance(inst, tiny_schema)
        assert len(violations) == 1
        assert "distribution sum 1.2" in violations[0]

    def test_length_mismatch(self, tiny_schema):
        inst = make_instance(tokens=("a", "b"), slots=("O",))
        assert any("slots length 1 != tokens length 2" in v for v in validate_instance(inst, tiny_schema))

    def test_unknown_labels(self, tiny_schema):
        inst = make_instance(intent="fly", slots=("O", "O", "B-color", "O"))
        violations = validate_instance(inst, tiny_schema)
        assert any("unknown intent 'fly'" in v for v in violations)
        assert any("unknown slot tag 'B-color'" in v for v in violations)

    def test_clean_labels_checked(self, tiny_schema):
        inst = make_instance(clean=CleanLabels(intent="order", slots=("O", "I-item", "O", "O")))
        assert any("clean: orphan I-tag" in v for v in validate_instance(inst, tiny_schema))


class TestToSoft:
    def test_intent_one_hot(self, tiny_schema):
        soft = to_soft(0, [], tiny_schema)
        np.testing.assert_array_equal(soft.intent_dist, [1.0, 0.0, 0.0])

    def test_slot_one_hot(self, tiny_schema):
        soft = to_soft(1, [2], tiny_schema)
        assert soft.slot_dists.shape == (1, 5)
        np.testing.assert_array_equal(soft.slot_dists[0], [0, 0, 1.0, 0, 0])

    def test_out_of_range(self, tiny_schema):
        with pytest.raises(ValueError):
            to_soft(3, [], tiny_schema)
        with pytest.raises(ValueError):
            to_soft(0, [5], tiny_schema)

    def test_cross_entropy_identity(self, tiny_schema):
        # CE against the one-hot encoding must equal the hard-label CE exactly.
        rng = np.random.default_rng(0)
        for _ in range(20):
            length = int(rng.integers(1, 6))
            intent_id = int(rng.integers(tiny_schema.n_intents))
            slot_ids = [int(rng.integers(tiny_schema.n_slot_tags)) for _ in range(length)]
            logits_i = rng.normal(size=tiny_schema.n_intents)
            logits_s = rng.normal(size=(length, tiny_schema.n_slot_tags))
            pred = Prediction(
                intent_dist=np.exp(logits_i) / np.exp(logits_i).sum(),
                slot_dists=np.exp(logits_s) / np.exp(logits_s).sum(axis=1, keepdims=True),
            )
            soft = to_soft(intent_id, slot_ids, tiny_schema)
            assert joint_cross_entropy(pred, soft) == joint_cross_entropy_hard(
                pred, intent_id, slot_ids, tiny_schema
            )


# -- serialization round trips ------------------------------------------------


@st.composite
def corpus_strategy(draw) -> Corpus:
    schema = LabelSchema(intents=("a", "b", "c"), slot_types=("x", "y"))
    n = draw(st.integers(min_value=1, max_value=6))
    instances = []
    for i in range(n):
        length = draw(st.integers(min_value=1, max_value=5))
        tokens = tuple(draw(st.sampled_from(["red", "blue", "go", "stop", "now"])) for _ in range(length))
        soft = draw(st.booleans())
        if soft:
            intent = draw(st.integers(0, 2))
            intent_dist = np.zeros(3)
            intent_dist[intent] = 0.5
            intent_dist += 1.0 / 6
            slot_dists = np.full((length, 5), 0.1)
            for row in slot_dists:
                row[draw(st.integers(0, 4))] += 0.5
            inst = Instance(
                id=f"i-{i}", tokens=tokens, intent=intent_dist, slots=slot_dists, source=Source.TRANS
            )
        else:
            tags = []
            prev_type = None
            for _ in range(length):
                choice = draw(st.sampled_from(["O", "B-x", "B-y", "I"]))
                if choice == "I" and prev_type is not None:
                    tags.append(f"I-{prev_type}")
                elif choice == "I":
                    tags.append("O")
                else:
                    tags.append(choice)
                prev_type = tags[-1].split("-", 1)[1] if tags[-1] != "O" else None
            clean = None
            if draw(st.booleans()):
                clean = CleanLabels(intent="a", slots=tuple(["O"] * length))
            inst = Instance(
                id=f"i-{i}",
                tokens=tokens,
                intent=draw(st.sampled_from(["a", "b", "c"])),
                slots=tuple(tags),
                source=draw(st.sampled_from(list(Source))),
                clean=clean,
            )
        instances.append(inst)
    return Corpus(schema=schema, instances=tuple(instances), name="prop")


@settings(max_examples=40, deadline=None)
@given(corpus=corpus_strategy())
def test_corpus_roundtrip_identity(corpus, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("rt")
    path = tmp / "prop.jsonl"
    save_corpus(corpus, path)
    loaded = load_corpus(path, corpus.schema)
    assert corpora_equal(loaded, corpus)


class TestLoadErrors:
    def test_bio_violation_names_instance(self, tiny_schema, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"id":"bad-7","tokens":["a"],"intent":"order","slots":["I-time"],"source":"src"}\n'
        )
        with pytest.raises(BioViolationError, match="bad-7"):
            load_corpus(path, tiny_schema)

    def test_length_mismatch_is_schema_error(self, tiny_schema, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"id":"bad-1","tokens":["a","b"],"intent":"order","slots":["O"],"source":"src"}\n'
        )
        with pytest.raises(SchemaViolationError, match="bad-1"):
            load_corpus(path, tiny_schema)

    def test_parse_error_reports_line(self, tiny_schema, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"id":"ok","tokens":["a"],"intent":"order","slots":["O"],"source":"src"}\n'
            "{not json}\n"
        )
        with pytest.raises(CorpusParseError, match=":2"):
            load_corpus(path, tiny_schema)

    def test_duplicate_ids_rejected(self, tiny_schema):
        inst = make_instance()
        with pytest.raises(ValueError, match="duplicate"):
            Corpus(schema=tiny_schema, instances=(inst, inst), name="dup")


def test_merge_corpora(tiny_schema):
    a = Corpus(schema=tiny_schema, instances=(make_instance("a-1"),), name="a")
    b = Corpus(schema=tiny_schema, instances=(make_instance("b-1"),), name="b")
    merged = merge_corpora([a, b], "ab")
    assert [i.id for i in merged] == ["a-1", "b-1"]
    other = Corpus(
        schema=LabelSchema(intents=("z",), slot_types=("x",)),
        instances=(),
        name="other",
    )
    with pytest.raises(ValueError, match="different schema"):
        merge_corpora([a, other], "bad")
