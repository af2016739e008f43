from __future__ import annotations

import numpy as np
import pytest

from slu_denoise.data_model import Corpus, Instance, LabelSchema, Source
from slu_denoise.synth_task import TaskGrammar


@pytest.fixture
def tiny_schema() -> LabelSchema:
    return LabelSchema(intents=("greet", "order", "cancel"), slot_types=("item", "time"))


@pytest.fixture
def tiny_grammar() -> TaskGrammar:
    return TaskGrammar(
        templates=(
            ("order", ("get", "me", "{item}", "please")),
            ("order", ("i", "want", "{item}", "{time}")),
            ("cancel", ("drop", "my", "{item}", "order")),
            ("greet", ("hello", "there")),
        ),
        slot_lexicons={
            "item": (("tea",), ("coffee",), ("iced", "latte"), ("green", "tea", "shake")),
            "time": (("now",), ("at", "noon"), ("tonight",)),
        },
        carrier_vocab=("kindly", "maybe"),
    )


def make_instance(
    inst_id: str = "x-1",
    tokens=("get", "me", "tea", "please"),
    intent="order",
    slots=("O", "O", "B-item", "O"),
    source=Source.SRC,
    clean=None,
) -> Instance:
    return Instance(id=inst_id, tokens=tokens, intent=intent, slots=slots, source=source, clean=clean)


def instances_equal(a: Instance, b: Instance) -> bool:
    if (a.id, a.tokens, a.source, a.clean) != (b.id, b.tokens, b.source, b.clean):
        return False
    if a.has_soft_intent != b.has_soft_intent or a.has_soft_slots != b.has_soft_slots:
        return False
    if a.has_soft_intent:
        if not np.array_equal(a.intent, b.intent):
            return False
    elif a.intent != b.intent:
        return False
    if a.has_soft_slots:
        return np.array_equal(a.slots, b.slots)
    return a.slots == b.slots


def corpora_equal(a: Corpus, b: Corpus) -> bool:
    return (
        a.name == b.name
        and a.schema == b.schema
        and len(a) == len(b)
        and all(instances_equal(x, y) for x, y in zip(a.instances, b.instances))
    )
