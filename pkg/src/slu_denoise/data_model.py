"""Domain types for multi-source SLU training: label schema, instances, corpora.

An instance carries either hard labels (an intent name plus BIO tag strings)
or soft labels (probability rows over the schema's classes). Hard slot
sequences must be well-formed BIO; soft labels are only checked for
normalization, because averaged model predictions need not decode to a valid
tag sequence.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Tolerance for "sums to one" checks on probability vectors.
DIST_TOL = 1e-9

OUTSIDE_TAG = "O"


class Source(str, Enum):
    """How an instance was produced."""

    SRC = "src"      # authored in the source language, labels trusted
    TRANS = "trans"  # produced by (pseudo-)translation
    GEN = "gen"      # produced by (simulated) generation


class CorpusError(Exception):
    """Base class for corpus loading problems."""


class CorpusParseError(CorpusError):
    """Malformed file content; message carries path and line number."""


class SchemaViolationError(CorpusError):
    """Instance refers to labels outside the schema or is inconsistent."""


class BioViolationError(SchemaViolationError):
    """Hard slot sequence is not valid BIO; message names the instance id."""


@dataclass(frozen=True)
class LabelSchema:
    """Ordered intent and slot-type inventories.

    Class ids are positions in the stored orderings, so a schema serialized
    next to a corpus pins ids across runs. The BIO tag set is derived:
    ``O`` first, then ``B-t, I-t`` per slot type in order.
    """

    intents: tuple[str, ...]
    slot_types: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "intents", tuple(self.intents))
        object.__setattr__(self, "slot_types", tuple(self.slot_types))
        if not self.intents:
            raise ValueError("schema needs at least one intent")
        if len(set(self.intents)) != len(self.intents):
            raise ValueError("duplicate intent names")
        if len(set(self.slot_types)) != len(self.slot_types):
            raise ValueError("duplicate slot types")
        if OUTSIDE_TAG in self.slot_types:
            raise ValueError(f"slot type may not be named {OUTSIDE_TAG!r}")

    @cached_property
    def slot_tags(self) -> tuple[str, ...]:
        tags = [OUTSIDE_TAG]
        for t in self.slot_types:
            tags.append(f"B-{t}")
            tags.append(f"I-{t}")
        return tuple(tags)

    @cached_property
    def _intent_ids(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.intents)}

    @cached_property
    def _tag_ids(self) -> dict[str, int]:
        return {tag: i for i, tag in enumerate(self.slot_tags)}

    @property
    def n_intents(self) -> int:
        return len(self.intents)

    @property
    def n_slot_tags(self) -> int:
        return len(self.slot_tags)

    def intent_id(self, name: str) -> int:
        try:
            return self._intent_ids[name]
        except KeyError:
            raise SchemaViolationError(f"unknown intent '{name}'") from None

    def tag_id(self, tag: str) -> int:
        try:
            return self._tag_ids[tag]
        except KeyError:
            raise SchemaViolationError(f"unknown slot tag '{tag}'") from None

    def to_dict(self) -> dict:
        return {"intents": list(self.intents), "slot_types": list(self.slot_types)}

    @classmethod
    def from_dict(cls, d: dict) -> LabelSchema:
        return cls(intents=tuple(d["intents"]), slot_types=tuple(d["slot_types"]))


def tag_type(tag: str) -> str | None:
    """Slot type of a B-/I- tag, None for O."""
    if tag == OUTSIDE_TAG:
        return None
    return tag.split("-", 1)[1]


def orphan_i_positions(tags: Sequence[str]) -> list[int]:
    """Positions holding an I-tag not preceded by a B/I tag of the same type."""
    orphans: list[int] = []
    prev_type: str | None = None
    for i, tag in enumerate(tags):
        if tag.startswith("I-"):
            if prev_type != tag[2:]:
                orphans.append(i)
            prev_type = tag[2:]
        elif tag.startswith("B-"):
            prev_type = tag[2:]
        else:
            prev_type = None
    return orphans


def _readonly_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SoftLabels:
    """Probability targets: one row over intents, one row per token over tags."""

    intent_dist: np.ndarray
    slot_dists: np.ndarray  # shape (n_tokens, n_slot_tags)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intent_dist", _readonly_f64(self.intent_dist))
        object.__setattr__(self, "slot_dists", _readonly_f64(self.slot_dists))


@dataclass(frozen=True)
class CleanLabels:
    """Hidden ground-truth labels kept on corrupted instances for diagnostics."""

    intent: str
    slots: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))


@dataclass(frozen=True)
class Instance:
    """One utterance with an intent label and per-token slot labels.

    ``intent`` is either an intent name or a probability vector over intents;
    ``slots`` is either a tuple of BIO tag strings or a (n_tokens, n_slot_tags)
    array of per-token distributions.
    """

    id: str
    tokens: tuple[str, ...]
    intent: str | np.ndarray
    slots: tuple[str, ...] | np.ndarray
    source: Source = Source.SRC
    clean: CleanLabels | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not isinstance(self.intent, str):
            object.__setattr__(self, "intent", _readonly_f64(self.intent))
        if isinstance(self.slots, np.ndarray) or (
            len(self.slots) > 0 and not isinstance(self.slots[0], str)
        ):
            object.__setattr__(self, "slots", _readonly_f64(self.slots))
        else:
            object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "source", Source(self.source))

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def has_soft_intent(self) -> bool:
        return not isinstance(self.intent, str)

    @property
    def has_soft_slots(self) -> bool:
        return isinstance(self.slots, np.ndarray)

    def intent_dist(self, schema: LabelSchema) -> np.ndarray:
        """Intent distribution; one-hot for hard labels."""
        if self.has_soft_intent:
            return self.intent
        return to_soft(schema.intent_id(self.intent), [], schema).intent_dist

    def slot_dists(self, schema: LabelSchema) -> np.ndarray:
        """Per-token tag distributions; one-hot rows for hard labels."""
        if self.has_soft_slots:
            return self.slots
        ids = [schema.tag_id(t) for t in self.slots]
        return to_soft(0, ids, schema).slot_dists

    def intent_label(self, schema: LabelSchema) -> str:
        """Intent name; argmax for soft labels."""
        if not self.has_soft_intent:
            return self.intent
        return schema.intents[int(np.argmax(self.intent))]

    def slot_tag_strings(self, schema: LabelSchema) -> tuple[str, ...]:
        """BIO tags; per-token argmax for soft labels."""
        if not self.has_soft_slots:
            return self.slots
        return tuple(schema.slot_tags[int(i)] for i in np.argmax(self.slots, axis=1))


def _check_dist(vec: np.ndarray, expected_len: int, what: str) -> list[str]:
    problems: list[str] = []
    if vec.ndim != 1 or len(vec) != expected_len:
        problems.append(f"{what} length {vec.shape} != {expected_len}")
        return problems
    if np.any(vec < 0) or np.any(vec > 1 + DIST_TOL):
        problems.append(f"{what} has entries outside [0, 1]")
    total = float(vec.sum())
    if abs(total - 1.0) > DIST_TOL:
        problems.append(f"{what}: distribution sum {total:g}")
    return problems


def validate_instance(inst: Instance, schema: LabelSchema) -> list[str]:
    """Return every violated invariant, in a deterministic order.

    An empty list means the instance is valid for this schema.
    """
    violations: list[str] = []
    n = inst.n_tokens
    if n < 1:
        violations.append("empty token sequence")

    # Slot/token alignment first: later checks assume it.
    n_slots = inst.slots.shape[0] if inst.has_soft_slots else len(inst.slots)
    if n_slots != n:
        violations.append(f"slots length {n_slots} != tokens length {n}")

    if inst.has_soft_intent:
        violations.extend(_check_dist(inst.intent, schema.n_intents, "intent"))
    elif inst.intent not in schema._intent_ids:
        violations.append(f"unknown intent '{inst.intent}'")

    if inst.has_soft_slots:
        if inst.slots.ndim != 2 or inst.slots.shape[1] != schema.n_slot_tags:
            violations.append(
                f"slot distributions shape {inst.slots.shape} !="
                f" ({n}, {schema.n_slot_tags})"
            )
        else:
            for i in range(inst.slots.shape[0]):
                violations.extend(
                    _check_dist(inst.slots[i], schema.n_slot_tags, f"slot at position {i}")
                )
    else:
        known = True
        for i, tag in enumerate(inst.slots):
            if tag not in schema._tag_ids:
                violations.append(f"unknown slot tag '{tag}' at position {i}")
                known = False
        if known:
            for i in orphan_i_positions(inst.slots):
                violations.append(f"orphan I-tag at position {i}")

    if inst.clean is not None:
        if inst.clean.intent not in schema._intent_ids:
            violations.append(f"clean: unknown intent '{inst.clean.intent}'")
        if len(inst.clean.slots) != n:
            violations.append(f"clean: slots length {len(inst.clean.slots)} != tokens length {n}")
        bad = [t for t in inst.clean.slots if t not in schema._tag_ids]
        if bad:
            violations.append(f"clean: unknown slot tag '{bad[0]}'")
        else:
            for i in orphan_i_positions(inst.clean.slots):
                violations.append(f"clean: orphan I-tag at position {i}")

    return violations


def to_soft(hard_intent: int, hard_slots: Sequence[int], schema: LabelSchema) -> SoftLabels:
    """One-hot encode hard class ids.

    Cross-entropy against the result equals hard-label cross-entropy exactly,
    so soft labels are the only representation the training kernels need.
    """
    if not 0 <= hard_intent < schema.n_intents:
        raise ValueError(f"intent id {hard_intent} out of range [0, {schema.n_intents})")
    intent = np.zeros(schema.n_intents)
    intent[hard_intent] = 1.0
    slots = np.zeros((len(hard_slots), schema.n_slot_tags))
    for i, tag in enumerate(hard_slots):
        if not 0 <= tag < schema.n_slot_tags:
            raise ValueError(f"slot tag id {tag} out of range [0, {schema.n_slot_tags})")
        slots[i, tag] = 1.0
    return SoftLabels(intent_dist=intent, slot_dists=slots)


@dataclass(frozen=True)
class Corpus:
    """A named, schema-conformant collection of instances with unique ids."""

    schema: LabelSchema
    instances: tuple[Instance, ...]
    name: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        seen: set[str] = set()
        for inst in self.instances:
            if inst.id in seen:
                raise ValueError(f"duplicate instance id '{inst.id}' in corpus '{self.name}'")
            seen.add(inst.id)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @cached_property
    def by_id(self) -> dict[str, Instance]:
        return {inst.id: inst for inst in self.instances}

    def validate(self) -> dict[str, list[str]]:
        """Violations per instance id; empty dict means fully valid."""
        out: dict[str, list[str]] = {}
        for inst in self.instances:
            v = validate_instance(inst, self.schema)
            if v:
                out[inst.id] = v
        return out


def merge_corpora(corpora: Iterable[Corpus], name: str) -> Corpus:
    """Concatenate corpora sharing one schema (ids must stay unique)."""
    corpora = list(corpora)
    if not corpora:
        raise ValueError("nothing to merge")
    schema = corpora[0].schema
    for c in corpora[1:]:
        if c.schema != schema:
            raise ValueError(f"corpus '{c.name}' has a different schema")
    instances: list[Instance] = []
    for c in corpora:
        instances.extend(c.instances)
    return Corpus(schema=schema, instances=tuple(instances), name=name)


# ---------------------------------------------------------------------------
# Serialization. Corpora are JSONL, one instance object per line; the schema
# lives in its own JSON file and is written next to every emitted corpus.
# ---------------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def instance_to_obj(inst: Instance) -> dict:
    obj: dict = {
        "id": inst.id,
        "tokens": list(inst.tokens),
        "source": inst.source.value,
    }
    if inst.has_soft_intent:
        obj["intent"] = {"dist": inst.intent.tolist()}
    else:
        obj["intent"] = inst.intent
    if inst.has_soft_slots:
        obj["slots"] = {"dists": inst.slots.tolist()}
    else:
        obj["slots"] = list(inst.slots)
    if inst.clean is not None:
        obj["clean"] = {"intent": inst.clean.intent, "slots": list(inst.clean.slots)}
    return obj


def instance_from_obj(obj: dict) -> Instance:
    intent = obj["intent"]
    if isinstance(intent, dict):
        intent = np.asarray(intent["dist"], dtype=np.float64)
    slots = obj["slots"]
    if isinstance(slots, dict):
        slots = np.asarray(slots["dists"], dtype=np.float64)
    else:
        slots = tuple(slots)
    clean = None
    if obj.get("clean") is not None:
        clean = CleanLabels(intent=obj["clean"]["intent"], slots=tuple(obj["clean"]["slots"]))
    return Instance(
        id=obj["id"],
        tokens=tuple(obj["tokens"]),
        intent=intent,
        slots=slots,
        source=Source(obj["source"]),
        clean=clean,
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for inst in corpus.instances:
            f.write(_dumps(instance_to_obj(inst)))
            f.write("\n")


def load_corpus(path: str | Path, schema: LabelSchema, name: str | None = None) -> Corpus:
    """Load and fully validate a JSONL corpus.

    Raises CorpusParseError (with line number) on malformed lines,
    BioViolationError / SchemaViolationError (naming the instance id) on
    invalid content.
    """
    path = Path(path)
    instances: list[Instance] = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                inst = instance_from_obj(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusParseError(f"{path}:{lineno}: {exc}") from exc
            instances.append(inst)

    for inst in instances:
        violations = validate_instance(inst, schema)
        if violations:
            message = f"instance '{inst.id}': " + "; ".join(violations)
            if any("orphan I-tag" in v for v in violations):
                raise BioViolationError(message)
            raise SchemaViolationError(message)

    return Corpus(schema=schema, instances=tuple(instances), name=name or path.stem)


def save_schema(schema: LabelSchema, path: str | Path) -> None:
    Path(path).write_text(_dumps(schema.to_dict()) + "\n", encoding="utf-8")


def load_schema(path: str | Path) -> LabelSchema:
    return LabelSchema.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
