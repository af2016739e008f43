"""Synthetic SLU task: template grammar, pseudo-translation, label-noise injectors.

The grammar produces clean utterances with gold intent/slot annotations. A
bijective-lexicon "translator" maps them into a disjoint target vocabulary
(labels move with their tokens, so projection is exact), and noise injectors
then corrupt labels and tokens at configurable rates while stashing the
original labels in the instance's ``clean`` field. Together these stand in
for a real translate-and-align pipeline and a text generator, with the key
property that corruption rates are known and measurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_model import (
    OUTSIDE_TAG,
    CleanLabels,
    Corpus,
    Instance,
    LabelSchema,
    Source,
    orphan_i_positions,
    tag_type,
)

__all__ = [
    "TaskGrammar",
    "NoiseProfile",
    "PseudoTranslator",
    "DatasetSizes",
    "TRANSLATION_NOISE",
    "GENERATION_NOISE",
    "default_grammar",
    "make_translator",
    "load_grammar",
    "save_grammar",
    "generate_clean_dataset",
    "pseudo_translate",
    "inject_noise",
    "build_augmented_corpora",
]

# Seed-stream tags so every instance gets an independent generator derived
# from (master seed, stream, index) and generation order never matters.
_STREAM_SRC = 0
_STREAM_DEV = 1
_STREAM_TGT = 2
_STREAM_TGT_XLATE = 3
_STREAM_TEST = 4
_STREAM_TEST_XLATE = 5
_STREAM_DEVTGT = 6
_STREAM_DEVTGT_XLATE = 7
_STREAM_TRANS_NOISE = 8
_STREAM_GEN_NOISE = 9
_STREAM_GEN = 10
_STREAM_GEN_XLATE = 11


def _is_placeholder(token: str) -> bool:
    return token.startswith("{") and token.endswith("}") and len(token) > 2


@dataclass(frozen=True)
class TaskGrammar:
    """Templated utterance grammar.

    ``templates`` pairs an intent name with a token pattern; pattern tokens of
    the form ``{slot_type}`` expand to a sampled lexicon entry tagged
    ``B-type I-type ...``, everything else is a literal carrier token tagged
    ``O``. ``carrier_vocab`` lists extra filler tokens that belong to the
    language (available to substitution noise) without appearing in templates.
    """

    templates: tuple[tuple[str, tuple[str, ...]], ...]
    slot_lexicons: Mapping[str, tuple[tuple[str, ...], ...]]
    carrier_vocab: tuple[str, ...] = ()
    # Rank skew for lexicon entry sampling: weight of entry at rank r is
    # (r+1)^-entry_skew. 0 samples uniformly; >0 gives a long tail of rare
    # values, like real slot lexicons.
    entry_skew: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "templates", tuple((i, tuple(p)) for i, p in self.templates)
        )
        object.__setattr__(
            self,
            "slot_lexicons",
            {t: tuple(tuple(e) for e in entries) for t, entries in self.slot_lexicons.items()},
        )
        object.__setattr__(self, "carrier_vocab", tuple(self.carrier_vocab))
        if not self.templates:
            raise ValueError("grammar has no templates")
        for intent, pattern in self.templates:
            if not pattern:
                raise ValueError(f"empty pattern for intent '{intent}'")
            for tok in pattern:
                if _is_placeholder(tok):
                    slot = tok[1:-1]
                    if slot not in self.slot_lexicons:
                        raise ValueError(f"placeholder '{tok}' has no lexicon")
                    if not self.slot_lexicons[slot]:
                        raise ValueError(f"empty lexicon for slot type '{slot}'")
        for t, entries in self.slot_lexicons.items():
            if any(len(e) == 0 for e in entries):
                raise ValueError(f"empty lexicon entry for slot type '{t}'")
        if self.entry_skew < 0:
            raise ValueError("entry_skew must be >= 0")

    @cached_property
    def _entry_weights(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for t, entries in self.slot_lexicons.items():
            w = (np.arange(len(entries), dtype=np.float64) + 1.0) ** -self.entry_skew
            out[t] = w / w.sum()
        return out

    def schema(self) -> LabelSchema:
        intents = tuple(dict.fromkeys(intent for intent, _ in self.templates))
        return LabelSchema(intents=intents, slot_types=tuple(sorted(self.slot_lexicons)))

    def vocabulary(self) -> tuple[str, ...]:
        """All surface tokens the grammar can emit, sorted."""
        vocab: set[str] = set(self.carrier_vocab)
        for _, pattern in self.templates:
            vocab.update(tok for tok in pattern if not _is_placeholder(tok))
        for entries in self.slot_lexicons.values():
            for entry in entries:
                vocab.update(entry)
        return tuple(sorted(vocab))

    def to_dict(self) -> dict:
        return {
            "templates": [[i, list(p)] for i, p in self.templates],
            "slot_lexicons": {t: [list(e) for e in es] for t, es in self.slot_lexicons.items()},
            "carrier_vocab": list(self.carrier_vocab),
            "entry_skew": self.entry_skew,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TaskGrammar:
        return cls(
            templates=tuple((i, tuple(p)) for i, p in d["templates"]),
            slot_lexicons={t: tuple(tuple(e) for e in es) for t, es in d["slot_lexicons"].items()},
            carrier_vocab=tuple(d.get("carrier_vocab", ())),
            entry_skew=d.get("entry_skew", 0.0),
        )


def save_grammar(grammar: TaskGrammar, path: str | Path) -> None:
    Path(path).write_text(json.dumps(grammar.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_grammar(path: str | Path) -> TaskGrammar:
    return TaskGrammar.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class NoiseProfile:
    """Independent corruption rates applied per instance.

    ``p_intent_flip`` per instance, ``p_slot_type_flip`` and
    ``p_boundary_shift`` per span, ``p_token_substitute`` and ``p_token_drop``
    per token.
    """

    p_intent_flip: float = 0.0
    p_slot_type_flip: float = 0.0
    p_boundary_shift: float = 0.0
    p_token_substitute: float = 0.0
    p_token_drop: float = 0.0

    def __post_init__(self) -> None:
        for field in (
            "p_intent_flip",
            "p_slot_type_flip",
            "p_boundary_shift",
            "p_token_substitute",
            "p_token_drop",
        ):
            p = getattr(self, field)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{field}={p} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "p_intent_flip": self.p_intent_flip,
            "p_slot_type_flip": self.p_slot_type_flip,
            "p_boundary_shift": self.p_boundary_shift,
            "p_token_substitute": self.p_token_substitute,
            "p_token_drop": self.p_token_drop,
        }

    @classmethod
    def from_dict(cls, d: dict) -> NoiseProfile:
        return cls(**d)


# Defaults chosen so the simulated generator output is measurably noisier
# than the simulated translation output, with intent errors only in the
# generated corpus.
TRANSLATION_NOISE = NoiseProfile(
    p_intent_flip=0.0, p_slot_type_flip=0.10, p_boundary_shift=0.15, p_token_substitute=0.05
)
GENERATION_NOISE = NoiseProfile(
    p_intent_flip=0.10, p_slot_type_flip=0.25, p_boundary_shift=0.25, p_token_substitute=0.15
)


@dataclass(frozen=True)
class PseudoTranslator:
    """Deterministic token-level "machine translation".

    ``lexicon`` is a bijection onto a vocabulary disjoint from the source
    language; ``permute_window`` bounds how far a span or filler token may be
    displaced by local reordering (0 keeps word order intact).
    """

    lexicon: Mapping[str, str]
    permute_window: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "lexicon", dict(self.lexicon))
        if len(set(self.lexicon.values())) != len(self.lexicon):
            raise ValueError("lexicon is not bijective")
        if self.permute_window < 0:
            raise ValueError("permute_window must be >= 0")

    @cached_property
    def inverse(self) -> dict[str, str]:
        return {v: k for k, v in self.lexicon.items()}

    def target_vocabulary(self) -> tuple[str, ...]:
        return tuple(sorted(self.lexicon.values()))


def _pseudo_word(token: str) -> str:
    # Reversal keeps the map injective; the suffix makes the target
    # vocabulary visibly foreign and (checked below) disjoint from the source.
    return token[::-1] + "u"


def make_translator(grammar: TaskGrammar, permute_window: int = 1) -> PseudoTranslator:
    """Bijective lexicon over the grammar vocabulary, disjoint target side."""
    source = grammar.vocabulary()
    lexicon = {tok: _pseudo_word(tok) for tok in source}
    overlap = set(lexicon.values()) & set(source)
    if overlap:
        raise ValueError(f"target vocabulary collides with source: {sorted(overlap)[:3]}")
    return PseudoTranslator(lexicon=lexicon, permute_window=permute_window)


# ---------------------------------------------------------------------------
# Clean data generation
# ---------------------------------------------------------------------------


def sample_instance(
    grammar: TaskGrammar,
    rng: np.random.Generator,
    inst_id: str,
    source: Source = Source.SRC,
) -> Instance:
    """Draw one instance: uniform template, uniform lexicon entries."""
    intent, pattern = grammar.templates[int(rng.integers(len(grammar.templates)))]
    tokens: list[str] = []
    tags: list[str] = []
    for tok in pattern:
        if _is_placeholder(tok):
            slot = tok[1:-1]
            entries = grammar.slot_lexicons[slot]
            if grammar.entry_skew > 0:
                entry = entries[int(rng.choice(len(entries), p=grammar._entry_weights[slot]))]
            else:
                entry = entries[int(rng.integers(len(entries)))]
            tokens.extend(entry)
            tags.append(f"B-{slot}")
            tags.extend(f"I-{slot}" for _ in entry[1:])
        else:
            tokens.append(tok)
            tags.append(OUTSIDE_TAG)
    return Instance(id=inst_id, tokens=tuple(tokens), intent=intent, slots=tuple(tags), source=source)


def _sample_corpus(
    grammar: TaskGrammar,
    schema: LabelSchema,
    n: int,
    seed: int,
    stream: int,
    prefix: str,
    source: Source,
) -> Corpus:
    instances = tuple(
        sample_instance(grammar, np.random.default_rng([seed, stream, i]), f"{prefix}-{i:05d}", source)
        for i in range(n)
    )
    return Corpus(schema=schema, instances=instances, name=prefix)


def _bio_segments(tags: Sequence[str]) -> list[tuple[int, int]]:
    """Split positions into movable units: whole spans and single O tokens."""
    segments: list[tuple[int, int]] = []
    i = 0
    n = len(tags)
    while i < n:
        if tags[i].startswith("B-"):
            j = i + 1
            t = tags[i][2:]
            while j < n and tags[j] == f"I-{t}":
                j += 1
            segments.append((i, j))
            i = j
        else:
            segments.append((i, i + 1))
            i += 1
    return segments


def pseudo_translate(inst: Instance, translator: PseudoTranslator, seed) -> Instance:
    """Map tokens through the lexicon with optional bounded local reordering.

    Spans move as atomic units so slot labels stay aligned to their (mapped)
    value tokens and the result remains valid BIO. With permute_window=0 the
    token order and tag sequence are unchanged.
    """
    if inst.has_soft_slots or inst.has_soft_intent:
        raise ValueError("pseudo_translate expects hard labels")
    missing = [t for t in inst.tokens if t not in translator.lexicon]
    if missing:
        raise KeyError(f"token '{missing[0]}' not in translator lexicon")

    order = list(range(inst.n_tokens))
    if translator.permute_window > 0:
        rng = np.random.default_rng(seed)
        segments = _bio_segments(inst.slots)
        # Jittered-key sort: displacement of a segment's start is bounded by
        # the window, and segments never interleave.
        keys = [start + rng.uniform(0.0, translator.permute_window + 1.0) for start, _ in segments]
        seg_order = sorted(range(len(segments)), key=lambda j: keys[j])
        order = [pos for j in seg_order for pos in range(*segments[j])]

    tokens = tuple(translator.lexicon[inst.tokens[p]] for p in order)
    slots = tuple(inst.slots[p] for p in order)
    clean = inst.clean
    if clean is not None:
        clean = CleanLabels(intent=clean.intent, slots=tuple(clean.slots[p] for p in order))
    return Instance(
        id=inst.id, tokens=tokens, intent=inst.intent, slots=slots, source=inst.source, clean=clean
    )


def generate_clean_dataset(
    grammar: TaskGrammar,
    n_train: int,
    n_dev: int,
    n_test: int,
    seed: int,
    translator: PseudoTranslator | None = None,
) -> tuple[Corpus, Corpus, Corpus, Corpus]:
    """Clean source train/dev plus pseudo-translated target train and test.

    The target-side corpora are exact-projection translations of freshly drawn
    clean instances, so their labels are gold; the target train pool is the
    raw material the noise injectors corrupt. Identical seeds reproduce all
    four corpora exactly.
    """
    if min(n_train, n_dev, n_test) < 1:
        raise ValueError("all split sizes must be >= 1")
    translator = translator or make_translator(grammar)
    schema = grammar.schema()

    src = _sample_corpus(grammar, schema, n_train, seed, _STREAM_SRC, "src", Source.SRC)
    dev = _sample_corpus(grammar, schema, n_dev, seed, _STREAM_DEV, "dev", Source.SRC)

    def translated(n: int, stream: int, xlate_stream: int, prefix: str) -> Corpus:
        pool = _sample_corpus(grammar, schema, n, seed, stream, prefix, Source.TRANS)
        instances = tuple(
            pseudo_translate(inst, translator, [seed, xlate_stream, i])
            for i, inst in enumerate(pool.instances)
        )
        return Corpus(schema=schema, instances=instances, name=prefix)

    target_train = translated(n_train, _STREAM_TGT, _STREAM_TGT_XLATE, "tgt")
    test = translated(n_test, _STREAM_TEST, _STREAM_TEST_XLATE, "test")
    return src, dev, target_train, test


# ---------------------------------------------------------------------------
# Noise injection
# ---------------------------------------------------------------------------


def _spans(tags: Sequence[str]) -> list[tuple[str, int, int]]:
    return [
        (tag_type(tags[s]), s, e)
        for s, e in _bio_segments(tags)
        if tags[s] != OUTSIDE_TAG
    ]


def _repair_bio(tags: list[str]) -> list[str]:
    for i in orphan_i_positions(tags):
        tags[i] = "B-" + tags[i][2:]
    return tags


def inject_noise(
    inst: Instance,
    profile: NoiseProfile,
    schema: LabelSchema,
    seed,
    token_pool: Sequence[str] | None = None,
) -> Instance:
    """Corrupt a hard-labeled instance, stashing its original labels in ``clean``.

    Each corruption fires independently at its configured rate, in a fixed
    draw order: intent flip, per-span type flips, per-span boundary shifts,
    per-token substitutions, per-token drops. Boundary shifts that would
    orphan an I-tag or empty a span are skipped, so the output stays valid
    BIO. Substitutions draw from ``token_pool`` (falling back to the
    instance's own tokens); drops remove the token from both the noisy and the
    clean tag sequence, with BIO repair on both.
    """
    if inst.has_soft_slots or inst.has_soft_intent:
        raise ValueError("inject_noise expects hard labels")
    rng = np.random.default_rng(seed)

    clean_intent = inst.intent
    clean_tags = list(inst.slots)
    tokens = list(inst.tokens)
    tags = list(inst.slots)
    intent = inst.intent

    if rng.random() < profile.p_intent_flip and schema.n_intents > 1:
        others = [name for name in schema.intents if name != intent]
        intent = others[int(rng.integers(len(others)))]

    if len(schema.slot_types) > 1:
        for slot_type, start, end in _spans(tags):
            if rng.random() < profile.p_slot_type_flip:
                others = [t for t in schema.slot_types if t != slot_type]
                new_type = others[int(rng.integers(len(others)))]
                tags[start] = f"B-{new_type}"
                for i in range(start + 1, end):
                    tags[i] = f"I-{new_type}"

    for slot_type, start, end in _spans(tags):
        if rng.random() < profile.p_boundary_shift:
            extend = rng.random() < 0.5
            if extend:
                if end < len(tags) and tags[end] == OUTSIDE_TAG:
                    tags[end] = f"I-{slot_type}"
            else:
                if end - start >= 2:
                    tags[end - 1] = OUTSIDE_TAG

    if profile.p_token_substitute > 0.0:
        pool = tuple(token_pool) if token_pool is not None else tuple(sorted(set(tokens)))
        for i in range(len(tokens)):
            if rng.random() < profile.p_token_substitute:
                candidates = [t for t in pool if t != tokens[i]]
                if candidates:
                    tokens[i] = candidates[int(rng.integers(len(candidates)))]

    if profile.p_token_drop > 0.0:
        keep = [rng.random() >= profile.p_token_drop for _ in tokens]
        if not any(keep):
            keep[0] = True
        tokens = [t for t, k in zip(tokens, keep) if k]
        tags = _repair_bio([t for t, k in zip(tags, keep) if k])
        clean_tags = _repair_bio([t for t, k in zip(clean_tags, keep) if k])

    return Instance(
        id=inst.id,
        tokens=tuple(tokens),
        intent=intent,
        slots=tuple(tags),
        source=inst.source,
        clean=CleanLabels(intent=clean_intent, slots=tuple(clean_tags)),
    )


@dataclass(frozen=True)
class DatasetSizes:
    """Split sizes for the synthetic benchmark."""

    n_train: int = 2000
    n_dev: int = 500
    n_test: int = 1000
    gen_copies: int = 1

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "n_test": self.n_test,
            "gen_copies": self.gen_copies,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSizes:
        return cls(**d)


def build_augmented_corpora(
    grammar: TaskGrammar,
    translator: PseudoTranslator,
    trans_profile: NoiseProfile,
    gen_profile: NoiseProfile,
    sizes: DatasetSizes,
    seed: int,
) -> dict[str, Corpus]:
    """Assemble the full benchmark: src, trans, gen, dev, dev_tgt, test.

    ``trans`` applies translation noise to the clean target-train pool;
    ``gen`` corrupts ``gen_copies`` freshly drawn clean target pools under the
    (strictly noisier) generation profile, so the generated corpus contributes
    new utterances rather than re-corrupted duplicates, the way a generator
    adds diversity on top of translation. ``test`` and both dev sets stay
    gold-labeled.
    """
    if gen_profile.p_intent_flip <= trans_profile.p_intent_flip:
        raise ValueError("generation profile must flip intents strictly more often than translation")
    schema = grammar.schema()
    src, dev, target_train, test = generate_clean_dataset(
        grammar, sizes.n_train, sizes.n_dev, sizes.n_test, seed, translator
    )

    dev_tgt_pool = _sample_corpus(grammar, schema, sizes.n_dev, seed, _STREAM_DEVTGT, "dev_tgt", Source.TRANS)
    dev_tgt = Corpus(
        schema=schema,
        instances=tuple(
            pseudo_translate(inst, translator, [seed, _STREAM_DEVTGT_XLATE, i])
            for i, inst in enumerate(dev_tgt_pool.instances)
        ),
        name="dev_tgt",
    )

    pool = translator.target_vocabulary()
    trans_instances = tuple(
        replace(
            inject_noise(inst, trans_profile, schema, [seed, _STREAM_TRANS_NOISE, i], pool),
            id=f"trans-{i:05d}",
        )
        for i, inst in enumerate(target_train.instances)
    )
    trans = Corpus(schema=schema, instances=trans_instances, name="trans")

    gen_instances: list[Instance] = []
    for copy in range(sizes.gen_copies):
        for i in range(sizes.n_train):
            clean = sample_instance(
                grammar,
                np.random.default_rng([seed, _STREAM_GEN, copy, i]),
                f"gen-{copy}-{i:05d}",
                Source.GEN,
            )
            clean = pseudo_translate(clean, translator, [seed, _STREAM_GEN_XLATE, copy, i])
            gen_instances.append(
                inject_noise(clean, gen_profile, schema, [seed, _STREAM_GEN_NOISE, copy, i], pool)
            )
    gen = Corpus(schema=schema, instances=tuple(gen_instances), name="gen")

    return {"src": src, "trans": trans, "gen": gen, "dev": dev, "dev_tgt": dev_tgt, "test": test}


# ---------------------------------------------------------------------------
# Default benchmark grammar: 8 intents, 6 slot types, 40 templates, ~300
# surface tokens. Small enough for minutes-scale CPU training, varied enough
# that slot F1 does not saturate instantly.
# ---------------------------------------------------------------------------


def default_grammar() -> TaskGrammar:
    lex: dict[str, tuple[tuple[str, ...], ...]] = {
        "artist": (
            ("nova", "quinn"), ("ella", "marsh"), ("the", "midnight", "owls"),
            ("ray", "colt"), ("mira", "voss"), ("django",), ("selda",),
            ("the", "copper", "foxes"), ("juno", "pike"), ("omar", "reyes"),
            ("lena", "hart"), ("the", "paper", "kites"), ("basil",),
            ("tove",), ("arlo", "finn"), ("june", "belle"), ("kasper",),
            ("rosa", "lindt"), ("the", "gray", "herons"), ("ida", "sol"),
        ),
        "genre": (
            ("jazz",), ("rock",), ("indie",), ("techno",), ("classical",),
            ("blues",), ("folk",), ("metal",), ("disco",), ("reggae",),
            ("soul",), ("punk",), ("opera",), ("ambient",), ("country",),
            ("funk",), ("hip", "hop"), ("drum", "and", "bass"), ("salsa",), ("lofi",),
        ),
        "time": (
            ("tonight",), ("tomorrow",), ("monday",), ("next", "friday"),
            ("this", "evening"), ("seven", "pm"), ("early", "morning"),
            ("noon",), ("midnight",), ("in", "an", "hour"), ("sunday", "afternoon"),
            ("half", "past", "nine"), ("eight", "thirty"), ("the", "weekend"),
            ("april", "first"), ("tuesday", "night"), ("six", "am"),
            ("later", "today"), ("next", "week"), ("thursday",),
        ),
        "location": (
            ("paris",), ("berlin",), ("tokyo",), ("new", "york"),
            ("san", "francisco"), ("london",), ("sydney",), ("downtown",),
            ("the", "city", "center"), ("oslo",), ("madrid",), ("cape", "town"),
            ("rome",), ("lisbon",), ("chicago",), ("boston",), ("denver",),
            ("amsterdam",), ("the", "east", "side"), ("prague",),
        ),
        "contact": (
            ("alice",), ("bob",), ("carla",), ("david",), ("emma",),
            ("frank",), ("grace",), ("henry",), ("isabel",), ("jack",),
            ("my", "mom"), ("my", "boss"), ("uncle", "joe"), ("doctor", "smith"),
            ("aunt", "mary"), ("the", "team"), ("kate",), ("liam",),
            ("nora",), ("oscar",),
        ),
        "cuisine": (
            ("italian",), ("thai",), ("mexican",), ("sushi",), ("indian",),
            ("french",), ("greek",), ("korean",), ("vegan",), ("chinese",),
            ("turkish",), ("spanish",), ("lebanese",), ("ethiopian",),
            ("barbecue",), ("seafood",), ("ramen",), ("burger",), ("pizza",), ("tapas",),
        ),
    }

    templates: tuple[tuple[str, tuple[str, ...]], ...] = (
        ("play_music", ("please", "play", "some", "{genre}", "music")),
        ("play_music", ("play", "{artist}", "for", "me")),
        ("play_music", ("i", "want", "to", "hear", "{genre}", "songs", "by", "{artist}")),
        ("play_music", ("put", "on", "{artist}")),
        ("play_music", ("start", "the", "{genre}", "playlist")),
        ("get_weather", ("what", "is", "the", "weather", "in", "{location}")),
        ("get_weather", ("will", "it", "rain", "in", "{location}", "{time}")),
        ("get_weather", ("forecast", "for", "{location}", "please")),
        ("get_weather", ("how", "cold", "is", "it", "{time}", "in", "{location}")),
        ("get_weather", ("tell", "me", "the", "weather", "{time}")),
        ("set_alarm", ("set", "an", "alarm", "for", "{time}")),
        ("set_alarm", ("wake", "me", "up", "{time}")),
        ("set_alarm", ("create", "an", "alarm", "at", "{time}")),
        ("set_alarm", ("i", "need", "an", "alarm", "{time}", "please")),
        ("set_alarm", ("schedule", "a", "wake", "up", "call", "for", "{time}")),
        ("book_restaurant", ("book", "a", "{cuisine}", "restaurant", "in", "{location}")),
        ("book_restaurant", ("reserve", "a", "table", "for", "{time}")),
        ("book_restaurant", ("find", "me", "a", "{cuisine}", "place", "near", "{location}")),
        ("book_restaurant", ("i", "want", "to", "eat", "{cuisine}", "food", "{time}")),
        ("book_restaurant", ("table", "for", "two", "at", "a", "{cuisine}", "spot", "in", "{location}")),
        ("send_message", ("send", "a", "message", "to", "{contact}")),
        ("send_message", ("text", "{contact}", "that", "i", "am", "late")),
        ("send_message", ("write", "to", "{contact}", "now")),
        ("send_message", ("message", "{contact}", "about", "dinner")),
        ("send_message", ("tell", "{contact}", "i", "will", "call", "back")),
        ("get_news", ("give", "me", "the", "{genre}", "news")),
        ("get_news", ("what", "is", "happening", "in", "{location}")),
        ("get_news", ("latest", "{genre}", "headlines", "please")),
        ("get_news", ("news", "update", "for", "{time}")),
        ("get_news", ("read", "me", "{genre}", "news", "from", "{location}")),
        ("add_reminder", ("remind", "me", "to", "call", "{contact}", "{time}")),
        ("add_reminder", ("add", "a", "reminder", "for", "{time}")),
        ("add_reminder", ("set", "a", "reminder", "about", "the", "meeting", "{time}")),
        ("add_reminder", ("remind", "me", "{time}", "to", "water", "the", "plants")),
        ("add_reminder", ("new", "reminder", "for", "{time}", "please")),
        ("find_event", ("find", "a", "{genre}", "concert", "in", "{location}")),
        ("find_event", ("any", "events", "in", "{location}", "{time}")),
        ("find_event", ("search", "for", "{genre}", "shows", "{time}")),
        ("find_event", ("what", "concerts", "are", "near", "{location}")),
        ("find_event", ("look", "up", "{genre}", "festivals", "in", "{location}", "{time}")),
    )

    carrier = (
        "maybe", "really", "quickly", "soon", "again", "just", "kindly",
        "perhaps", "directly", "right", "away", "once", "more", "could",
        "you", "simply", "actually", "somewhere", "anything", "everything",
        "nothing", "always", "never", "often", "sometimes", "exactly",
        "roughly", "around", "about", "nearly", "almost", "quite", "very",
        "super", "extra", "little", "bit", "while", "before", "after",
    )

    return TaskGrammar(templates=templates, slot_lexicons=lex, carrier_vocab=carrier)
