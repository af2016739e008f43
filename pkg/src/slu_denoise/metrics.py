"""Evaluation: span-level slot F1, intent/exact-match accuracy, relabel
diagnostics against hidden clean labels, and run statistics.

Slot F1 is micro-averaged over typed spans pooled across the corpus; a
predicted span counts only on an exact type-and-boundary match. Invalid
predicted BIO is repaired the conlleval way: an I-tag that does not continue
a span of the same type opens a new span.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .data_model import OUTSIDE_TAG, Corpus, Instance, Source
from .encoder import ModelParams, Vocab, ensemble_predict

Span = tuple[str, int, int]  # (type, start, end_exclusive)


def bio_spans(tags: Sequence[str]) -> list[Span]:
    """Extract typed spans, repairing orphan I-tags as span starts."""
    spans: list[Span] = []
    start: int | None = None
    cur: str | None = None
    for i, tag in enumerate(tags):
        if tag == OUTSIDE_TAG:
            if start is not None:
                spans.append((cur, start, i))
                start, cur = None, None
            continue
        prefix, label = tag.split("-", 1)
        if prefix == "B" or cur != label:
            if start is not None:
                spans.append((cur, start, i))
            start, cur = i, label
    if start is not None:
        spans.append((cur, start, len(tags)))
    return spans


def spans_to_tags(spans: Sequence[Span], length: int) -> list[str]:
    """Rebuild a BIO sequence from non-overlapping spans."""
    tags = [OUTSIDE_TAG] * length
    for label, start, end in spans:
        tags[start] = f"B-{label}"
        for i in range(start + 1, end):
            tags[i] = f"I-{label}"
    return tags


def _span_counts(
    pred_seqs: Sequence[Sequence[str]], gold_seqs: Sequence[Sequence[str]]
) -> tuple[int, int, int]:
    if len(pred_seqs) != len(gold_seqs):
        raise ValueError(f"{len(pred_seqs)} predictions vs {len(gold_seqs)} gold sequences")
    tp = fp = fn = 0
    for pred, gold in zip(pred_seqs, gold_seqs):
        if len(pred) != len(gold):
            raise ValueError(f"tag sequence length mismatch: {len(pred)} vs {len(gold)}")
        p_set = set(bio_spans(pred))
        g_set = set(bio_spans(gold))
        tp += len(p_set & g_set)
        fp += len(p_set - g_set)
        fn += len(g_set - p_set)
    return tp, fp, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def span_f1(
    pred_seqs: Sequence[Sequence[str]], gold_seqs: Sequence[Sequence[str]]
) -> tuple[float, float, float]:
    """Micro-averaged (precision, recall, F1) over pooled span counts."""
    return _prf(*_span_counts(pred_seqs, gold_seqs))


def intent_accuracy(pred_intents: Sequence[str], gold_intents: Sequence[str]) -> float:
    if len(pred_intents) != len(gold_intents):
        raise ValueError(f"{len(pred_intents)} predictions vs {len(gold_intents)} gold intents")
    if not gold_intents:
        raise ValueError("empty evaluation set")
    hits = sum(p == g for p, g in zip(pred_intents, gold_intents))
    return hits / len(gold_intents)


def exact_match_accuracy(
    preds: Sequence[tuple[str, Sequence[str]]], golds: Sequence[tuple[str, Sequence[str]]]
) -> float:
    """Fraction of instances with the intent and the full tag sequence correct."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} gold instances")
    if not golds:
        raise ValueError("empty evaluation set")
    hits = 0
    for (p_intent, p_tags), (g_intent, g_tags) in zip(preds, golds):
        if p_intent == g_intent and tuple(p_tags) == tuple(g_tags):
            hits += 1
    return hits / len(golds)


@dataclass(frozen=True)
class EvalResult:
    slot_precision: float
    slot_recall: float
    slot_f1: float
    intent_accuracy: float
    exact_match: float
    tp_spans: int
    fp_spans: int
    fn_spans: int
    n_instances: int

    def to_dict(self) -> dict:
        return {
            "slot_precision": self.slot_precision,
            "slot_recall": self.slot_recall,
            "slot_f1": self.slot_f1,
            "intent_accuracy": self.intent_accuracy,
            "exact_match": self.exact_match,
            "tp_spans": self.tp_spans,
            "fp_spans": self.fp_spans,
            "fn_spans": self.fn_spans,
            "n_instances": self.n_instances,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvalResult:
        return cls(**d)


def evaluate_ensemble(models: Sequence[ModelParams], vocab: Vocab, corpus: Corpus) -> EvalResult:
    """Score the mean-of-models prediction on a gold-labeled corpus."""
    schema = corpus.schema
    pred_pairs: list[tuple[str, tuple[str, ...]]] = []
    gold_pairs: list[tuple[str, tuple[str, ...]]] = []
    for inst in corpus:
        pred = ensemble_predict(models, vocab.encode(inst.tokens))
        intent = schema.intents[int(np.argmax(pred.intent_dist))]
        tags = tuple(schema.slot_tags[int(i)] for i in np.argmax(pred.slot_dists, axis=1))
        pred_pairs.append((intent, tags))
        gold_pairs.append((inst.intent_label(schema), inst.slot_tag_strings(schema)))

    tp, fp, fn = _span_counts([p for _, p in pred_pairs], [g for _, g in gold_pairs])
    precision, recall, f1 = _prf(tp, fp, fn)
    return EvalResult(
        slot_precision=precision,
        slot_recall=recall,
        slot_f1=f1,
        intent_accuracy=intent_accuracy([i for i, _ in pred_pairs], [i for i, _ in gold_pairs]),
        exact_match=exact_match_accuracy(pred_pairs, gold_pairs),
        tp_spans=tp,
        fp_spans=fp,
        fn_spans=fn,
        n_instances=len(corpus),
    )


@dataclass(frozen=True)
class RelabelDiagnostics:
    """How relabeling changed the augmented corpora, measured via argmax labels
    and the hidden clean labels."""

    intent_modified_frac: float
    slot_modified_frac: float
    label_error_before: float
    label_error_after: float
    intent_error_before: float
    intent_error_after: float
    slot_error_before: float
    slot_error_after: float
    modification_counts: dict[str, int]
    n_instances: int

    def to_dict(self) -> dict:
        return {
            "intent_modified_frac": self.intent_modified_frac,
            "slot_modified_frac": self.slot_modified_frac,
            "label_error_before": self.label_error_before,
            "label_error_after": self.label_error_after,
            "intent_error_before": self.intent_error_before,
            "intent_error_after": self.intent_error_after,
            "slot_error_before": self.slot_error_before,
            "slot_error_after": self.slot_error_after,
            "modification_counts": dict(self.modification_counts),
            "n_instances": self.n_instances,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RelabelDiagnostics:
        return cls(**d)


def _classify_modifications(before: Sequence[Span], after: Sequence[Span]) -> list[str]:
    """Bucket span-level changes: type only, boundaries only, or both.

    Spans are matched greedily by overlap; added or removed spans count as
    boundary changes.
    """
    buckets: list[str] = []
    after_left = list(after)
    for b_label, b_start, b_end in before:
        match = None
        for a in after_left:
            a_label, a_start, a_end = a
            if a_start < b_end and b_start < a_end:  # overlap
                match = a
                break
        if match is None:
            buckets.append("boundary")
            continue
        after_left.remove(match)
        a_label, a_start, a_end = match
        same_type = a_label == b_label
        same_bounds = (a_start, a_end) == (b_start, b_end)
        if same_type and same_bounds:
            continue
        if same_type:
            buckets.append("boundary")
        elif same_bounds:
            buckets.append("slot")
        else:
            buckets.append("slot_boundary")
    buckets.extend("boundary" for _ in after_left)  # spans created by relabeling
    return buckets


def relabel_diagnostics(corpus_after: Corpus, corpus_before: Corpus) -> RelabelDiagnostics:
    """Compare relabeled vs original augmented corpora, id-aligned.

    Considers only instances whose source is not SRC; every compared instance
    must carry clean labels.
    """
    if {i.id for i in corpus_after} != {i.id for i in corpus_before}:
        raise ValueError("corpora do not contain the same instance ids")
    schema = corpus_after.schema
    before_by_id = corpus_before.by_id

    n = 0
    intent_modified = 0
    slot_modified = 0
    intent_wrong_before = intent_wrong_after = 0
    token_total = 0
    slot_wrong_before = slot_wrong_after = 0
    counts = {"intent": 0, "slot": 0, "boundary": 0, "slot_boundary": 0}

    for after in corpus_after:
        if after.source == Source.SRC:
            continue
        before = before_by_id[after.id]
        clean = before.clean or after.clean
        if clean is None:
            raise ValueError(f"instance '{after.id}' has no clean labels")
        n += 1

        before_intent = before.intent_label(schema)
        after_intent = after.intent_label(schema)
        before_tags = before.slot_tag_strings(schema)
        after_tags = after.slot_tag_strings(schema)
        if len(before_tags) != len(after_tags):
            raise ValueError(f"instance '{after.id}' changed length")

        if before_intent != after_intent:
            intent_modified += 1
            counts["intent"] += 1
        if before_tags != after_tags:
            slot_modified += 1
            for bucket in _classify_modifications(bio_spans(before_tags), bio_spans(after_tags)):
                counts[bucket] += 1

        intent_wrong_before += before_intent != clean.intent
        intent_wrong_after += after_intent != clean.intent
        token_total += len(after_tags)
        slot_wrong_before += sum(b != c for b, c in zip(before_tags, clean.slots))
        slot_wrong_after += sum(a != c for a, c in zip(after_tags, clean.slots))

    if n == 0:
        raise ValueError("no augmented (non-source) instances to compare")

    labels_total = n + token_total
    return RelabelDiagnostics(
        intent_modified_frac=intent_modified / n,
        slot_modified_frac=slot_modified / n,
        label_error_before=(intent_wrong_before + slot_wrong_before) / labels_total,
        label_error_after=(intent_wrong_after + slot_wrong_after) / labels_total,
        intent_error_before=intent_wrong_before / n,
        intent_error_after=intent_wrong_after / n,
        slot_error_before=slot_wrong_before / token_total,
        slot_error_after=slot_wrong_after / token_total,
        modification_counts=counts,
        n_instances=n,
    )


class PairedStats(NamedTuple):
    mean_a: float
    stdev_a: float
    mean_b: float
    stdev_b: float
    t: float
    p: float


def paired_stats(sample_a: Sequence[float], sample_b: Sequence[float]) -> PairedStats:
    """Means/stdevs of two run samples plus a two-sided Welch t-test.

    Reported stdevs use the n denominator (matching how multi-run tables in
    the literature are usually produced); the t-test itself uses the standard
    unbiased variances. Two constant, equal samples get t=0, p=1.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two values per sample")

    mean_a, mean_b = float(a.mean()), float(b.mean())
    stdev_a, stdev_b = float(a.std()), float(b.std())

    if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
        if mean_a == mean_b:
            return PairedStats(mean_a, stdev_a, mean_b, stdev_b, 0.0, 1.0)
        t = float("inf") if mean_a > mean_b else float("-inf")
        return PairedStats(mean_a, stdev_a, mean_b, stdev_b, t, 0.0)

    t, p = _scipy_stats.ttest_ind(a, b, equal_var=False)
    return PairedStats(mean_a, stdev_a, mean_b, stdev_b, float(t), float(p))


def pooled_stdev(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Classical pooled sample standard deviation of two groups."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two values per sample")
    num = (a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)
    return float(np.sqrt(num / (a.size + b.size - 2)))
