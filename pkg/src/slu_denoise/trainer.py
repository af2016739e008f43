"""Two-stage denoising trainer over multiple noisy corpora, plus the optimizer.

Stage 1 (initialization, epochs 1..E): each of the K models trains on its own
assigned corpora with the plain joint cross-entropy on the stored labels,
shuffling independently.

Stage 2 (relabeling, epochs E+1..E_all): all models walk one shared shuffle of
the union corpus. Within a batch every quantity — per-model losses, the
small-loss selection, uncertainties and weights, and each model's gradients —
is computed from the models as they stood at batch start, so the K parameter
updates commute and their order is irrelevant. After all updates, the batch is
re-predicted with the updated models and the stored labels of non-exempt
instances are overwritten with the ensemble-mean distributions, taking effect
the next time each instance is visited.

Determinism contract (tests and reproducibility rely on it): model k is
initialized from rng([seed, 201, k]); the stage-1 shuffle for (epoch e, model
k) comes from rng([seed, 101, e, k]); the stage-2 union shuffle for epoch e
comes from rng([seed, 101, e, 0]). Every epoch draws fresh generators, so
results are independent of scheduling. Batch updates average the per-instance
gradients of the kept subset.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence, TypeVar

import numpy as np

from .data_model import Corpus, Instance, LabelSchema, SoftLabels
from .encoder import (
    Gradients,
    ModelParams,
    Prediction,
    Vocab,
    backward,
    build_vocab,
    forward,
    init_params,
    load_tensors,
    save_params,
    save_tensors,
    zero_gradients,
)
from .losses import cross_entropy_grads, ensemble_relabel, instance_report, joint_cross_entropy
from .metrics import EvalResult, evaluate_ensemble

logger = logging.getLogger(__name__)

_SEED_SHUFFLE = 101
_SEED_INIT = 201

T = TypeVar("T")


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears; message carries the location."""


def default_assignment(n_models: int) -> tuple[tuple[str, ...], ...]:
    """Per-model initialization corpora.

    One model sees everything; with two, the first skips the noisier
    generated corpus; with three, the translation-only / generation-only /
    combined split. Extra models beyond three see everything.
    """
    if n_models == 1:
        return (("src", "trans", "gen"),)
    if n_models == 2:
        return (("src", "trans"), ("src", "trans", "gen"))
    base = (("src", "trans"), ("src", "gen"), ("src", "trans", "gen"))
    return base + tuple(("src", "trans", "gen") for _ in range(n_models - 3))


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run (besides the corpora)."""

    n_models: int = 2
    init_epochs: int = 3          # epochs before any relabeling/filtering
    total_epochs: int = 8
    batch_size: int = 64
    delta_max: float = 0.3        # peak filtering rate
    delta_ramp_epochs: int = 2    # relabel epochs to reach delta_max linearly
    learning_rate: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    embedding_dim: int = 32
    corpus_assignment: tuple[tuple[str, ...], ...] | None = None
    relabel_exempt: tuple[str, ...] = ("src",)
    relabel: bool = True
    reweight: bool = True
    relabel_scope: str = "batch"  # or "epoch": rewrite the whole corpus at epoch end
    dev_selection: bool = False
    dev_corpus: str = "dev"
    dev_metric: str = "exact_match"
    update_order: tuple[int, ...] | None = None  # override model update order (testing)

    def __post_init__(self) -> None:
        if self.n_models < 1:
            raise ValueError("n_models must be >= 1")
        if not 0 <= self.init_epochs <= self.total_epochs:
            raise ValueError("need 0 <= init_epochs <= total_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.delta_max < 1.0:
            raise ValueError("delta_max must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.relabel_scope not in ("batch", "epoch"):
            raise ValueError("relabel_scope must be 'batch' or 'epoch'")
        if self.corpus_assignment is not None:
            object.__setattr__(
                self, "corpus_assignment", tuple(tuple(a) for a in self.corpus_assignment)
            )
            if len(self.corpus_assignment) != self.n_models:
                raise ValueError("corpus_assignment must list corpora for every model")
        object.__setattr__(self, "relabel_exempt", tuple(self.relabel_exempt))
        if self.update_order is not None:
            object.__setattr__(self, "update_order", tuple(self.update_order))
            if sorted(self.update_order) != list(range(self.n_models)):
                raise ValueError("update_order must be a permutation of the model indices")

    def assignment(self) -> tuple[tuple[str, ...], ...]:
        return self.corpus_assignment or default_assignment(self.n_models)

    def union_names(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(name for group in self.assignment() for name in group))

    def delta_at(self, relabel_epoch: int) -> float:
        """Filtering rate for the r-th relabeling epoch (r >= 1), linear ramp."""
        if self.delta_max == 0.0:
            return 0.0
        if self.delta_ramp_epochs <= 0:
            return self.delta_max
        return self.delta_max * min(1.0, relabel_epoch / self.delta_ramp_epochs)

    def to_dict(self) -> dict:
        return {
            "n_models": self.n_models,
            "init_epochs": self.init_epochs,
            "total_epochs": self.total_epochs,
            "batch_size": self.batch_size,
            "delta_max": self.delta_max,
            "delta_ramp_epochs": self.delta_ramp_epochs,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "embedding_dim": self.embedding_dim,
            "corpus_assignment": (
                None if self.corpus_assignment is None else [list(a) for a in self.corpus_assignment]
            ),
            "relabel_exempt": list(self.relabel_exempt),
            "relabel": self.relabel,
            "reweight": self.reweight,
            "relabel_scope": self.relabel_scope,
            "dev_selection": self.dev_selection,
            "dev_corpus": self.dev_corpus,
            "dev_metric": self.dev_metric,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if d.get("corpus_assignment") is not None:
            d["corpus_assignment"] = tuple(tuple(a) for a in d["corpus_assignment"])
        if "relabel_exempt" in d:
            d["relabel_exempt"] = tuple(d["relabel_exempt"])
        return cls(**d)


# ---------------------------------------------------------------------------
# Optimizer (Adam with optional decoupled weight decay)
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> OptimizerState:
        return cls(
            m={k: np.zeros_like(t) for k, t in params.tensors().items()},
            v={k: np.zeros_like(t) for k, t in params.tensors().items()},
        )


def optimizer_step(
    params: ModelParams, grads: Gradients, state: OptimizerState, config: TrainConfig
) -> tuple[ModelParams, OptimizerState]:
    """One Adam update with bias correction, applied in place.

    Non-finite gradients are reported and the step is skipped. With
    weight_decay > 0 the decay is applied decoupled from the adaptive update.
    """
    grad_tensors = grads.tensors()
    for name, g in grad_tensors.items():
        if not np.all(np.isfinite(g)):
            logger.warning("non-finite gradient in %s at step %d; step skipped", name, state.step + 1)
            return params, state

    state.step += 1
    t = state.step
    bc1 = 1.0 - config.adam_beta1**t
    bc2 = 1.0 - config.adam_beta2**t
    for name, theta in params.tensors().items():
        g = grad_tensors[name]
        m, v = state.m[name], state.v[name]
        m *= config.adam_beta1
        m += (1.0 - config.adam_beta1) * g
        v *= config.adam_beta2
        v += (1.0 - config.adam_beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)
        if config.weight_decay > 0.0:
            update = update + config.weight_decay * theta
        theta -= config.learning_rate * update
    return params, state


# ---------------------------------------------------------------------------
# Small-loss selection
# ---------------------------------------------------------------------------


def keep_count(batch_size: int, delta: float) -> int:
    """ceil((1 - delta) * batch_size), guarding against binary drift of
    decimal rates (so delta=0.3 on 10 keeps 7, not 8)."""
    return math.ceil((1.0 - delta) * batch_size - 1e-9)


def select_small_loss(batch: Sequence[T], losses: Sequence[float], delta: float) -> list[T]:
    """Keep the ceil((1-delta)*|batch|) items with the smallest losses.

    Ties break toward earlier batch positions and the kept items come back in
    their original order, so delta=0 is the identity.
    """
    if len(batch) != len(losses):
        raise ValueError(f"batch size {len(batch)} != losses size {len(losses)}")
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    arr = np.asarray(losses, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("losses must be finite")
    n_keep = keep_count(len(batch), delta)
    order = np.argsort(arr, kind="stable")
    kept = sorted(int(i) for i in order[:n_keep])
    return [batch[i] for i in kept]


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    stage: str  # "init" or "relabel"
    delta: float
    mean_loss: tuple[float, ...]      # per model
    filtered_frac: float
    mean_weight: float
    relabel_changed_frac: float       # argmax intent or any slot argmax changed
    intent_changed_frac: float
    slot_changed_frac: float
    metrics: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "stage": self.stage,
            "delta": self.delta,
            "mean_loss": list(self.mean_loss),
            "filtered_frac": self.filtered_frac,
            "mean_weight": self.mean_weight,
            "relabel_changed_frac": self.relabel_changed_frac,
            "intent_changed_frac": self.intent_changed_frac,
            "slot_changed_frac": self.slot_changed_frac,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EpochReport:
        d = dict(d)
        d["mean_loss"] = tuple(d["mean_loss"])
        return cls(**d)


@dataclass
class TrainResult:
    models: list[ModelParams]
    opt_states: list[OptimizerState]
    reports: list[EpochReport]
    relabeled: dict[str, Corpus]
    vocab: Vocab
    best_epoch: int | None = None


class _TrainTable:
    """Pre-encoded union corpus with the mutable label state."""

    def __init__(self, corpora: Mapping[str, Corpus], union_names: Sequence[str], vocab: Vocab):
        self.schema: LabelSchema = corpora[union_names[0]].schema
        self.corpus_of: list[str] = []
        self.instances: list[Instance] = []
        self.ids: list[np.ndarray] = []
        self.sources: list[str] = []
        self.labels: list[SoftLabels] = []
        self.modified: list[bool] = []
        for name in union_names:
            for inst in corpora[name]:
                self.corpus_of.append(name)
                self.instances.append(inst)
                self.ids.append(vocab.encode(inst.tokens))
                self.sources.append(inst.source.value)
                self.labels.append(
                    SoftLabels(
                        intent_dist=inst.intent_dist(self.schema),
                        slot_dists=inst.slot_dists(self.schema),
                    )
                )
                self.modified.append(False)

    def __len__(self) -> int:
        return len(self.instances)

    def model_indices(self, assigned: Sequence[str]) -> np.ndarray:
        wanted = set(assigned)
        return np.array([j for j, name in enumerate(self.corpus_of) if name in wanted], dtype=np.int64)

    def relabeled_corpora(self, union_names: Sequence[str]) -> dict[str, Corpus]:
        grouped: dict[str, list[Instance]] = {name: [] for name in union_names}
        for j, inst in enumerate(self.instances):
            if self.modified[j]:
                inst = Instance(
                    id=inst.id,
                    tokens=inst.tokens,
                    intent=self.labels[j].intent_dist,
                    slots=self.labels[j].slot_dists,
                    source=inst.source,
                    clean=inst.clean,
                )
            grouped[self.corpus_of[j]].append(inst)
        return {
            name: Corpus(schema=self.schema, instances=tuple(insts), name=name)
            for name, insts in grouped.items()
        }


def _mean_gradients(
    model: ModelParams,
    entries: Sequence[tuple[np.ndarray, Prediction, SoftLabels, float]],
) -> Gradients:
    """Average of per-instance weighted cross-entropy gradients."""
    acc = zero_gradients(model)
    acc_tensors = acc.tensors()
    for token_ids, pred, labels, weight in entries:
        d_intent, d_slots = cross_entropy_grads(pred, labels, weight)
        g = backward(model, token_ids, pred, d_intent, d_slots)
        for name, tensor in g.tensors().items():
            acc_tensors[name] += tensor
    inv = 1.0 / len(entries)
    for tensor in acc_tensors.values():
        tensor *= inv
    return acc


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[s : s + batch_size] for s in range(0, len(order), batch_size)]


def train_denoise(
    corpora: Mapping[str, Corpus],
    config: TrainConfig,
    eval_corpora: Mapping[str, Corpus] | None = None,
) -> TrainResult:
    """Run the full two-stage procedure; see the module docstring.

    ``corpora`` must contain every name in the corpus assignment;
    ``eval_corpora`` are scored with the ensemble after every epoch and land
    in the epoch reports. Raises TrainingDiverged on non-finite losses.
    """
    assignment = config.assignment()
    missing = [n for group in assignment for n in group if n not in corpora]
    if missing:
        raise ValueError(f"assignment references unknown corpora: {sorted(set(missing))}")
    union_names = config.union_names()
    eval_corpora = dict(eval_corpora or {})

    schema = corpora[union_names[0]].schema
    for name in union_names:
        if corpora[name].schema != schema:
            raise ValueError(f"corpus '{name}' does not share the training schema")

    vocab = build_vocab([corpora[n] for n in union_names])
    table = _TrainTable(corpora, union_names, vocab)
    exempt = set(config.relabel_exempt)
    n_relabelable = sum(1 for s in table.sources if s not in exempt)

    k_models = config.n_models
    models = [
        init_params(len(vocab), config.embedding_dim, schema, [config.seed, _SEED_INIT, k])
        for k in range(k_models)
    ]
    states = [OptimizerState.for_params(m) for m in models]
    model_idx = [table.model_indices(assignment[k]) for k in range(k_models)]
    for k, idx in enumerate(model_idx):
        if len(idx) == 0:
            raise ValueError(f"model {k} has an empty training assignment")

    reports: list[EpochReport] = []
    best: tuple[float, int, list[ModelParams]] | None = None

    def epoch_metrics() -> dict[str, dict[str, float]]:
        return {
            name: evaluate_ensemble(models, vocab, corpus).to_dict()
            for name, corpus in eval_corpora.items()
        }

    def note_best(epoch: int, metrics: dict[str, dict[str, float]]) -> None:
        nonlocal best
        if not config.dev_selection or config.dev_corpus not in metrics:
            return
        score = metrics[config.dev_corpus][config.dev_metric]
        if best is None or score > best[0]:
            best = (score, epoch, [m.copy() for m in models])

    # Stage 1: per-model corpora, plain cross-entropy on the stored labels.
    for epoch in range(1, config.init_epochs + 1):
        loss_sums = [0.0] * k_models
        for k in range(k_models):
            order = np.random.default_rng([config.seed, _SEED_SHUFFLE, epoch, k]).permutation(
                model_idx[k]
            )
            for batch in _batches(order, config.batch_size):
                entries = []
                for j in batch:
                    pred = forward(models[k], table.ids[j])
                    loss = joint_cross_entropy(pred, table.labels[j])
                    if not math.isfinite(loss):
                        raise TrainingDiverged(
                            f"non-finite loss at init epoch {epoch}, model {k}, instance"
                            f" '{table.instances[j].id}'"
                        )
                    loss_sums[k] += loss
                    entries.append((table.ids[j], pred, table.labels[j], 1.0))
                optimizer_step(models[k], _mean_gradients(models[k], entries), states[k], config)
        metrics = epoch_metrics()
        note_best(epoch, metrics)
        reports.append(
            EpochReport(
                epoch=epoch,
                stage="init",
                delta=0.0,
                mean_loss=tuple(loss_sums[k] / len(model_idx[k]) for k in range(k_models)),
                filtered_frac=0.0,
                mean_weight=1.0,
                relabel_changed_frac=0.0,
                intent_changed_frac=0.0,
                slot_changed_frac=0.0,
                metrics=metrics,
            )
        )

    # Stage 2: shared shuffle, co-training selection, re-weighting, relabeling.
    update_order = config.update_order or tuple(range(k_models))
    for epoch in range(config.init_epochs + 1, config.total_epochs + 1):
        delta = config.delta_at(epoch - config.init_epochs)
        order = np.random.default_rng([config.seed, _SEED_SHUFFLE, epoch, 0]).permutation(len(table))
        loss_sums = [0.0] * k_models
        weight_sum = 0.0
        seen = 0
        kept_total = 0
        changed = intent_changed = slot_changed = 0

        def overwrite(j: int, preds_j: list[Prediction]) -> None:
            nonlocal changed, intent_changed, slot_changed
            new_labels = ensemble_relabel(preds_j)
            old = table.labels[j]
            intent_moved = int(np.argmax(old.intent_dist)) != int(np.argmax(new_labels.intent_dist))
            slots_moved = not np.array_equal(
                np.argmax(old.slot_dists, axis=1), np.argmax(new_labels.slot_dists, axis=1)
            )
            changed += intent_moved or slots_moved
            intent_changed += intent_moved
            slot_changed += slots_moved
            table.labels[j] = new_labels
            table.modified[j] = True

        for batch in _batches(order, config.batch_size):
            # Snapshot pass: everything below uses batch-start parameters.
            preds = [[forward(models[k], table.ids[j]) for j in batch] for k in range(k_models)]
            batch_reports = [
                instance_report([preds[k][i] for k in range(k_models)], table.labels[j])
                for i, j in enumerate(batch)
            ]
            for i, rep in enumerate(batch_reports):
                if not math.isfinite(rep.loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, instance"
                        f" '{table.instances[batch[i]].id}':"
                        f" per-model losses {rep.per_model_losses}"
                    )
            for k in range(k_models):
                loss_sums[k] += sum(r.per_model_losses[k] for r in batch_reports)
            weights = [r.weight if config.reweight else 1.0 for r in batch_reports]
            weight_sum += sum(weights)
            seen += len(batch)

            grads: list[Gradients] = []
            for k in range(k_models):
                if k_models == 1:
                    sel_losses = [r.per_model_losses[0] for r in batch_reports]
                else:
                    sel_losses = [
                        sum(r.per_model_losses) - r.per_model_losses[k] for r in batch_reports
                    ]
                kept = select_small_loss(list(range(len(batch))), sel_losses, delta)
                kept_total += len(kept)
                entries = [
                    (table.ids[batch[i]], preds[k][i], table.labels[batch[i]], weights[i])
                    for i in kept
                ]
                grads.append(_mean_gradients(models[k], entries))

            for k in update_order:
                optimizer_step(models[k], grads[k], states[k], config)

            if config.relabel and config.relabel_scope == "batch":
                fresh = [[forward(models[k], table.ids[j]) for j in batch] for k in range(k_models)]
                for i, j in enumerate(batch):
                    if table.sources[j] in exempt:
                        continue
                    overwrite(j, [fresh[k][i] for k in range(k_models)])

        if config.relabel and config.relabel_scope == "epoch":
            for j in range(len(table)):
                if table.sources[j] in exempt:
                    continue
                overwrite(j, [forward(models[k], table.ids[j]) for k in range(k_models)])

        metrics = epoch_metrics()
        note_best(epoch, metrics)
        denom = max(1, n_relabelable)
        reports.append(
            EpochReport(
                epoch=epoch,
                stage="relabel",
                delta=delta,
                mean_loss=tuple(s / len(table) for s in loss_sums),
                filtered_frac=1.0 - kept_total / (seen * k_models),
                mean_weight=weight_sum / seen,
                relabel_changed_frac=changed / denom,
                intent_changed_frac=intent_changed / denom,
                slot_changed_frac=slot_changed / denom,
                metrics=metrics,
            )
        )

    best_epoch: int | None = None
    if best is not None:
        best_epoch = best[1]
        models = best[2]

    return TrainResult(
        models=models,
        opt_states=states,
        reports=reports,
        relabeled=table.relabeled_corpora(union_names),
        vocab=vocab,
        best_epoch=best_epoch,
    )


# ---------------------------------------------------------------------------
# Checkpoints: one model file per member, optimizer state, manifest, vocab.
# ---------------------------------------------------------------------------


def save_checkpoint(
    directory: str | Path,
    result: TrainResult,
    config: TrainConfig,
    schema: LabelSchema,
    extra_meta: dict | None = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "schema": schema.to_dict(),
        "n_models": len(result.models),
        "best_epoch": result.best_epoch,
        "meta": extra_meta or {},
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    (directory / "vocab.json").write_text(
        json.dumps({"tokens": list(result.vocab.tokens)}) + "\n", encoding="utf-8"
    )
    for k, model in enumerate(result.models):
        save_params(model, directory / f"model_{k}.bin", meta={"model": k})
    for k, state in enumerate(result.opt_states):
        tensors = {f"m_{name}": t for name, t in state.m.items()}
        tensors.update({f"v_{name}": t for name, t in state.v.items()})
        save_tensors(tensors, directory / f"optim_{k}.bin", meta={"step": state.step})


@dataclass
class CheckpointBundle:
    models: list[ModelParams]
    opt_states: list[OptimizerState]
    vocab: Vocab
    schema: LabelSchema
    config: TrainConfig
    manifest: dict


def load_checkpoint(directory: str | Path) -> CheckpointBundle:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    schema = LabelSchema.from_dict(manifest["schema"])
    config = TrainConfig.from_dict(manifest["config"])
    vocab = Vocab(tokens=tuple(json.loads((directory / "vocab.json").read_text())["tokens"]))
    models: list[ModelParams] = []
    opt_states: list[OptimizerState] = []
    for k in range(manifest["n_models"]):
        tensors, _ = load_tensors(directory / f"model_{k}.bin")
        models.append(ModelParams(**tensors))
        opt_tensors, meta = load_tensors(directory / f"optim_{k}.bin")
        opt_states.append(
            OptimizerState(
                m={n[2:]: t for n, t in opt_tensors.items() if n.startswith("m_")},
                v={n[2:]: t for n, t in opt_tensors.items() if n.startswith("v_")},
                step=int(meta["step"]),
            )
        )
    return CheckpointBundle(
        models=models, opt_states=opt_states, vocab=vocab, schema=schema, config=config, manifest=manifest
    )


def evaluate_checkpoint(directory: str | Path, corpus: Corpus) -> EvalResult:
    """Convenience: load a checkpoint and score its ensemble on a corpus."""
    bundle = load_checkpoint(directory)
    return evaluate_ensemble(bundle.models, bundle.vocab, corpus)
