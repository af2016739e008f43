"""Experiment runner: benchmark variants, sweeps, and deterministic reports.

A run directory is self-describing: ``run_manifest.json`` at the root, one
cell directory per (group, seed) holding that cell's manifest, per-epoch JSONL
log, final result, and checkpoints. ``emit_report`` rebuilds every CSV/table
purely from those files, so aggregate numbers are always recomputable, and all
emitted text is byte-deterministic (full-precision floats, sorted keys, no
timestamps).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import Corpus, Source, merge_corpora, save_corpus, save_schema
from .metrics import EvalResult, RelabelDiagnostics, evaluate_ensemble, paired_stats, relabel_diagnostics
from .synth_task import (
    GENERATION_NOISE,
    TRANSLATION_NOISE,
    DatasetSizes,
    NoiseProfile,
    TaskGrammar,
    build_augmented_corpora,
    default_grammar,
    load_grammar,
    make_translator,
    save_grammar,
)
from .trainer import EpochReport, TrainConfig, TrainResult, default_assignment, save_checkpoint, train_denoise

logger = logging.getLogger(__name__)

KNOWN_VARIANTS = (
    "baseline_en",
    "baseline_en_trans",
    "baseline_en_trans_gen",
    "denoise_full",
    "minus_gen",
    "minus_relabel",
    "minus_cotrain",
    "minus_reweight",
)

DEFAULT_BASELINE = "baseline_en_trans_gen"

SWEEP_PARAMS = ("delta_max", "n_models", "gen_copies")

_METRIC_COLUMNS = (
    "exact_match",
    "intent_accuracy",
    "slot_f1",
    "slot_precision",
    "slot_recall",
    "label_error_before",
    "label_error_after",
)


def apply_variant(name: str, base: TrainConfig) -> TrainConfig:
    """Specialize the base training config for one named run variant.

    Baselines train initialization-style for all epochs (no filtering, no
    relabeling, no re-weighting) and differ only in which corpora they see;
    the minus_* variants disable exactly one denoising component.
    """
    k = base.n_models
    if name == "baseline_en":
        return replace(
            base,
            corpus_assignment=tuple(("src",) for _ in range(k)),
            init_epochs=base.total_epochs,
        )
    if name == "baseline_en_trans":
        return replace(
            base,
            corpus_assignment=tuple(("src", "trans") for _ in range(k)),
            init_epochs=base.total_epochs,
        )
    if name == "baseline_en_trans_gen":
        return replace(base, corpus_assignment=default_assignment(k), init_epochs=base.total_epochs)
    if name == "denoise_full":
        return base
    if name == "minus_gen":
        assignment = tuple(
            tuple(n for n in group if n != "gen") for group in default_assignment(k)
        )
        return replace(base, corpus_assignment=assignment)
    if name == "minus_relabel":
        return replace(base, relabel=False)
    if name == "minus_cotrain":
        return replace(base, delta_max=0.0)
    if name == "minus_reweight":
        return replace(base, reweight=False)
    raise ValueError(f"unknown variant '{name}' (known: {', '.join(KNOWN_VARIANTS)})")


@dataclass(frozen=True)
class ExperimentConfig:
    grammar: TaskGrammar
    sizes: DatasetSizes = DatasetSizes()
    trans_noise: NoiseProfile = TRANSLATION_NOISE
    gen_noise: NoiseProfile = GENERATION_NOISE
    train: TrainConfig = TrainConfig()
    variants: tuple[str, ...] = (DEFAULT_BASELINE, "denoise_full")
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    permute_window: int = 1
    save_checkpoints: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if not self.seeds:
            raise ValueError("need at least one seed")
        unknown = [v for v in self.variants if v not in KNOWN_VARIANTS]
        if unknown:
            raise ValueError(f"unknown variants: {unknown}")

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes.to_dict(),
            "trans_noise": self.trans_noise.to_dict(),
            "gen_noise": self.gen_noise.to_dict(),
            "train": self.train.to_dict(),
            "variants": list(self.variants),
            "seeds": list(self.seeds),
            "permute_window": self.permute_window,
            "save_checkpoints": self.save_checkpoints,
        }

    @classmethod
    def default(cls) -> ExperimentConfig:
        return cls(grammar=default_grammar())


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON experiment config; omitted keys fall back to defaults."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    grammar_path = raw.get("grammar")
    grammar = load_grammar(grammar_path) if grammar_path else default_grammar()
    base = ExperimentConfig.default()
    return ExperimentConfig(
        grammar=grammar,
        sizes=DatasetSizes.from_dict(raw["sizes"]) if "sizes" in raw else base.sizes,
        trans_noise=NoiseProfile.from_dict(raw["trans_noise"]) if "trans_noise" in raw else base.trans_noise,
        gen_noise=NoiseProfile.from_dict(raw["gen_noise"]) if "gen_noise" in raw else base.gen_noise,
        train=TrainConfig.from_dict(raw["train"]) if "train" in raw else base.train,
        variants=tuple(raw.get("variants", base.variants)),
        seeds=tuple(raw.get("seeds", base.seeds)),
        permute_window=raw.get("permute_window", base.permute_window),
        save_checkpoints=raw.get("save_checkpoints", base.save_checkpoints),
    )


def build_corpora(config: ExperimentConfig, seed: int, sizes: DatasetSizes | None = None) -> dict[str, Corpus]:
    translator = make_translator(config.grammar, permute_window=config.permute_window)
    return build_augmented_corpora(
        config.grammar,
        translator,
        config.trans_noise,
        config.gen_noise,
        sizes or config.sizes,
        seed,
    )


@dataclass
class CellOutcome:
    group: str
    seed: int
    metrics: EvalResult | None = None
    diagnostics: RelabelDiagnostics | None = None
    epochs: list[EpochReport] = field(default_factory=list)
    error: str | None = None


@dataclass
class RunReport:
    kind: str  # "experiment" or "sweep"
    groups: tuple[str, ...]
    seeds: tuple[int, ...]
    cells: dict[tuple[str, int], CellOutcome]
    out_dir: Path

    def sample(self, group: str, metric: str = "exact_match") -> list[float]:
        """Per-seed values of a final-test metric for one group."""
        values = []
        for seed in self.seeds:
            cell = self.cells[(group, seed)]
            if cell.metrics is not None:
                values.append(getattr(cell.metrics, metric))
        return values

    def epoch_curve(self, group: str, corpus: str = "test", metric: str = "exact_match") -> list[float]:
        """Mean per-epoch metric across this group's successful seeds."""
        per_seed = [
            [r.metrics[corpus][metric] for r in self.cells[(group, seed)].epochs]
            for seed in self.seeds
            if self.cells[(group, seed)].error is None
        ]
        if not per_seed:
            return []
        return [float(np.mean(col)) for col in zip(*per_seed)]


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _augmented_view(corpora: dict[str, Corpus], names: Sequence[str], label: str) -> Corpus | None:
    parts = []
    for name in names:
        insts = [i for i in corpora.get(name, ()) if i.source != Source.SRC and i.clean is not None]
        if insts:
            parts.append(Corpus(schema=corpora[name].schema, instances=tuple(insts), name=name))
    if not parts:
        return None
    return merge_corpora(parts, label)


def _run_cell(
    cell_dir: Path,
    group: str,
    seed: int,
    train_config: TrainConfig,
    corpora: dict[str, Corpus],
    config: ExperimentConfig,
) -> CellOutcome:
    outcome = CellOutcome(group=group, seed=seed)
    cell_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "group": group,
        "seed": seed,
        "config": train_config.to_dict(),
        "sizes": config.sizes.to_dict(),
        "trans_noise": config.trans_noise.to_dict(),
        "gen_noise": config.gen_noise.to_dict(),
        "permute_window": config.permute_window,
        "schema": corpora["test"].schema.to_dict(),
    }
    _dump_json(manifest, cell_dir / "manifest.json")
    try:
        union = {name: corpora[name] for name in train_config.union_names()}
        eval_corpora = {"dev": corpora["dev"], "test": corpora["test"]}
        result: TrainResult = train_denoise(union, train_config, eval_corpora)
        outcome.epochs = result.reports
        outcome.metrics = evaluate_ensemble(result.models, result.vocab, corpora["test"])

        aug_names = [n for n in train_config.union_names() if n != "src"]
        before = _augmented_view(corpora, aug_names, "augmented")
        after = _augmented_view(result.relabeled, aug_names, "augmented")
        if before is not None and after is not None:
            outcome.diagnostics = relabel_diagnostics(after, before)

        with (cell_dir / "epochs.jsonl").open("w", encoding="utf-8") as f:
            for report in result.reports:
                f.write(_canonical(report.to_dict()) + "\n")
        if config.save_checkpoints:
            save_checkpoint(
                cell_dir / "checkpoints",
                result,
                train_config,
                corpora["test"].schema,
                extra_meta={"group": group, "seed": seed},
            )
    except Exception as exc:  # keep other cells running
        logger.exception("cell %s/seed_%d failed", group, seed)
        outcome.error = f"{type(exc).__name__}: {exc}"

    _dump_json(
        {
            "group": group,
            "seed": seed,
            "metrics": outcome.metrics.to_dict() if outcome.metrics else None,
            "diagnostics": outcome.diagnostics.to_dict() if outcome.diagnostics else None,
            "error": outcome.error,
        },
        cell_dir / "result.json",
    )
    return outcome


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> RunReport:
    """Train and evaluate every (variant, seed) cell, then render reports.

    Corpora are built once per seed and shared across variants, so variant
    comparisons are paired. A failing cell is recorded and skipped; the rest
    of the run continues.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    baseline = DEFAULT_BASELINE if DEFAULT_BASELINE in config.variants else config.variants[0]
    _dump_json(
        {
            "kind": "experiment",
            "groups": list(config.variants),
            "seeds": list(config.seeds),
            "baseline": baseline,
            "config": config.to_dict(),
        },
        out_dir / "run_manifest.json",
    )

    cells: dict[tuple[str, int], CellOutcome] = {}
    for seed in config.seeds:
        corpora = build_corpora(config, seed)
        for variant in config.variants:
            tc = apply_variant(variant, replace(config.train, seed=seed))
            cell_dir = out_dir / variant / f"seed_{seed}"
            cells[(variant, seed)] = _run_cell(cell_dir, variant, seed, tc, corpora, config)

    report = RunReport(
        kind="experiment", groups=config.variants, seeds=config.seeds, cells=cells, out_dir=out_dir
    )
    emit_report(out_dir)
    return report


def run_sweep(
    config: ExperimentConfig, param: str, values: Sequence, out_dir: str | Path
) -> RunReport:
    """One denoise_full cell per (value, seed) for a swept parameter."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter '{param}' (known: {', '.join(SWEEP_PARAMS)})")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = tuple(f"{param}_{v:g}" if isinstance(v, float) else f"{param}_{v}" for v in values)
    _dump_json(
        {
            "kind": "sweep",
            "param": param,
            "values": list(values),
            "groups": list(groups),
            "seeds": list(config.seeds),
            "baseline": None,
            "config": config.to_dict(),
        },
        out_dir / "run_manifest.json",
    )

    cells: dict[tuple[str, int], CellOutcome] = {}
    for seed in config.seeds:
        plain_corpora = None
        for group, value in zip(groups, values):
            sizes = config.sizes
            if param == "gen_copies":
                sizes = replace(config.sizes, gen_copies=int(value))
                corpora = build_corpora(config, seed, sizes)
            else:
                if plain_corpora is None:
                    plain_corpora = build_corpora(config, seed)
                corpora = plain_corpora

            base = replace(config.train, seed=seed)
            if param == "delta_max":
                base = replace(base, delta_max=float(value))
            elif param == "n_models":
                base = replace(base, n_models=int(value), corpus_assignment=None)
            tc = apply_variant("denoise_full", base)
            cell_dir = out_dir / group / f"seed_{seed}"
            cell_config = replace(config, sizes=sizes)
            cells[(group, seed)] = _run_cell(cell_dir, group, seed, tc, corpora, cell_config)

    report = RunReport(kind="sweep", groups=groups, seeds=config.seeds, cells=cells, out_dir=out_dir)
    emit_report(out_dir)
    return report


# ---------------------------------------------------------------------------
# Report rendering, purely from files in the run directory.
# ---------------------------------------------------------------------------


def _read_cells(run_dir: Path) -> tuple[dict, dict[tuple[str, int], dict], dict[tuple[str, int], list[dict]]]:
    manifest = json.loads((run_dir / "run_manifest.json").read_text(encoding="utf-8"))
    results: dict[tuple[str, int], dict] = {}
    epochs: dict[tuple[str, int], list[dict]] = {}
    for group in manifest["groups"]:
        for seed in manifest["seeds"]:
            cell_dir = run_dir / group / f"seed_{seed}"
            result_path = cell_dir / "result.json"
            if not result_path.exists():
                raise FileNotFoundError(f"missing cell output: {result_path}")
            results[(group, seed)] = json.loads(result_path.read_text(encoding="utf-8"))
            log_path = cell_dir / "epochs.jsonl"
            if log_path.exists():
                epochs[(group, seed)] = [
                    json.loads(line) for line in log_path.read_text(encoding="utf-8").splitlines() if line
                ]
            else:
                epochs[(group, seed)] = []
    return manifest, results, epochs


def _row_values(result: dict) -> dict[str, float | None]:
    metrics = result.get("metrics") or {}
    diag = result.get("diagnostics") or {}
    return {
        "exact_match": metrics.get("exact_match"),
        "intent_accuracy": metrics.get("intent_accuracy"),
        "slot_f1": metrics.get("slot_f1"),
        "slot_precision": metrics.get("slot_precision"),
        "slot_recall": metrics.get("slot_recall"),
        "label_error_before": diag.get("label_error_before"),
        "label_error_after": diag.get("label_error_after"),
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def emit_report(run_dir: str | Path, plots: bool = False) -> None:
    """Rebuild results.csv, summary.csv, tables.md and per-group epoch curves.

    Everything is derived from the per-cell files; rerunning on the same run
    directory reproduces the outputs byte for byte. ``plots`` additionally
    renders PNG epoch curves when matplotlib is available (PNG bytes are not
    part of the determinism contract).
    """
    run_dir = Path(run_dir)
    manifest, results, epoch_logs = _read_cells(run_dir)
    groups: list[str] = manifest["groups"]
    seeds: list[int] = manifest["seeds"]

    with (run_dir / "results.csv").open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["group", "seed", *_METRIC_COLUMNS, "error"])
        for group in groups:
            for seed in seeds:
                result = results[(group, seed)]
                row = _row_values(result)
                writer.writerow(
                    [group, seed, *(_fmt(row[c]) for c in _METRIC_COLUMNS), result.get("error") or ""]
                )

    summaries: dict[str, dict[str, tuple[float, float] | None]] = {}
    samples: dict[str, dict[str, list[float]]] = {}
    for group in groups:
        samples[group] = {c: [] for c in _METRIC_COLUMNS}
        for seed in seeds:
            row = _row_values(results[(group, seed)])
            for c in _METRIC_COLUMNS:
                if row[c] is not None:
                    samples[group][c].append(row[c])
        summaries[group] = {
            c: (float(np.mean(v)), float(np.std(v))) if v else None
            for c, v in samples[group].items()
        }

    with (run_dir / "summary.csv").open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        header = ["group", "n_seeds"]
        for c in _METRIC_COLUMNS:
            header += [f"{c}_mean", f"{c}_std"]
        writer.writerow(header)
        for group in groups:
            row = [group, len(samples[group]["exact_match"])]
            for c in _METRIC_COLUMNS:
                agg = summaries[group][c]
                row += ["", ""] if agg is None else [_fmt(agg[0]), _fmt(agg[1])]
            writer.writerow(row)

    baseline = manifest.get("baseline")
    lines = [f"# Run report: {manifest['kind']}", ""]
    if manifest["kind"] == "sweep":
        lines.append(f"Swept parameter: `{manifest['param']}` over {manifest['values']}")
        lines.append("")
    header_cols = ["group", "exact match", "intent acc", "slot F1"]
    if baseline:
        header_cols.append(f"p vs {baseline}")
    lines.append("| " + " | ".join(header_cols) + " |")
    lines.append("|" + "---|" * len(header_cols))
    for group in groups:
        em = summaries[group]["exact_match"]
        ia = summaries[group]["intent_accuracy"]
        f1 = summaries[group]["slot_f1"]

        def cell(agg):
            return "n/a" if agg is None else f"{agg[0]:.4f} ± {agg[1]:.4f}"

        row = [group, cell(em), cell(ia), cell(f1)]
        if baseline:
            if group == baseline or em is None or len(samples[group]["exact_match"]) < 2:
                row.append("-")
            else:
                stats = paired_stats(samples[group]["exact_match"], samples[baseline]["exact_match"])
                row.append(f"{stats.p:.2e}")
        lines.append("| " + " | ".join(row) + " |")
    failed = [(g, s) for g in groups for s in seeds if results[(g, s)].get("error")]
    if failed:
        lines.append("")
        lines.append("Failed cells: " + ", ".join(f"{g}/seed_{s}" for g, s in failed))
    (run_dir / "tables.md").write_text("\n".join(lines) + "\n", encoding="utf-8")

    curves_dir = run_dir / "curves"
    curves_dir.mkdir(exist_ok=True)
    curve_cols = ["test_exact_match", "test_slot_f1", "test_intent_accuracy", "dev_exact_match"]
    for group in groups:
        logs = [epoch_logs[(group, s)] for s in seeds if epoch_logs[(group, s)]]
        if not logs:
            continue
        n_epochs = min(len(log) for log in logs)
        with (curves_dir / f"{group}.csv").open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["epoch", *curve_cols])
            for e in range(n_epochs):
                row = [str(e + 1)]
                for col in curve_cols:
                    corpus, metric = col.split("_", 1)
                    vals = [log[e]["metrics"][corpus][metric] for log in logs if corpus in log[e]["metrics"]]
                    row.append(_fmt(float(np.mean(vals))) if vals else "")
                writer.writerow(row)

    if plots:
        _render_plots(run_dir, groups, seeds, epoch_logs)


def _render_plots(run_dir: Path, groups, seeds, epoch_logs) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not installed; skipping plots")
        return
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for group in groups:
        logs = [epoch_logs[(group, s)] for s in seeds if epoch_logs[(group, s)]]
        if not logs:
            continue
        n_epochs = min(len(log) for log in logs)
        ys = [
            float(np.mean([log[e]["metrics"]["test"]["exact_match"] for log in logs]))
            for e in range(n_epochs)
        ]
        ax.plot(range(1, n_epochs + 1), ys, marker="o", label=group)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test exact match")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(run_dir / "curves" / "test_exact_match.png", dpi=120)
    plt.close(fig)


def write_dataset(config: ExperimentConfig, seed: int, out_dir: str | Path) -> None:
    """Materialize the synthetic benchmark corpora as JSONL plus schema/grammar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpora = build_corpora(config, seed)
    save_schema(corpora["test"].schema, out_dir / "schema.json")
    save_grammar(config.grammar, out_dir / "grammar.json")
    for name, corpus in corpora.items():
        save_corpus(corpus, out_dir / f"{name}.jsonl")
