"""Denoising co-training for joint intent classification and slot tagging.

Multiple models are initialized on different noisy augmented corpora, then
co-trained: each model learns from the batch subset the other models consider
low-loss, instances are re-weighted by ensemble disagreement, and augmented
labels are continually rewritten with the ensemble-mean predictions.
"""

from .data_model import (
    Corpus,
    Instance,
    LabelSchema,
    SoftLabels,
    Source,
    load_corpus,
    load_schema,
    save_corpus,
    save_schema,
    to_soft,
    validate_instance,
)
from .encoder import ModelParams, Prediction, Vocab, build_vocab, ensemble_predict, forward, init_params
from .harness import ExperimentConfig, emit_report, run_experiment, run_sweep
from .losses import (
    ensemble_relabel,
    instance_uncertainty,
    instance_weight,
    joint_cross_entropy,
    weighted_joint_loss,
)
from .metrics import (
    EvalResult,
    RelabelDiagnostics,
    evaluate_ensemble,
    exact_match_accuracy,
    intent_accuracy,
    paired_stats,
    relabel_diagnostics,
    span_f1,
)
from .synth_task import (
    DatasetSizes,
    NoiseProfile,
    PseudoTranslator,
    TaskGrammar,
    build_augmented_corpora,
    default_grammar,
    generate_clean_dataset,
    inject_noise,
    make_translator,
    pseudo_translate,
)
from .trainer import TrainConfig, TrainResult, optimizer_step, select_small_loss, train_denoise

__version__ = "0.1.0"
