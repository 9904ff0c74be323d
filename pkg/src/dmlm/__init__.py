"""Discrete multimodal language modeling at desk scale.

Text, speech, and image tokens share one vocabulary; a small causal
transformer trains on task-formatted sequences under a per-modality
length-normalized cross-entropy; speech tokens come from mini-batch
k-means codebooks or a deterministic synthetic codec.
"""

from .codebook import Codebook, fit_codebook, lloyd_reference, read_features, write_features
from .errors import (
    ChecksumError,
    DmlmError,
    EmptyLossError,
    EncodingError,
    IncompatibleCheckpoint,
    InfeasibleK,
    InvalidArgument,
    InvalidToken,
    ManifestMismatch,
    NumericError,
)
from .kernels import BACKEND
from .net import (
    ModelConfig,
    ModelParams,
    backward,
    extend_from_pretrained,
    forward,
    init_random,
    init_zero,
    load_checkpoint,
    save_checkpoint,
    tensor_specs,
)
from .objective import (
    LossBreakdown,
    LossWeights,
    OptimizerState,
    adamw_step,
    loss_logit_grads,
    trimodal_loss,
)
from .pipeline import (
    EvalReport,
    GenerationResult,
    MixComponent,
    SearchResult,
    SearchSpec,
    TrainConfig,
    TrainResult,
    bleu4,
    cer,
    corpus_bleu4,
    edit_distance,
    evaluate,
    generate,
    generate_many,
    lambda_search,
    metric_improved,
    run_to_words,
    sample_components,
    train,
    wer,
    worst_value,
    write_log,
)
from .seqfmt import (
    Batch,
    PackedSequence,
    Supervision,
    TaskExample,
    batch_shift_targets,
    make_batch,
    pack,
    read_examples,
    shift_targets,
    unpack,
    write_examples,
)
from .tokenspace import (
    Modality,
    SyntheticSpeechCodec,
    TokenRun,
    TokenSpace,
    build_token_space,
    load_codec,
    load_manifest,
    read_token_runs,
    save_codec,
    save_manifest,
    write_token_runs,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
