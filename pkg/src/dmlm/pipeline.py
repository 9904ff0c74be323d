"""Training, decoding, evaluation, and experiment harnesses.

Training interleaves supervised and unsupervised examples drawn from a
weighted mix, optimizes the tri-modal loss, evaluates a dev metric once
per epoch, and early-stops on `patience` consecutive non-improvements,
returning the best-dev weights (never the last). Decoding is greedy
argmax restricted to the task's target modality. WER and CER are edit
distances normalized by reference length; BLEU-4 is standard with
add-one smoothing on the higher-order n-grams.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DmlmError,
    EmptyLossError,
    InvalidArgument,
    NumericError,
)
from .kernels import levenshtein
from .net import ModelParams, backward, forward
from .objective import (
    LossBreakdown,
    LossWeights,
    OptimizerState,
    adamw_step,
    loss_logit_grads,
    trimodal_loss,
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
)
from .tokenspace import (
    TASK_OUTPUT_MODALITY,
    Modality,
    SyntheticSpeechCodec,
    TokenRun,
    TokenSpace,
)

# ---------------------------------------------------------------------------
# Edit-distance metrics


def _to_tokens(x) -> list:
    if isinstance(x, str):
        return x.split()
    return list(x)


def edit_distance(reference: Sequence, hypothesis: Sequence) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion cost."""
    ref, hyp = list(reference), list(hypothesis)
    ids: dict = {}
    enc = lambda seq: np.asarray(
        [ids.setdefault(t, len(ids)) for t in seq], dtype=np.int32
    )
    return int(levenshtein(enc(ref), enc(hyp)))


def wer(reference, hypothesis) -> float:
    """(substitutions + deletions + insertions) / max(1, |reference|).

    Word sequences; strings are split on whitespace. An empty reference
    against n hypothesis words scores n (not infinity), and values above
    1.0 are legitimate.
    """
    ref, hyp = _to_tokens(reference), _to_tokens(hypothesis)
    return edit_distance(ref, hyp) / max(1, len(ref))


def cer(reference: str, hypothesis: str) -> float:
    """`wer` at character granularity over raw strings."""
    return edit_distance(list(reference), list(hypothesis)) / max(1, len(reference))


# ---------------------------------------------------------------------------
# BLEU-4


def _ngram_counts(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(references: Sequence[Sequence], hypothesis: Sequence):
    """Per-order (matched, total) counts plus hypothesis/reference lengths."""
    hyp = _to_tokens(hypothesis)
    refs = [_to_tokens(r) for r in references]
    if not refs:
        raise InvalidArgument("bleu needs at least one reference")
    stats = []
    for n in range(1, 5):
        hyp_counts = _ngram_counts(hyp, n)
        best = Counter()
        for r in refs:
            rc = _ngram_counts(r, n)
            for g, c in rc.items():
                if c > best[g]:
                    best[g] = c
        matched = sum(min(c, best[g]) for g, c in hyp_counts.items())
        stats.append((matched, max(0, len(hyp) - n + 1)))
    # closest reference length; ties go to the shorter reference
    ref_len = min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
    return stats, len(hyp), ref_len


def _bleu_from_stats(stats, hyp_len: int, ref_len: int, smooth: bool) -> float:
    log_p = 0.0
    for n, (matched, total) in enumerate(stats, start=1):
        if smooth and n >= 2:
            matched, total = matched + 1, total + 1
        if matched == 0 or total == 0:
            return 0.0
        log_p += math.log(matched / total)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / max(1, hyp_len))
    return bp * math.exp(log_p / 4.0) * 100.0


def bleu4(references: Sequence, hypothesis, smooth: bool = True) -> float:
    """Sentence BLEU with n <= 4, uniform weights, brevity penalty.

    Add-one smoothing applies to orders 2..4 unless disabled. Reported on
    the 0..100 scale; an empty hypothesis scores 0.
    """
    hyp = _to_tokens(hypothesis)
    if not hyp:
        return 0.0
    stats, hyp_len, ref_len = _bleu_stats(references, hyp)
    return _bleu_from_stats(stats, hyp_len, ref_len, smooth)


def corpus_bleu4(
    references: Sequence[Sequence], hypotheses: Sequence, smooth: bool = True
) -> float:
    """Corpus BLEU: n-gram counts pooled over all sentence pairs."""
    if len(references) != len(hypotheses):
        raise InvalidArgument("need one reference list per hypothesis")
    pooled = [(0, 0)] * 4
    hyp_total, ref_total = 0, 0
    for refs, hyp in zip(references, hypotheses):
        refs = refs if isinstance(refs, (list, tuple)) and refs and isinstance(
            refs[0], (list, tuple)
        ) else [refs]
        stats, hl, rl = _bleu_stats(refs, hyp)
        pooled = [(m0 + m, t0 + t) for (m0, t0), (m, t) in zip(pooled, stats)]
        hyp_total += hl
        ref_total += rl
    if hyp_total == 0:
        return 0.0
    return _bleu_from_stats(pooled, hyp_total, ref_total, smooth)


# ---------------------------------------------------------------------------
# Greedy generation


@dataclass(frozen=True)
class GenerationResult:
    output: TokenRun
    truncated: bool


def _target_modality(space: TokenSpace, task: int, input_run: TokenRun) -> Modality:
    name = space.control_name(task)
    if name == "TASK_LM":
        return input_run.modality
    m = TASK_OUTPUT_MODALITY.get(name)
    if m is None:
        raise InvalidArgument(f"{name} is not a generation task")
    return m


def generate_many(
    params: ModelParams,
    space: TokenSpace,
    tasks: Sequence[int],
    inputs: Sequence[TokenRun],
    max_new: int,
    masked: bool = True,
) -> list[GenerationResult]:
    """Greedy decode a group of prefixes simultaneously.

    Rows are right-padded and advanced in lockstep; causality keeps each
    row's next-token distribution independent of the others' padding.
    Ties in the argmax resolve to the lowest token id. With masking on,
    every token outside the target modality (plus its end delimiter) is
    forced to -inf before the argmax.
    """
    if len(tasks) != len(inputs):
        raise InvalidArgument("need one task per input run")
    if not tasks:
        return []
    if max_new < 0:
        raise InvalidArgument("max_new must be nonnegative")
    cfg = params.config
    n = len(tasks)
    prefixes = []
    end_ids = np.empty(n, dtype=np.int64)
    allowed = np.zeros((n, cfg.vocab_size), dtype=bool)
    for r, (task, run) in enumerate(zip(tasks, inputs)):
        space.validate_run(run)
        prefix = np.concatenate([
            np.asarray([task], dtype=np.int32),
            run.ids,
            np.asarray([space.end_token(run.modality)], dtype=np.int32),
        ])
        if prefix.shape[0] >= cfg.max_seq_len:
            raise InvalidArgument(
                f"prefix of length {prefix.shape[0]} leaves no room to generate "
                f"(max_seq_len {cfg.max_seq_len})"
            )
        out_mod = _target_modality(space, task, run)
        lo, hi = space.range_of(out_mod)
        end_ids[r] = space.end_token(out_mod)
        allowed[r, lo:hi] = True
        allowed[r, end_ids[r]] = True
        prefixes.append(prefix)

    prefix_lens = np.asarray([p.shape[0] for p in prefixes], dtype=np.int64)
    width = int(min(cfg.max_seq_len, prefix_lens.max() + max_new + 1))
    buf = np.full((n, width), space.pad_id, dtype=np.int32)
    for r, p in enumerate(prefixes):
        buf[r, : p.shape[0]] = p
    lens = prefix_lens.copy()
    emitted = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    truncated = np.zeros(n, dtype=bool)

    while not done.all():
        can_emit = ~done & (emitted < max_new) & (lens < width)
        hit_cap = ~done & ~can_emit
        truncated[hit_cap] = True
        done[hit_cap] = True
        if not can_emit.any():
            break
        cur = int(lens[can_emit].max())
        logits, _ = forward(params, buf[:, :cur])
        rows = np.flatnonzero(can_emit)
        step_logits = logits[rows, lens[rows] - 1, :].astype(np.float64)
        if masked:
            step_logits[~allowed[rows]] = -np.inf
        nxt = np.argmax(step_logits, axis=1)
        for j, r in enumerate(rows):
            tid = int(nxt[j])
            if tid == int(end_ids[r]):
                done[r] = True
                continue
            buf[r, lens[r]] = tid
            lens[r] += 1
            emitted[r] += 1
    results = []
    for r in range(n):
        ids = buf[r, prefix_lens[r] : lens[r]]
        mod = _target_modality(space, int(tasks[r]), inputs[r])
        results.append(GenerationResult(TokenRun(ids.copy(), mod), bool(truncated[r])))
    return results


def generate(
    params: ModelParams,
    space: TokenSpace,
    task: int,
    input_run: TokenRun,
    max_new: int,
    masked: bool = True,
) -> GenerationResult:
    """Greedy decode one prefix; see `generate_many`."""
    return generate_many(params, space, [task], [input_run], max_new, masked=masked)[0]


# ---------------------------------------------------------------------------
# Evaluation


METRICS = ("wer", "cer", "bleu4", "loss")
_HIGHER_IS_BETTER = {"bleu4"}


def metric_improved(new: float, old: float, metric: str) -> bool:
    if metric in _HIGHER_IS_BETTER:
        return new > old
    return new < old


def worst_value(metric: str) -> float:
    return -math.inf if metric in _HIGHER_IS_BETTER else math.inf


@dataclass
class EvalReport:
    metric: str
    value: float
    count: int
    records: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "count": self.count,
            "records": self.records,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def run_to_words(
    space: TokenSpace, run: TokenRun, codec: SyntheticSpeechCodec | None
) -> str:
    """Detokenize a run for scoring. Speech runs go through the inverse
    codec (lenient mode); image runs score as space-joined ids."""
    if run.modality is Modality.TEXT:
        return space.decode_text(run)
    if run.modality is Modality.SPEECH:
        if codec is None:
            raise InvalidArgument("scoring a speech run as text needs a codec")
        return space.decode_text(codec.decode(run, strict=False))
    return " ".join(str(int(i)) for i in run.ids)


def _default_max_new(space: TokenSpace, examples: Sequence[TaskExample]) -> int:
    longest = max((len(e.output) for e in examples), default=8)
    return int(2 * longest + 8)


def evaluate(
    params: ModelParams,
    space: TokenSpace,
    examples: Sequence[TaskExample],
    metric: str,
    codec: SyntheticSpeechCodec | None = None,
    max_new: int | None = None,
    group_size: int = 0,
    masked: bool = True,
    weights: LossWeights = LossWeights(),
) -> EvalReport:
    """Decode every supervised example and score corpus-level.

    WER/CER aggregate as total edit operations over total reference
    length (not the mean of per-example rates); BLEU pools n-gram counts;
    the loss metric skips decoding entirely. group_size limits how many
    examples decode simultaneously (0 = all at once).
    """
    if metric not in METRICS:
        raise InvalidArgument(f"unknown metric {metric!r}")
    if not examples:
        raise InvalidArgument("cannot evaluate an empty dataset")
    if metric == "loss":
        return _evaluate_loss(params, space, examples, weights)
    bad = [e for e in examples if e.supervision is not Supervision.SUPERVISED]
    if bad:
        raise InvalidArgument("decode metrics need supervised examples")
    if max_new is None:
        max_new = _default_max_new(space, examples)
    group = len(examples) if group_size <= 0 else group_size

    records: list[dict] = []
    refs_tok, hyps_tok = [], []
    edits_total, ref_len_total = 0, 0
    failures = 0
    for start in range(0, len(examples), group):
        chunk = examples[start : start + group]
        try:
            outs = generate_many(
                params, space,
                [e.task for e in chunk], [e.input for e in chunk],
                max_new, masked=masked,
            )
        except DmlmError as exc:
            # a bad row poisons its whole group; fall back to row-wise
            outs = []
            for e in chunk:
                try:
                    outs.append(generate(params, space, e.task, e.input, max_new, masked))
                except DmlmError as row_exc:
                    outs.append(row_exc)
        for e, out in zip(chunk, outs):
            if isinstance(out, Exception):
                records.append({"error": str(out), "excluded": True})
                failures += 1
                continue
            ref_text = run_to_words(space, e.output, codec)
            hyp_text = run_to_words(space, out.output, codec)
            if metric == "cer":
                ref_seq, hyp_seq = list(ref_text), list(hyp_text)
            else:
                ref_seq, hyp_seq = ref_text.split(), hyp_text.split()
            if metric in ("wer", "cer"):
                d = edit_distance(ref_seq, hyp_seq)
                score = d / max(1, len(ref_seq))
                edits_total += d
                ref_len_total += len(ref_seq)
            else:
                score = bleu4([ref_seq], hyp_seq)
                refs_tok.append(ref_seq)
                hyps_tok.append(hyp_seq)
            records.append({
                "reference": ref_text,
                "hypothesis": hyp_text,
                "score": score,
                "truncated": out.truncated,
            })
    scored = len(records) - failures
    if scored == 0:
        raise InvalidArgument("every example failed to decode")
    if metric in ("wer", "cer"):
        value = edits_total / max(1, ref_len_total)
    else:
        value = corpus_bleu4(refs_tok, hyps_tok)
    return EvalReport(metric=metric, value=float(value), count=scored, records=records)


def _evaluate_loss(
    params: ModelParams,
    space: TokenSpace,
    examples: Sequence[TaskExample],
    weights: LossWeights,
    batch_size: int = 32,
) -> EvalReport:
    total = 0.0
    records = []
    packed = [pack(e, space) for e in examples]
    for start in range(0, len(packed), batch_size):
        chunk = packed[start : start + batch_size]
        batch = make_batch(chunk, space.pad_id)
        inputs, targets, codes, mask = batch_shift_targets(batch, space)
        logits, _ = forward(params, inputs)
        bd = trimodal_loss(logits, targets, codes, mask, weights)
        total += bd.total * len(chunk)
        records.append({"rows": len(chunk), "loss": bd.total})
    value = total / len(packed)
    return EvalReport(metric="loss", value=float(value), count=len(packed), records=records)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class MixComponent:
    path: str
    supervision: Supervision
    weight: float

    def to_json(self) -> dict:
        return {"path": self.path, "supervision": self.supervision.value,
                "weight": self.weight}

    @classmethod
    def from_json(cls, obj: Mapping) -> "MixComponent":
        return cls(str(obj["path"]), Supervision(obj["supervision"]), float(obj["weight"]))


@dataclass
class TrainConfig:
    mix: list[MixComponent]
    dev_path: str = ""
    dev_metric: str = "wer"
    steps_per_epoch: int = 250
    max_epochs: int = 8
    batch_size: int = 4
    lr: float = 5e-5
    weight_decay: float = 1e-4
    patience: int = 1
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    normalization: str = "per_sequence"
    dev_max_new: int | None = None
    dev_limit: int | None = None
    masked_decode: bool = True

    def __post_init__(self):
        if not self.mix:
            raise InvalidArgument("training mix must not be empty")
        if any(c.weight < 0 for c in self.mix):
            raise InvalidArgument("mix weights must be nonnegative")
        if sum(c.weight for c in self.mix) <= 0:
            raise InvalidArgument("mix weights must sum to a positive value")
        if self.patience < 0:
            raise InvalidArgument("patience must be nonnegative")
        if self.dev_metric not in METRICS:
            raise InvalidArgument(f"unknown dev metric {self.dev_metric!r}")
        if self.batch_size < 1 or self.steps_per_epoch < 1 or self.max_epochs < 1:
            raise InvalidArgument("batch size, steps per epoch, and epochs must be >= 1")

    def to_json(self) -> dict:
        return {
            "mix": [c.to_json() for c in self.mix],
            "dev_path": self.dev_path,
            "dev_metric": self.dev_metric,
            "steps_per_epoch": self.steps_per_epoch,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "patience": self.patience,
            "seed": self.seed,
            "weights": self.weights.to_json(),
            "normalization": self.normalization,
            "dev_max_new": self.dev_max_new,
            "dev_limit": self.dev_limit,
            "masked_decode": self.masked_decode,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrainConfig":
        kwargs = dict(obj)
        kwargs["mix"] = [MixComponent.from_json(c) for c in obj["mix"]]
        if "weights" in obj:
            kwargs["weights"] = LossWeights.from_json(obj["weights"])
        known = {f for f in cls.__dataclass_fields__}
        extra = set(kwargs) - known
        if extra:
            raise InvalidArgument(f"unknown training config fields: {sorted(extra)}")
        return cls(**kwargs)


@dataclass
class TrainResult:
    params: ModelParams
    log: list[dict]
    best_metric: float
    best_epoch: int
    epochs_run: int
    steps_run: int


def sample_components(rng: np.random.Generator, weights: Sequence[float], size: int) -> np.ndarray:
    """Draw mix-component indices proportional to the weights."""
    p = np.asarray(weights, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or (p < 0).any() or p.sum() <= 0:
        raise InvalidArgument("weights must be nonnegative with a positive sum")
    return rng.choice(p.size, size=size, p=p / p.sum())


def _load_mix(
    config: TrainConfig, space: TokenSpace, mix_data
) -> list[tuple[list[PackedSequence], float]]:
    if mix_data is None:
        mix_data = [(read_examples(c.path, space), c.weight) for c in config.mix]
    loaded = []
    for (examples, weight), comp in zip(mix_data, config.mix):
        if not examples:
            raise InvalidArgument(f"dataset {comp.path!r} is empty")
        kinds = {e.supervision for e in examples}
        if kinds != {comp.supervision}:
            raise InvalidArgument(
                f"dataset {comp.path!r} mixes supervision kinds {sorted(k.value for k in kinds)}, "
                f"declared {comp.supervision.value}"
            )
        loaded.append(([pack(e, space) for e in examples], weight))
    return loaded


def train(
    config: TrainConfig,
    params: ModelParams,
    space: TokenSpace,
    mix_data: list[tuple[list[TaskExample], float]] | None = None,
    dev_data: list[TaskExample] | None = None,
    codec: SyntheticSpeechCodec | None = None,
    log_sink: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Optimize `params` on the weighted example mix; early-stop on dev.

    Each step samples batch_size examples (components by weight, then
    uniformly within the chosen component), packs them, and takes one
    AdamW step on the tri-modal loss. The dev metric runs after every
    epoch; `patience` consecutive evaluations without strict improvement
    stop training. The returned params are a copy from the best epoch.
    """
    mix = _load_mix(config, space, mix_data)
    if dev_data is None:
        dev_data = read_examples(config.dev_path, space)
    if not dev_data:
        raise InvalidArgument("dev set is empty")
    if config.dev_limit:
        dev_data = dev_data[: config.dev_limit]
    params = params.copy()
    if params.config.vocab_size != space.total_size:
        raise InvalidArgument(
            f"model vocabulary {params.config.vocab_size} does not match "
            f"the token space size {space.total_size}"
        )
    rng = np.random.default_rng(config.seed)
    probs = np.asarray([w for _, w in mix], dtype=np.float64)
    probs = probs / probs.sum()
    opt = OptimizerState.create(
        params.tensors, lr=config.lr, weight_decay=config.weight_decay
    )
    log: list[dict] = []

    def emit(entry: dict) -> None:
        log.append(entry)
        if log_sink is not None:
            log_sink(entry)

    best_metric = worst_value(config.dev_metric)
    best_params = params.copy()
    best_epoch = 0
    streak = 0
    step = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        for _ in range(config.steps_per_epoch):
            step += 1
            comp_ids = sample_components(rng, probs, config.batch_size)
            chosen = [
                mix[c][0][int(rng.integers(len(mix[c][0])))] for c in comp_ids
            ]
            batch = make_batch(chosen, space.pad_id)
            inputs, targets, codes, mask = batch_shift_targets(batch, space)
            logits, trace = forward(params, inputs)
            try:
                bd = trimodal_loss(
                    logits, targets, codes, mask, config.weights, config.normalization
                )
                lg = loss_logit_grads(
                    logits, targets, codes, mask, config.weights, config.normalization
                )
            except (NumericError, EmptyLossError) as exc:
                raise NumericError(
                    f"step {step}: {exc} (component ids {comp_ids.tolist()})"
                ) from exc
            grads = backward(params, trace, lg.astype(params.dtype))
            adamw_step(params.tensors, grads, opt)
            emit({
                "step": step,
                "loss_total": bd.total,
                "loss_per_modality": {
                    name: (bd.mean_nll(name) if bd.per_modality[name][1] else None)
                    for name in ("speech", "text", "image")
                },
                "dev_metric": None,
                "lr": config.lr,
            })
        epochs_run = epoch
        report = evaluate(
            params, space, dev_data, config.dev_metric,
            codec=codec, max_new=config.dev_max_new,
            masked=config.masked_decode, weights=config.weights,
        )
        emit({
            "step": step,
            "loss_total": None,
            "loss_per_modality": None,
            "dev_metric": {"name": config.dev_metric, "value": report.value,
                           "epoch": epoch},
            "lr": config.lr,
        })
        if metric_improved(report.value, best_metric, config.dev_metric):
            best_metric = report.value
            best_params = params.copy()
            best_epoch = epoch
            streak = 0
        else:
            streak += 1
        if streak >= config.patience and (streak > 0 or config.patience == 0):
            break
    return TrainResult(
        params=best_params,
        log=log,
        best_metric=best_metric,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        steps_run=step,
    )


def write_log(path: str | Path, log: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Lambda search


@dataclass(frozen=True)
class SearchSpec:
    trials: int = 25
    lambda_s_range: tuple[float, float] = (0.0, 1.0)
    lambda_t_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0
    include_baselines: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidArgument("need at least one trial")
        for lo, hi in (self.lambda_s_range, self.lambda_t_range):
            if not (0.0 <= lo <= hi <= 1.0):
                raise InvalidArgument("lambda ranges must satisfy 0 <= lo <= hi <= 1")


@dataclass
class SearchResult:
    best_weights: LossWeights
    best_metric: float
    table: list[dict]


def lambda_search(
    spec: SearchSpec,
    base_config: TrainConfig,
    params: ModelParams,
    space: TokenSpace,
    mix_data=None,
    dev_data=None,
    codec: SyntheticSpeechCodec | None = None,
) -> SearchResult:
    """Uniform random search over (lambda_S, lambda_T).

    Every trial trains from the same initial weights and seed so rows
    differ only in the loss weights. The returned best row minimizes the
    dev metric among the search trials; the (1, 1) and (0, 1) comparison
    rows are reported alongside but never selected.
    """
    rng = np.random.default_rng(spec.seed)
    draws = []
    for _ in range(spec.trials):
        ls = float(rng.uniform(*spec.lambda_s_range))
        lt = float(rng.uniform(*spec.lambda_t_range))
        draws.append((ls, lt))
    rows: list[dict] = []
    candidates: list[tuple[float, LossWeights]] = []

    def run_trial(kind: str, ls: float, lt: float) -> None:
        li = base_config.weights.lambda_image
        try:
            w = LossWeights(lambda_speech=ls, lambda_text=lt, lambda_image=li)
            cfg = replace(base_config, weights=w)
            result = train(
                cfg, params, space, mix_data=mix_data, dev_data=dev_data, codec=codec
            )
            rows.append({
                "kind": kind,
                "lambda_speech": ls,
                "lambda_text": lt,
                "lambda_image": li,
                "dev_metric": result.best_metric,
                "metric_name": base_config.dev_metric,
                "epochs": result.epochs_run,
                "status": "ok",
            })
            if kind == "search":
                candidates.append((result.best_metric, w))
        except DmlmError as exc:
            rows.append({
                "kind": kind, "lambda_speech": ls, "lambda_text": lt,
                "lambda_image": li, "dev_metric": None,
                "metric_name": base_config.dev_metric,
                "status": f"failed: {exc}",
            })

    if spec.include_baselines:
        run_trial("baseline", 1.0, 1.0)
        run_trial("baseline", 0.0, 1.0)
    for ls, lt in draws:
        run_trial("search", ls, lt)
    if not candidates:
        raise DmlmError("every search trial failed")
    metric = base_config.dev_metric
    best_metric, best_weights = candidates[0]
    for value, w in candidates[1:]:
        if metric_improved(value, best_metric, metric):
            best_metric, best_weights = value, w
    return SearchResult(best_weights=best_weights, best_metric=best_metric, table=rows)
