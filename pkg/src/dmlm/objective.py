"""Length-normalized tri-modal cross-entropy and the AdamW step.

Each modality's cross-entropy is averaged over that modality's target
count and weighted by its lambda, so no modality dominates merely by
emitting more tokens. Counts are taken per sequence by default (a batch
mean of per-sequence losses); a per-batch mode pools counts across the
batch for comparison runs. Modalities with zero weight are skipped
outright, which makes the loss and its gradients exactly independent of
their logit rows, and modalities with zero targets contribute exactly
nothing.

All loss accumulation happens in float64 regardless of model dtype.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import EmptyLossError, InvalidArgument, NumericError
from .tokenspace import MODALITY_CODE, Modality

_LOSS_MODALITIES = (
    ("speech", MODALITY_CODE[Modality.SPEECH]),
    ("text", MODALITY_CODE[Modality.TEXT]),
    ("image", MODALITY_CODE[Modality.IMAGE]),
)


@dataclass(frozen=True)
class LossWeights:
    lambda_speech: float = 0.25
    lambda_text: float = 0.93
    lambda_image: float = 0.25

    def __post_init__(self):
        vals = (self.lambda_speech, self.lambda_text, self.lambda_image)
        if not all(np.isfinite(v) and v >= 0.0 for v in vals):
            raise InvalidArgument("loss weights must be finite and nonnegative")
        if all(v == 0.0 for v in vals):
            raise InvalidArgument("at least one loss weight must be positive")

    def by_name(self, name: str) -> float:
        return getattr(self, f"lambda_{name}")

    def to_json(self) -> dict:
        return {
            "lambda_speech": self.lambda_speech,
            "lambda_text": self.lambda_text,
            "lambda_image": self.lambda_image,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LossWeights":
        return cls(
            lambda_speech=float(obj["lambda_speech"]),
            lambda_text=float(obj["lambda_text"]),
            lambda_image=float(obj["lambda_image"]),
        )


@dataclass
class LossBreakdown:
    total: float
    per_modality: dict[str, tuple[float, int]]  # name -> (nll sum, target count)

    def mean_nll(self, name: str) -> float:
        s, n = self.per_modality[name]
        return s / n if n else 0.0


def _as_batch(logits, targets, target_modalities, target_mask):
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    codes = np.asarray(target_modalities, dtype=np.int8)
    mask = np.asarray(target_mask, dtype=bool)
    single = logits.ndim == 2
    if single:
        logits, targets, codes, mask = (z[None] for z in (logits, targets, codes, mask))
    if logits.ndim != 3:
        raise InvalidArgument("logits must be (L, V) or (B, L, V)")
    b, l, v = logits.shape
    if targets.shape != (b, l) or codes.shape != (b, l) or mask.shape != (b, l):
        raise InvalidArgument("targets, modalities, and mask must all be (B, L)")
    if mask.any() and (targets[mask].min() < 0 or targets[mask].max() >= v):
        raise InvalidArgument("unmasked target id outside the vocabulary")
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits")
    ctrl = MODALITY_CODE[Modality.CONTROL]
    if (codes[mask] == ctrl).any():
        raise InvalidArgument(
            "unmasked target with control modality; map end delimiters before the loss"
        )
    return logits, targets, codes, mask, single


def _log_softmax64(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    return x - lse


def trimodal_loss(
    logits: np.ndarray,
    targets: np.ndarray,
    target_modalities: np.ndarray,
    target_mask: np.ndarray,
    weights: LossWeights = LossWeights(),
    normalization: str = "per_sequence",
) -> LossBreakdown:
    """total = sum over modalities of lambda_m / n_m * (nll sum of m).

    Accepts one sequence (L, V) or a batch (B, L, V). In per_sequence
    mode each row is normalized by its own counts and the total is the
    batch mean; per_batch pools counts across rows first. The reported
    per-modality sums and counts always pool the whole input, including
    modalities whose weight is zero (their rows never touch the total).
    """
    if normalization not in ("per_sequence", "per_batch"):
        raise InvalidArgument(f"unknown normalization {normalization!r}")
    logits, targets, codes, mask, single = _as_batch(
        logits, targets, target_modalities, target_mask
    )
    if not mask.any():
        raise EmptyLossError("every target position is masked")
    b = logits.shape[0]
    logp = _log_softmax64(logits)
    nll = -np.take_along_axis(logp, targets[:, :, None], axis=2)[:, :, 0]

    report: dict[str, tuple[float, int]] = {}
    for name, code in _LOSS_MODALITIES:
        sel = mask & (codes == code)
        report[name] = (float(nll[sel].sum()), int(sel.sum()))

    total = 0.0
    if normalization == "per_batch":
        for name, code in _LOSS_MODALITIES:
            lam = weights.by_name(name)
            if lam == 0.0:
                continue
            s, n = report[name]
            if n:
                total += lam * s / n
    else:
        for r in range(b):
            row_total = 0.0
            for name, code in _LOSS_MODALITIES:
                lam = weights.by_name(name)
                if lam == 0.0:
                    continue
                sel = mask[r] & (codes[r] == code)
                n = int(sel.sum())
                if n:
                    row_total += lam * float(nll[r][sel].sum()) / n
            total += row_total
        total /= b
    return LossBreakdown(total=float(total), per_modality=report)


def loss_logit_grads(
    logits: np.ndarray,
    targets: np.ndarray,
    target_modalities: np.ndarray,
    target_mask: np.ndarray,
    weights: LossWeights = LossWeights(),
    normalization: str = "per_sequence",
) -> np.ndarray:
    """d(trimodal_loss)/d(logits), same shape as logits, float64.

    Unmasked position of modality m: (lambda_m / n_m) * (softmax - onehot),
    divided by the batch size in per_sequence mode. Masked rows and rows
    of zero-weight modalities are exactly zero.
    """
    if normalization not in ("per_sequence", "per_batch"):
        raise InvalidArgument(f"unknown normalization {normalization!r}")
    logits, targets, codes, mask, single = _as_batch(
        logits, targets, target_modalities, target_mask
    )
    if not mask.any():
        raise EmptyLossError("every target position is masked")
    b, l, v = logits.shape
    logp = _log_softmax64(logits)
    grads = np.zeros((b, l, v), dtype=np.float64)

    # Per-position coefficient lambda_m / n_m (with the batch mean folded in).
    coeff = np.zeros((b, l), dtype=np.float64)
    for name, code in _LOSS_MODALITIES:
        lam = weights.by_name(name)
        if lam == 0.0:
            continue
        sel = mask & (codes == code)
        if normalization == "per_batch":
            n = int(sel.sum())
            if n:
                coeff[sel] = lam / n
        else:
            counts = sel.sum(axis=1)
            for r in range(b):
                if counts[r]:
                    coeff[r, sel[r]] = lam / (counts[r] * b)

    active = coeff != 0.0
    if active.any():
        probs = np.exp(logp[active])
        rows = probs * coeff[active][:, None]
        onehot_vals = coeff[active]
        grads[active] = rows
        idx = np.nonzero(active)
        grads[idx[0], idx[1], targets[active]] -= onehot_vals
    return grads[0] if single else grads


# ---------------------------------------------------------------------------
# AdamW


@dataclass
class OptimizerState:
    lr: float = 5e-5
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        tensors: Mapping[str, np.ndarray],
        lr: float = 5e-5,
        weight_decay: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "OptimizerState":
        if lr <= 0 or weight_decay < 0:
            raise InvalidArgument("lr must be positive and weight decay nonnegative")
        return cls(
            lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps,
            m={k: np.zeros_like(t) for k, t in tensors.items()},
            v={k: np.zeros_like(t) for k, t in tensors.items()},
        )


def adamw_step(
    tensors: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Decay applies to matrices only (ndim >= 2); biases and norm
    gains/offsets are left undecayed.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in tensors.items():
        g = np.asarray(grads[name], dtype=p.dtype)
        if g.shape != p.shape:
            raise InvalidArgument(f"gradient for {name} has shape {g.shape}, want {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in tensor {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        upd = mhat / (np.sqrt(vhat) + state.eps)
        if state.weight_decay and p.ndim >= 2:
            upd = upd + state.weight_decay * p
        p -= state.lr * upd
