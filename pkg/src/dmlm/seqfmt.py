"""Task-formatted sequences and batching.

Supervised examples pack as [task, input tokens, EndA, output tokens,
EndB]; unsupervised language-model examples pack as [TASK_LM, tokens,
End]. Every non-task, non-pad position is a training target; end
delimiters count toward the modality they terminate, since the decoder
must learn to emit them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidToken
from .tokenspace import (
    MODALITY_CODE,
    Modality,
    TokenRun,
    TokenSpace,
)


class Supervision(Enum):
    SUPERVISED = "supervised"
    UNSUPERVISED_LM = "unsupervised_lm"


@dataclass(frozen=True)
class TaskExample:
    """One training example: a task id, an input run, an optional output run."""

    task: int
    input: TokenRun
    output: TokenRun
    supervision: Supervision

    def __post_init__(self):
        if self.supervision is Supervision.SUPERVISED:
            if len(self.input) == 0 or len(self.output) == 0:
                raise InvalidArgument("supervised examples need nonempty input and output")
        else:
            if len(self.output) != 0:
                raise InvalidArgument("unsupervised examples must have an empty output")


@dataclass(frozen=True)
class PackedSequence:
    """A formatted sequence plus per-position bookkeeping.

    modality_labels carry the raw range classification of each id (so end
    delimiters and the task token are labeled control); loss attribution
    happens later, at target shift time. target_mask marks positions that
    participate in the loss when they appear as prediction targets.
    """

    ids: np.ndarray  # (L,) int32
    modality_labels: np.ndarray  # (L,) int8 codes into MODALITY_CODE
    target_mask: np.ndarray  # (L,) bool
    attention_len: int

    def __len__(self) -> int:
        return int(self.ids.shape[0])


@dataclass(frozen=True)
class Batch:
    ids: np.ndarray  # (B, L) int32, right-padded
    modality_labels: np.ndarray  # (B, L) int8
    target_mask: np.ndarray  # (B, L) bool, false on padding
    attention_lens: np.ndarray  # (B,) int64

    @property
    def size(self) -> int:
        return int(self.ids.shape[0])

    @property
    def length(self) -> int:
        return int(self.ids.shape[1])


def pack(example: TaskExample, space: TokenSpace, end_in_loss: bool = True) -> PackedSequence:
    """Assemble [task, input, EndA, output, EndB] (or the LM variant).

    With end_in_loss false, the end delimiters are excluded from the
    target mask instead of inheriting their segment's modality.
    """
    if not space.is_task(example.task):
        raise InvalidToken(f"id {example.task} is not a task token")
    space.validate_run(example.input)
    space.validate_run(example.output)
    end_a = space.end_token(example.input.modality)
    parts = [np.asarray([example.task], dtype=np.int32), example.input.ids,
             np.asarray([end_a], dtype=np.int32)]
    end_positions = [1 + len(example.input)]
    if example.supervision is Supervision.SUPERVISED:
        end_b = space.end_token(example.output.modality)
        parts.append(example.output.ids)
        parts.append(np.asarray([end_b], dtype=np.int32))
        end_positions.append(2 + len(example.input) + len(example.output))
    ids = np.concatenate(parts)
    mask = np.ones(ids.shape[0], dtype=bool)
    mask[0] = False
    if not end_in_loss:
        mask[end_positions] = False
    return PackedSequence(
        ids=ids,
        modality_labels=space.modality_codes(ids),
        target_mask=mask,
        attention_len=int(ids.shape[0]),
    )


def unpack(seq: PackedSequence | np.ndarray, space: TokenSpace) -> TaskExample:
    """Invert `pack` on an unpadded sequence."""
    ids = seq.ids if isinstance(seq, PackedSequence) else np.asarray(seq, dtype=np.int32)
    if ids.shape[0] < 2:
        raise InvalidArgument("packed sequences have at least a task and one delimiter")
    task = int(ids[0])
    if not space.is_task(task):
        raise InvalidToken(f"leading id {task} is not a task token")
    end_ids = {space.end_token(m) for m in (Modality.TEXT, Modality.SPEECH, Modality.IMAGE)}
    ends = np.flatnonzero(np.asarray([int(i) in end_ids for i in ids]))
    if len(ends) == 1:
        if ends[0] != ids.shape[0] - 1:
            raise InvalidArgument("lone end delimiter must terminate the sequence")
        run_ids = ids[1 : ends[0]]
        modality = space.loss_modality(int(ids[ends[0]]))
        run = TokenRun(run_ids, modality)
        space.validate_run(run)
        return TaskExample(task, run, TokenRun(np.asarray([], dtype=np.int32), modality),
                           Supervision.UNSUPERVISED_LM)
    if len(ends) == 2:
        a, b = int(ends[0]), int(ends[1])
        if b != ids.shape[0] - 1:
            raise InvalidArgument("second end delimiter must terminate the sequence")
        in_run = TokenRun(ids[1:a], space.loss_modality(int(ids[a])))
        out_run = TokenRun(ids[a + 1 : b], space.loss_modality(int(ids[b])))
        space.validate_run(in_run)
        space.validate_run(out_run)
        return TaskExample(task, in_run, out_run, Supervision.SUPERVISED)
    raise InvalidArgument(f"expected 1 or 2 end delimiters, found {len(ends)}")


def shift_targets(
    seq: PackedSequence, space: TokenSpace
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Next-token view: (inputs, targets, target_modality_codes, target_mask).

    Targets are the ids shifted left by one. Each loss term is attributed
    to the modality of its TARGET token, with end delimiters mapped to
    the modality they terminate. The mask row is the packed mask aligned
    to targets; the task position falls off the front by construction.
    """
    if len(seq) < 2:
        raise InvalidArgument("need at least 2 tokens to form a prediction pair")
    inputs = seq.ids[:-1]
    targets = seq.ids[1:]
    mask = seq.target_mask[1:].copy()
    codes = np.empty(targets.shape[0], dtype=np.int8)
    for j, tid in enumerate(targets):
        codes[j] = MODALITY_CODE[space.loss_modality(int(tid))]
    return inputs, targets, codes, mask


def make_batch(sequences: Sequence[PackedSequence], pad_id: int) -> Batch:
    """Right-pad to the longest sequence; padding never enters the loss."""
    if not sequences:
        raise InvalidArgument("cannot batch zero sequences")
    longest = max(len(s) for s in sequences)
    b = len(sequences)
    ids = np.full((b, longest), pad_id, dtype=np.int32)
    labels = np.full((b, longest), MODALITY_CODE[Modality.CONTROL], dtype=np.int8)
    mask = np.zeros((b, longest), dtype=bool)
    lens = np.empty(b, dtype=np.int64)
    for r, s in enumerate(sequences):
        n = len(s)
        ids[r, :n] = s.ids
        labels[r, :n] = s.modality_labels
        mask[r, :n] = s.target_mask
        lens[r] = s.attention_len
    return Batch(ids=ids, modality_labels=labels, target_mask=mask, attention_lens=lens)


def batch_shift_targets(
    batch: Batch, space: TokenSpace
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched `shift_targets` over padded rows.

    Padding contributes mask-false columns, so the extra positions are
    inert in the loss. Returns (inputs, targets, target_modality_codes,
    target_mask), each of shape (B, L-1).
    """
    if batch.length < 2:
        raise InvalidArgument("need at least 2 columns to form prediction pairs")
    inputs = batch.ids[:, :-1]
    targets = batch.ids[:, 1:]
    mask = batch.target_mask[:, 1:].copy()
    # Column 0 of the mask belongs to the task token in every row; it is
    # already false from pack(). Rows shorter than the batch keep false
    # masks over their padding.
    codes = _loss_modality_codes(targets, space)
    return inputs, targets, codes, mask


def _loss_modality_codes(ids: np.ndarray, space: TokenSpace) -> np.ndarray:
    """Vectorized loss-modality attribution: ranges, then end-delimiter fixups."""
    codes = space.modality_codes(ids)
    for m in (Modality.TEXT, Modality.SPEECH, Modality.IMAGE):
        codes[ids == space.end_token(m)] = MODALITY_CODE[m]
    return codes


# ---------------------------------------------------------------------------
# Dataset files: JSONL, one TaskExample per line.


def example_to_json(example: TaskExample, space: TokenSpace) -> dict:
    return {
        "task": space.control_name(example.task),
        "supervision": example.supervision.value,
        "input_modality": example.input.modality.value,
        "input_ids": example.input.ids.tolist(),
        "output_modality": example.output.modality.value,
        "output_ids": example.output.ids.tolist(),
    }


def example_from_json(obj: dict, space: TokenSpace) -> TaskExample:
    try:
        task = space.control_tokens[obj["task"]]
        supervision = Supervision(obj["supervision"])
        inp = TokenRun(np.asarray(obj["input_ids"], dtype=np.int32),
                       Modality(obj["input_modality"]))
        out = TokenRun(np.asarray(obj["output_ids"], dtype=np.int32),
                       Modality(obj["output_modality"]))
    except (KeyError, ValueError) as exc:
        raise InvalidArgument(f"malformed example record: {exc}") from exc
    space.validate_run(inp)
    space.validate_run(out)
    return TaskExample(task, inp, out, supervision)


def write_examples(path: str | Path, examples: Iterable[TaskExample], space: TokenSpace) -> None:
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_json(ex, space)) + "\n")


def read_examples(path: str | Path, space: TokenSpace) -> list[TaskExample]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(example_from_json(json.loads(line), space))
    return out
