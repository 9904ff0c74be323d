"""Synthetic corpora for the experiment recipes.

Sentences are short strings of dictionary words over the text alphabet.
Speech comes either from the deterministic synthetic codec (each text
token expands to a k-tuple of speech tokens, optionally noised) or from
continuous frame features quantized by a fitted codebook. Two feature
families exist: "clustered" frames carry their character identity with
small within-class noise, "agnostic" frames bury the same identity under
dominant isotropic noise, so a codebook fit on them tokenizes mostly
noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgument
from .seqfmt import Supervision, TaskExample
from .tokenspace import Modality, SyntheticSpeechCodec, TokenRun, TokenSpace

FEATURE_FAMILIES = ("clustered", "agnostic")


def lexicon_chars(space: TokenSpace) -> str:
    letters = [c for c in space.alphabet if c.isalpha()]
    if not letters:
        raise InvalidArgument("alphabet has no letters to build words from")
    return "".join(letters)


def make_lexicon(
    space: TokenSpace,
    n_words: int,
    seed: int,
    word_len: tuple[int, int] = (2, 5),
) -> list[str]:
    """Distinct random words over the alphabet's letters."""
    rng = np.random.default_rng([seed, 0x1E81C0])
    chars = lexicon_chars(space)
    lo, hi = word_len
    if lo < 1 or hi < lo:
        raise InvalidArgument("word length bounds must satisfy 1 <= lo <= hi")
    words: list[str] = []
    seen: set[str] = set()
    guard = 0
    while len(words) < n_words:
        guard += 1
        if guard > 1000 * n_words:
            raise InvalidArgument(
                f"cannot draw {n_words} distinct words of length {lo}..{hi} "
                f"over {len(chars)} letters"
            )
        n = int(rng.integers(lo, hi + 1))
        w = "".join(chars[int(i)] for i in rng.integers(len(chars), size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_sentences(
    lexicon: Sequence[str],
    n: int,
    seed: int,
    words_per_sentence: tuple[int, int] = (2, 5),
) -> list[str]:
    rng = np.random.default_rng([seed, 0x5E27])
    lo, hi = words_per_sentence
    if lo < 1 or hi < lo:
        raise InvalidArgument("sentence length bounds must satisfy 1 <= lo <= hi")
    out = []
    for _ in range(n):
        k = int(rng.integers(lo, hi + 1))
        out.append(" ".join(lexicon[int(i)] for i in rng.integers(len(lexicon), size=k)))
    return out


def split3(items: Sequence, fractions=(0.8, 0.1, 0.1)) -> tuple[list, list, list]:
    """Deterministic contiguous train/dev/test split."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) <= 0:
        raise InvalidArgument("need three nonnegative fractions with positive sum")
    total = sum(fractions)
    n = len(items)
    n_train = int(round(n * fractions[0] / total))
    n_dev = int(round(n * fractions[1] / total))
    n_train = min(n_train, n)
    n_dev = min(n_dev, n - n_train)
    items = list(items)
    return (
        items[:n_train],
        items[n_train : n_train + n_dev],
        items[n_train + n_dev :],
    )


# ---------------------------------------------------------------------------
# Codec-backed datasets


def asr_examples(
    space: TokenSpace, codec: SyntheticSpeechCodec, sentences: Sequence[str]
) -> list[TaskExample]:
    out = []
    task = space.control_tokens["TASK_ASR"]
    for s in sentences:
        text = space.encode_text(s)
        out.append(TaskExample(task, codec.encode(text), text, Supervision.SUPERVISED))
    return out


def t2s_examples(
    space: TokenSpace, codec: SyntheticSpeechCodec, sentences: Sequence[str]
) -> list[TaskExample]:
    out = []
    task = space.control_tokens["TASK_T2S"]
    for s in sentences:
        text = space.encode_text(s)
        out.append(TaskExample(task, text, codec.encode(text), Supervision.SUPERVISED))
    return out


def text_lm_examples(space: TokenSpace, sentences: Sequence[str]) -> list[TaskExample]:
    task = space.control_tokens["TASK_LM"]
    empty = TokenRun(np.asarray([], dtype=np.int32), Modality.TEXT)
    return [
        TaskExample(task, space.encode_text(s), empty, Supervision.UNSUPERVISED_LM)
        for s in sentences
    ]


def speech_lm_examples(
    space: TokenSpace, codec: SyntheticSpeechCodec, sentences: Sequence[str]
) -> list[TaskExample]:
    task = space.control_tokens["TASK_LM"]
    empty = TokenRun(np.asarray([], dtype=np.int32), Modality.SPEECH)
    out = []
    for s in sentences:
        speech = codec.encode(space.encode_text(s))
        out.append(TaskExample(task, speech, empty, Supervision.UNSUPERVISED_LM))
    return out


# ---------------------------------------------------------------------------
# Continuous frame features


@dataclass
class FeatureCorpus:
    frames: np.ndarray  # (N, dim) float32, utterances concatenated
    utterances: list[dict]  # {"text": str, "start": int, "end": int}

    def save(self, feat_path: str | Path, utt_path: str | Path) -> None:
        from .codebook import write_features

        write_features(feat_path, self.frames)
        with open(utt_path, "w") as fh:
            for u in self.utterances:
                fh.write(json.dumps(u, sort_keys=True) + "\n")

    @classmethod
    def load(cls, feat_path: str | Path, utt_path: str | Path) -> "FeatureCorpus":
        from .codebook import read_features

        frames = read_features(feat_path)
        utts = [
            json.loads(line)
            for line in Path(utt_path).read_text().splitlines()
            if line.strip()
        ]
        return cls(frames=frames, utterances=utts)


def make_feature_corpus(
    space: TokenSpace,
    sentences: Sequence[str],
    dim: int,
    family: str,
    seed: int,
    frames_per_char: int = 3,
) -> FeatureCorpus:
    """Per-character Gaussian frames, `frames_per_char` per character.

    Both families share the same per-character class centers; they differ
    only in the signal-to-noise ratio, so the clustered family's frames
    are separable by character while the agnostic family's are not.
    """
    if family not in FEATURE_FAMILIES:
        raise InvalidArgument(f"unknown feature family {family!r}")
    if dim < 1 or frames_per_char < 1:
        raise InvalidArgument("dim and frames_per_char must be positive")
    rng = np.random.default_rng([seed, 0xFEA7])
    centers = rng.normal(0.0, 1.0, size=(len(space.alphabet), dim))
    if family == "clustered":
        signal, noise = 1.0, 0.05
    else:
        signal, noise = 0.05, 1.0
    index = {ch: i for i, ch in enumerate(space.alphabet)}
    chunks = []
    utterances = []
    start = 0
    for s in sentences:
        rows = len(s) * frames_per_char
        eps = rng.normal(0.0, 1.0, size=(rows, dim))
        base = np.repeat(
            centers[[index[ch] for ch in s]], frames_per_char, axis=0
        )
        chunks.append(signal * base + noise * eps)
        utterances.append({"text": s, "start": start, "end": start + rows})
        start += rows
    frames = (
        np.concatenate(chunks).astype(np.float32)
        if chunks
        else np.zeros((0, dim), dtype=np.float32)
    )
    return FeatureCorpus(frames=frames, utterances=utterances)


def examples_from_labels(
    space: TokenSpace,
    corpus_utterances: Sequence[dict],
    labels: np.ndarray,
    task_name: str = "TASK_ASR",
) -> list[TaskExample]:
    """Turn codebook assignments into supervised speech→text examples.

    Each utterance's frame labels become speech token ids by offsetting
    into the speech range; the stored text is the reference output.
    """
    labels = np.asarray(labels, dtype=np.int64)
    lo, hi = space.speech_range
    if labels.size and labels.max() >= hi - lo:
        raise InvalidArgument(
            f"codebook index {int(labels.max())} does not fit a speech range of "
            f"size {hi - lo}"
        )
    task = space.control_tokens[task_name]
    out = []
    for u in corpus_utterances:
        ids = (lo + labels[int(u["start"]) : int(u["end"])]).astype(np.int32)
        speech = TokenRun(ids, Modality.SPEECH)
        text = space.encode_text(u["text"])
        if task_name == "TASK_LM":
            out.append(TaskExample(
                task, speech, TokenRun(np.asarray([], dtype=np.int32), Modality.SPEECH),
                Supervision.UNSUPERVISED_LM,
            ))
        else:
            out.append(TaskExample(task, speech, text, Supervision.SUPERVISED))
    return out
