"""Unified discrete token vocabulary.

All modalities share one id space: contiguous text, speech, and image
ranges followed by a block of control tokens (task markers, end
delimiters, padding). Layout is deterministic given the three sizes, and
a text-only space occupies a prefix of any larger space built with the
same text size, which is what makes pretrained-embedding extension a
column-copy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EncodingError, InvalidArgument, InvalidToken


class Modality(Enum):
    TEXT = "text"
    SPEECH = "speech"
    IMAGE = "image"
    CONTROL = "control"


# Stable integer codes for array-valued modality labels.
MODALITY_CODE = {
    Modality.TEXT: 0,
    Modality.SPEECH: 1,
    Modality.IMAGE: 2,
    Modality.CONTROL: 3,
}
CODE_MODALITY = {v: k for k, v in MODALITY_CODE.items()}

TASK_NAMES = ("TASK_ASR", "TASK_T2S", "TASK_S2TT", "TASK_I2T", "TASK_LM")
END_NAMES = ("END_TEXT", "END_SPEECH", "END_IMAGE")
CONTROL_NAMES = TASK_NAMES + END_NAMES + ("PAD",)

END_MODALITY = {
    "END_TEXT": Modality.TEXT,
    "END_SPEECH": Modality.SPEECH,
    "END_IMAGE": Modality.IMAGE,
}

# Characters are assigned ids in this order from the start of the text
# range; spaces sit early so small text vocabularies keep word boundaries.
CANONICAL_ALPHABET = "abcdefghijklmnopqrstuvwxyz '0123456789"

# Default output modality of each task; TASK_LM is handled separately.
TASK_OUTPUT_MODALITY = {
    "TASK_ASR": Modality.TEXT,
    "TASK_T2S": Modality.SPEECH,
    "TASK_S2TT": Modality.TEXT,
    "TASK_I2T": Modality.TEXT,
}


@dataclass(frozen=True, eq=False)
class TokenRun:
    """A homogeneous run of token ids."""

    ids: np.ndarray
    modality: Modality

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int32)
        if ids.ndim != 1:
            raise InvalidArgument("token run ids must be one-dimensional")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenRun):
            return NotImplemented
        return self.modality is other.modality and np.array_equal(self.ids, other.ids)

    def __repr__(self) -> str:
        return f"TokenRun({self.modality.value}, n={len(self)})"


@dataclass(frozen=True)
class TokenSpace:
    """The unified vocabulary: disjoint per-modality ranges plus controls."""

    text_range: tuple[int, int]
    speech_range: tuple[int, int]
    image_range: tuple[int, int]
    control_tokens: dict[str, int]
    alphabet: str
    total_size: int

    # -- size helpers -------------------------------------------------

    @property
    def text_size(self) -> int:
        return self.text_range[1] - self.text_range[0]

    @property
    def speech_size(self) -> int:
        return self.speech_range[1] - self.speech_range[0]

    @property
    def image_size(self) -> int:
        return self.image_range[1] - self.image_range[0]

    def range_of(self, modality: Modality) -> tuple[int, int]:
        if modality is Modality.TEXT:
            return self.text_range
        if modality is Modality.SPEECH:
            return self.speech_range
        if modality is Modality.IMAGE:
            return self.image_range
        raise InvalidArgument("control tokens do not form a contiguous range")

    # -- classification ----------------------------------------------

    def classify(self, token_id: int) -> Modality:
        """The unique modality owning `token_id`."""
        i = int(token_id)
        if not 0 <= i < self.total_size:
            raise InvalidToken(f"token id {i} outside [0, {self.total_size})")
        if self.text_range[0] <= i < self.text_range[1]:
            return Modality.TEXT
        if self.speech_range[0] <= i < self.speech_range[1]:
            return Modality.SPEECH
        if self.image_range[0] <= i < self.image_range[1]:
            return Modality.IMAGE
        if i in self._control_ids:
            return Modality.CONTROL
        raise InvalidToken(f"token id {i} is unused")

    def modality_codes(self, ids: np.ndarray) -> np.ndarray:
        """Vectorized `classify`, returning int8 codes."""
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.total_size):
            bad = ids[(ids < 0) | (ids >= self.total_size)][0]
            raise InvalidToken(f"token id {int(bad)} outside [0, {self.total_size})")
        codes = np.full(ids.shape, MODALITY_CODE[Modality.CONTROL], dtype=np.int8)
        for modality in (Modality.TEXT, Modality.SPEECH, Modality.IMAGE):
            lo, hi = self.range_of(modality)
            codes[(ids >= lo) & (ids < hi)] = MODALITY_CODE[modality]
        return codes

    @property
    def _control_ids(self) -> frozenset[int]:
        return frozenset(self.control_tokens.values())

    def control_name(self, token_id: int) -> str:
        for name, tid in self.control_tokens.items():
            if tid == int(token_id):
                return name
        raise InvalidToken(f"token id {int(token_id)} is not a control token")

    def is_task(self, token_id: int) -> bool:
        return int(token_id) in {self.control_tokens[n] for n in TASK_NAMES}

    def end_token(self, modality: Modality) -> int:
        """The end delimiter terminating a run of `modality`."""
        name = {
            Modality.TEXT: "END_TEXT",
            Modality.SPEECH: "END_SPEECH",
            Modality.IMAGE: "END_IMAGE",
        }.get(modality)
        if name is None:
            raise InvalidArgument("control runs have no end delimiter")
        return self.control_tokens[name]

    @property
    def pad_id(self) -> int:
        return self.control_tokens["PAD"]

    def loss_modality(self, token_id: int) -> Modality:
        """Modality a token counts toward in the loss.

        End delimiters inherit the modality they terminate; everything
        else keeps its own modality.
        """
        m = self.classify(token_id)
        if m is Modality.CONTROL:
            name = self.control_name(token_id)
            if name in END_MODALITY:
                return END_MODALITY[name]
        return m

    # -- text codec ----------------------------------------------------

    def encode_text(self, s: str) -> TokenRun:
        """One token per character; inverse of `decode_text`."""
        t0 = self.text_range[0]
        index = self._char_index
        ids = np.empty(len(s), dtype=np.int32)
        for pos, ch in enumerate(s):
            idx = index.get(ch)
            if idx is None:
                raise EncodingError(
                    f"character {ch!r} at position {pos} is not in the alphabet"
                )
            ids[pos] = t0 + idx
        return TokenRun(ids, Modality.TEXT)

    def decode_text(self, run: TokenRun) -> str:
        if run.modality is not Modality.TEXT:
            raise InvalidArgument(f"expected a text run, got {run.modality.value}")
        t0 = self.text_range[0]
        chars = []
        for i in run.ids:
            idx = int(i) - t0
            if not 0 <= idx < len(self.alphabet):
                raise InvalidToken(f"text token id {int(i)} has no character")
            chars.append(self.alphabet[idx])
        return "".join(chars)

    @property
    def _char_index(self) -> dict[str, int]:
        cached = getattr(self, "_char_index_cache", None)
        if cached is None:
            cached = {ch: i for i, ch in enumerate(self.alphabet)}
            object.__setattr__(self, "_char_index_cache", cached)
        return cached

    # -- validation ----------------------------------------------------

    def validate_run(self, run: TokenRun) -> None:
        """Every id must lie in the range of the run's modality."""
        if run.modality is Modality.CONTROL:
            bad = [int(i) for i in run.ids if int(i) not in self._control_ids]
            if bad:
                raise InvalidToken(f"id {bad[0]} is not a control token")
            return
        lo, hi = self.range_of(run.modality)
        if len(run) and (run.ids.min() < lo or run.ids.max() >= hi):
            bad = run.ids[(run.ids < lo) | (run.ids >= hi)][0]
            raise InvalidToken(
                f"id {int(bad)} outside the {run.modality.value} range [{lo}, {hi})"
            )

    # -- manifest ------------------------------------------------------

    def to_manifest(self) -> dict:
        return {
            "text_range": list(self.text_range),
            "speech_range": list(self.speech_range),
            "image_range": list(self.image_range),
            "control_tokens": dict(self.control_tokens),
            "alphabet": self.alphabet,
            "total_size": self.total_size,
        }

    @classmethod
    def from_manifest(cls, manifest: Mapping) -> "TokenSpace":
        try:
            return cls(
                text_range=tuple(manifest["text_range"]),
                speech_range=tuple(manifest["speech_range"]),
                image_range=tuple(manifest["image_range"]),
                control_tokens={k: int(v) for k, v in manifest["control_tokens"].items()},
                alphabet=manifest["alphabet"],
                total_size=int(manifest["total_size"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed token-space manifest: {exc}") from exc


def build_token_space(
    text_vocab_size: int,
    speech_vocab_size: int,
    image_vocab_size: int,
    alphabet: str | None = None,
) -> TokenSpace:
    """Lay out the unified vocabulary: text, speech, image, then controls.

    Text needs at least one id; speech and image may be empty. The layout
    is a pure function of the sizes, so a (t, 0, 0) space is the exact
    prefix-plus-controls layout a later (t, s, i) space extends.
    """
    if text_vocab_size < 1:
        raise InvalidArgument(f"text vocabulary size must be >= 1, got {text_vocab_size}")
    if speech_vocab_size < 0 or image_vocab_size < 0:
        raise InvalidArgument("vocabulary sizes must not be negative")
    if alphabet is None:
        alphabet = CANONICAL_ALPHABET[: min(text_vocab_size, len(CANONICAL_ALPHABET))]
    if len(set(alphabet)) != len(alphabet):
        raise InvalidArgument("alphabet contains duplicate characters")
    if len(alphabet) > text_vocab_size:
        raise InvalidArgument(
            f"alphabet has {len(alphabet)} characters but the text range holds "
            f"only {text_vocab_size}"
        )
    t0 = 0
    t1 = t0 + text_vocab_size
    s1 = t1 + speech_vocab_size
    i1 = s1 + image_vocab_size
    controls = {name: i1 + k for k, name in enumerate(CONTROL_NAMES)}
    return TokenSpace(
        text_range=(t0, t1),
        speech_range=(t1, s1),
        image_range=(s1, i1),
        control_tokens=controls,
        alphabet=alphabet,
        total_size=i1 + len(CONTROL_NAMES),
    )


def save_manifest(space: TokenSpace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(space.to_manifest(), indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> TokenSpace:
    return TokenSpace.from_manifest(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Synthetic speech codec


@dataclass(frozen=True)
class SyntheticSpeechCodec:
    """Deterministic text-to-speech-token codec for synthetic corpora.

    Each text token expands to a fixed k-tuple of speech tokens; with
    substitution noise p, each emitted token is independently replaced by
    a uniform speech token. Noise draws are a pure function of (seed,
    input ids), so repeated calls agree. With p = 0 the map is injective
    and exactly invertible.
    """

    expansion_factor: int
    noise: float
    seed: int
    alphabet_map: dict[int, tuple[int, ...]]
    text_range: tuple[int, int]
    speech_range: tuple[int, int]

    def __post_init__(self):
        if self.expansion_factor < 1:
            raise InvalidArgument("expansion factor must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise InvalidArgument("substitution noise must be a probability")
        tuples = list(self.alphabet_map.values())
        if any(len(t) != self.expansion_factor for t in tuples):
            raise InvalidArgument("alphabet map tuples must have length k")
        if len(set(tuples)) != len(tuples):
            raise InvalidArgument("alphabet map must be injective")

    @classmethod
    def create(
        cls,
        space: TokenSpace,
        expansion_factor: int,
        noise: float = 0.0,
        seed: int = 0,
    ) -> "SyntheticSpeechCodec":
        """Draw a random injective map over the space's alphabet."""
        if space.speech_size < 1:
            raise InvalidArgument("token space has an empty speech range")
        if space.speech_size ** expansion_factor < len(space.alphabet):
            raise InvalidArgument(
                "speech range too small for an injective map at this expansion factor"
            )
        rng = np.random.default_rng([seed, 0x5EEC])
        lo, hi = space.speech_range
        mapping: dict[int, tuple[int, ...]] = {}
        used: set[tuple[int, ...]] = set()
        t0 = space.text_range[0]
        for i in range(len(space.alphabet)):
            while True:
                tup = tuple(int(v) for v in rng.integers(lo, hi, size=expansion_factor))
                if tup not in used:
                    used.add(tup)
                    break
            mapping[t0 + i] = tup
        return cls(
            expansion_factor=expansion_factor,
            noise=noise,
            seed=seed,
            alphabet_map=mapping,
            text_range=space.text_range,
            speech_range=space.speech_range,
        )

    def encode(self, text_run: TokenRun) -> TokenRun:
        """Expand a text run into speech tokens, applying substitution noise."""
        if text_run.modality is not Modality.TEXT:
            raise InvalidArgument(
                f"codec encodes text runs, got {text_run.modality.value}"
            )
        out = np.empty(len(text_run) * self.expansion_factor, dtype=np.int32)
        k = self.expansion_factor
        for pos, tid in enumerate(text_run.ids):
            tup = self.alphabet_map.get(int(tid))
            if tup is None:
                raise InvalidToken(f"text token id {int(tid)} not covered by the codec")
            out[pos * k : (pos + 1) * k] = tup
        if self.noise > 0.0 and out.size:
            rng = np.random.default_rng([self.seed, 1, *[int(i) for i in text_run.ids]])
            hit = rng.random(out.size) < self.noise
            repl = rng.integers(self.speech_range[0], self.speech_range[1], size=out.size)
            out[hit] = repl[hit]
        return TokenRun(out, Modality.SPEECH)

    def decode(self, speech_run: TokenRun, strict: bool = True) -> TokenRun:
        """Invert `encode`. Exact for p = 0 output; otherwise nearest tuple.

        In non-strict mode, unknown k-tuples map to the alphabet entry
        with the highest positionwise agreement (lowest text id on ties)
        and a trailing partial tuple is dropped.
        """
        if speech_run.modality is not Modality.SPEECH:
            raise InvalidArgument(
                f"codec decodes speech runs, got {speech_run.modality.value}"
            )
        k = self.expansion_factor
        n = len(speech_run)
        if n % k != 0:
            if strict:
                raise InvalidArgument(
                    f"speech run length {n} is not a multiple of the expansion factor {k}"
                )
            n -= n % k
        inverse = self._inverse_map
        text_ids = []
        for pos in range(0, n, k):
            tup = tuple(int(v) for v in speech_run.ids[pos : pos + k])
            tid = inverse.get(tup)
            if tid is None:
                if strict:
                    raise InvalidToken(f"speech tuple {tup} has no inverse")
                tid = self._nearest_tuple(tup)
            text_ids.append(tid)
        return TokenRun(np.asarray(text_ids, dtype=np.int32), Modality.TEXT)

    @property
    def _inverse_map(self) -> dict[tuple[int, ...], int]:
        cached = getattr(self, "_inverse_cache", None)
        if cached is None:
            cached = {tup: tid for tid, tup in self.alphabet_map.items()}
            object.__setattr__(self, "_inverse_cache", cached)
        return cached

    def _nearest_tuple(self, tup: tuple[int, ...]) -> int:
        best_tid, best_score = None, -1
        for tid in sorted(self.alphabet_map):
            score = sum(a == b for a, b in zip(self.alphabet_map[tid], tup))
            if score > best_score:
                best_tid, best_score = tid, score
        return best_tid

    def to_json(self) -> dict:
        return {
            "expansion_factor": self.expansion_factor,
            "noise": self.noise,
            "seed": self.seed,
            "alphabet_map": {str(k): list(v) for k, v in self.alphabet_map.items()},
            "text_range": list(self.text_range),
            "speech_range": list(self.speech_range),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SyntheticSpeechCodec":
        return cls(
            expansion_factor=int(obj["expansion_factor"]),
            noise=float(obj["noise"]),
            seed=int(obj["seed"]),
            alphabet_map={
                int(k): tuple(int(x) for x in v) for k, v in obj["alphabet_map"].items()
            },
            text_range=tuple(obj["text_range"]),
            speech_range=tuple(obj["speech_range"]),
        )


def save_codec(codec: SyntheticSpeechCodec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(codec.to_json(), indent=2, sort_keys=True) + "\n")


def load_codec(path: str | Path) -> SyntheticSpeechCodec:
    return SyntheticSpeechCodec.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Token runs on disk: JSONL, one object per run.


def write_token_runs(path: str | Path, runs: Iterable[TokenRun]) -> None:
    with open(path, "w") as fh:
        for run in runs:
            fh.write(
                json.dumps({"modality": run.modality.value, "ids": run.ids.tolist()})
                + "\n"
            )


def read_token_runs(path: str | Path, space: TokenSpace | None = None) -> list[TokenRun]:
    """Read one run per line.

    Accepts bare runs ({"ids", "modality"}) as written by write_token_runs,
    and dataset rows ({"input_ids", "input_modality", ...}), from which the
    input side is taken. The two forms can be mixed in one file.
    """
    runs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if "ids" in obj:
            ids, modality = obj["ids"], obj["modality"]
        elif "input_ids" in obj:
            ids, modality = obj["input_ids"], obj["input_modality"]
        else:
            raise ValueError(
                f"{path}:{lineno}: expected a token run with 'ids' and "
                "'modality' or a dataset row with 'input_ids' and "
                "'input_modality'"
            )
        run = TokenRun(np.asarray(ids, dtype=np.int32), Modality(modality))
        if space is not None:
            space.validate_run(run)
        runs.append(run)
    return runs
