"""Sequence templates, target shifting, batching, dataset files."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dmlm import (
    InvalidArgument,
    InvalidToken,
    Modality,
    Supervision,
    TaskExample,
    TokenRun,
    batch_shift_targets,
    make_batch,
    pack,
    read_examples,
    shift_targets,
    unpack,
    write_examples,
)
from dmlm.tokenspace import MODALITY_CODE


def text_run(space, s):
    return TokenRun(space.encode_text(s).ids, Modality.TEXT)


def speech_run(space, ids):
    lo = space.speech_range[0]
    return TokenRun(np.asarray([lo + i for i in ids], dtype=np.int32), Modality.SPEECH)


def asr_example(space, speech_ids, text):
    return TaskExample(
        space.control_tokens["TASK_ASR"],
        speech_run(space, speech_ids),
        text_run(space, text),
        Supervision.SUPERVISED,
    )


class TestExampleValidation:
    def test_supervised_requires_both_runs(self, space30):
        empty = TokenRun(np.asarray([], dtype=np.int32), Modality.TEXT)
        with pytest.raises(InvalidArgument):
            TaskExample(space30.control_tokens["TASK_ASR"], empty,
                        text_run(space30, "x"), Supervision.SUPERVISED)

    def test_unsupervised_forbids_output(self, space30):
        with pytest.raises(InvalidArgument):
            TaskExample(space30.control_tokens["TASK_LM"],
                        text_run(space30, "a"), text_run(space30, "b"),
                        Supervision.UNSUPERVISED_LM)


class TestPack:
    def test_supervised_template(self, space30):
        ex = asr_example(space30, [4, 9], "ab")
        seq = pack(ex, space30)
        ids = seq.ids
        assert ids[0] == space30.control_tokens["TASK_ASR"]
        assert ids[3] == space30.control_tokens["END_SPEECH"]
        assert ids[-1] == space30.control_tokens["END_TEXT"]
        assert len(seq) == 1 + 2 + 1 + 2 + 1
        # raw labels: ends and the task tag are control
        ctrl = MODALITY_CODE[Modality.CONTROL]
        assert_array_equal(
            seq.modality_labels,
            [ctrl, MODALITY_CODE[Modality.SPEECH], MODALITY_CODE[Modality.SPEECH],
             ctrl, MODALITY_CODE[Modality.TEXT], MODALITY_CODE[Modality.TEXT], ctrl],
        )
        # only the task position is excluded from the loss
        assert_array_equal(seq.target_mask, [False, True, True, True, True, True, True])

    def test_unsupervised_template(self, space30):
        ex = TaskExample(space30.control_tokens["TASK_LM"],
                         text_run(space30, "hi"),
                         TokenRun(np.asarray([], dtype=np.int32), Modality.TEXT),
                         Supervision.UNSUPERVISED_LM)
        seq = pack(ex, space30)
        assert len(seq) == 4
        assert seq.ids[-1] == space30.control_tokens["END_TEXT"]

    def test_end_in_loss_flag(self, space30):
        ex = asr_example(space30, [0, 1], "ab")
        seq = pack(ex, space30, end_in_loss=False)
        assert_array_equal(seq.target_mask, [False, True, True, False, True, True, False])

    def test_non_task_token_rejected(self, space30):
        ex = asr_example(space30, [0], "a")
        object.__setattr__(ex, "task", space30.control_tokens["END_TEXT"])
        with pytest.raises(InvalidToken):
            pack(ex, space30)

    def test_roundtrip_through_unpack(self, space30, rng):
        for _ in range(25):
            n_in = int(rng.integers(1, 8))
            text_len = int(rng.integers(1, 10))
            word = "".join(space30.alphabet[int(c)]
                           for c in rng.integers(len(space30.alphabet), size=text_len))
            ex = asr_example(space30, rng.integers(0, 64, size=n_in).tolist(), word)
            assert unpack(pack(ex, space30), space30) == ex

    def test_unpack_rejects_misplaced_delimiter(self, space30):
        ex = asr_example(space30, [0], "a")
        seq = pack(ex, space30)
        ids = np.concatenate([seq.ids, space30.encode_text("x").ids])
        with pytest.raises(InvalidArgument):
            unpack(ids, space30)


class TestShiftTargets:
    def test_alignment_and_attribution(self, space30):
        ex = asr_example(space30, [2, 3], "yo")
        seq = pack(ex, space30)
        inputs, targets, codes, mask = shift_targets(seq, space30)
        assert_array_equal(inputs, seq.ids[:-1])
        assert_array_equal(targets, seq.ids[1:])
        # end delimiters take the modality they terminate
        sp = MODALITY_CODE[Modality.SPEECH]
        tx = MODALITY_CODE[Modality.TEXT]
        assert_array_equal(codes, [sp, sp, sp, tx, tx, tx])
        assert mask.all()  # task token fell off the target side

    def test_too_short_rejected(self, space30):
        seq = pack(asr_example(space30, [0], "a"), space30)
        short = type(seq)(ids=seq.ids[:1], modality_labels=seq.modality_labels[:1],
                          target_mask=seq.target_mask[:1], attention_len=1)
        with pytest.raises(InvalidArgument):
            shift_targets(short, space30)


class TestBatching:
    def test_padding_and_mask(self, space30):
        seqs = [pack(asr_example(space30, [0], "a"), space30),
                pack(asr_example(space30, [1, 2, 3], "abc"), space30)]
        batch = make_batch(seqs, space30.pad_id)
        assert batch.size == 2 and batch.length == len(seqs[1])
        assert (batch.ids[0, len(seqs[0]):] == space30.pad_id).all()
        assert not batch.target_mask[0, len(seqs[0]):].any()
        assert_array_equal(batch.attention_lens, [len(seqs[0]), len(seqs[1])])

    def test_batch_shift_matches_per_sequence(self, space30, rng):
        seqs = []
        for _ in range(6):
            n_in = int(rng.integers(1, 6))
            n_out = int(rng.integers(1, 6))
            word = "".join(space30.alphabet[int(c)]
                           for c in rng.integers(26, size=n_out))
            seqs.append(pack(asr_example(space30, rng.integers(0, 64, size=n_in).tolist(),
                                         word), space30))
        batch = make_batch(seqs, space30.pad_id)
        b_inputs, b_targets, b_codes, b_mask = batch_shift_targets(batch, space30)
        for r, seq in enumerate(seqs):
            inputs, targets, codes, mask = shift_targets(seq, space30)
            n = len(seq) - 1
            assert_array_equal(b_inputs[r, :n], inputs)
            assert_array_equal(b_targets[r, :n], targets)
            assert_array_equal(b_codes[r, :n], codes)
            assert_array_equal(b_mask[r, :n], mask)
            assert not b_mask[r, n:].any()

    def test_empty_batch_rejected(self, space30):
        with pytest.raises(InvalidArgument):
            make_batch([], space30.pad_id)


class TestDatasetFiles:
    def test_jsonl_roundtrip(self, tmp_path, space30):
        examples = [
            asr_example(space30, [5, 6, 7], "cat"),
            TaskExample(space30.control_tokens["TASK_LM"],
                        text_run(space30, "dog"),
                        TokenRun(np.asarray([], dtype=np.int32), Modality.TEXT),
                        Supervision.UNSUPERVISED_LM),
        ]
        path = tmp_path / "data.jsonl"
        write_examples(path, examples, space30)
        assert read_examples(path, space30) == examples

    def test_malformed_record_rejected(self, tmp_path, space30):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"task": "NOT_A_TASK"}\n')
        with pytest.raises(InvalidArgument):
            read_examples(path, space30)
