"""Greedy decoding, evaluation aggregation, training loop, lambda search."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dmlm import (
    InvalidArgument,
    LossWeights,
    MixComponent,
    ModelConfig,
    Modality,
    SearchSpec,
    Supervision,
    TaskExample,
    TokenRun,
    TrainConfig,
    edit_distance,
    evaluate,
    generate,
    generate_many,
    init_random,
    init_zero,
    lambda_search,
    metric_improved,
    pack,
    sample_components,
    train,
    trimodal_loss,
    worst_value,
)
from dmlm.seqfmt import batch_shift_targets, make_batch
from dmlm.net import forward


def small_model(space, seed=0, d=16, layers=1):
    cfg = ModelConfig(d_model=d, n_layers=layers, n_heads=2, d_ff=4 * d,
                      max_seq_len=128, vocab_size=space.total_size)
    return init_random(cfg, seed=seed)


def asr_examples_for(space, codec, texts):
    out = []
    for t in texts:
        text_run = space.encode_text(t)
        out.append(TaskExample(space.control_tokens["TASK_ASR"],
                               codec.encode(text_run), text_run,
                               Supervision.SUPERVISED))
    return out


def lm_examples_for(space, texts):
    empty = TokenRun(np.asarray([], dtype=np.int32), Modality.TEXT)
    return [TaskExample(space.control_tokens["TASK_LM"], space.encode_text(t),
                        empty, Supervision.UNSUPERVISED_LM) for t in texts]


class TestGenerate:
    def test_masked_decode_stays_in_modality(self, space30, clean_codec):
        params = small_model(space30, seed=1)
        ex = asr_examples_for(space30, clean_codec, ["hello there"])[0]
        result = generate(params, space30, ex.task, ex.input, max_new=12)
        lo, hi = space30.text_range
        assert ((result.output.ids >= lo) & (result.output.ids < hi)).all()
        assert result.output.modality is Modality.TEXT

    def test_zero_model_exhausts_budget(self, space30, clean_codec):
        # all-zero weights give uniform logits; the masked argmax picks the
        # lowest allowed id every step and never emits the end token
        params = init_zero(ModelConfig(d_model=16, n_layers=1, n_heads=2,
                                       d_ff=64, max_seq_len=128,
                                       vocab_size=space30.total_size))
        ex = asr_examples_for(space30, clean_codec, ["hi"])[0]
        result = generate(params, space30, ex.task, ex.input, max_new=7)
        assert result.truncated
        assert_array_equal(result.output.ids, [space30.text_range[0]] * 7)

    def test_generate_many_matches_row_wise(self, space30, clean_codec, rng):
        params = small_model(space30, seed=2)
        texts = ["abc", "de", "fgh ij", "k"]
        exs = asr_examples_for(space30, clean_codec, texts)
        grouped = generate_many(params, space30, [e.task for e in exs],
                                [e.input for e in exs], max_new=9)
        for e, g in zip(exs, grouped):
            solo = generate(params, space30, e.task, e.input, max_new=9)
            assert g.output == solo.output
            assert g.truncated == solo.truncated

    def test_deterministic(self, space30, clean_codec):
        params = small_model(space30, seed=3)
        ex = asr_examples_for(space30, clean_codec, ["again"])[0]
        a = generate(params, space30, ex.task, ex.input, max_new=6)
        b = generate(params, space30, ex.task, ex.input, max_new=6)
        assert a.output == b.output

    def test_lm_task_continues_input_modality(self, space30):
        params = small_model(space30, seed=4)
        run = space30.encode_text("abc")
        result = generate(params, space30, space30.control_tokens["TASK_LM"],
                          run, max_new=5)
        assert result.output.modality is Modality.TEXT

    def test_overlong_prefix_rejected(self, space30):
        params = small_model(space30, seed=5)
        run = TokenRun(np.zeros(130, dtype=np.int32), Modality.TEXT)
        with pytest.raises(InvalidArgument):
            generate(params, space30, space30.control_tokens["TASK_LM"], run, 4)

    def test_max_new_zero_emits_nothing(self, space30, clean_codec):
        params = small_model(space30, seed=6)
        ex = asr_examples_for(space30, clean_codec, ["x"])[0]
        result = generate(params, space30, ex.task, ex.input, max_new=0)
        assert len(result.output) == 0
        assert result.truncated


class TestMetricDirection:
    def test_lower_is_better_for_error_rates(self):
        assert metric_improved(0.1, 0.2, "wer")
        assert not metric_improved(0.3, 0.2, "cer")
        assert metric_improved(0.0, 0.0, "loss") is False

    def test_higher_is_better_for_bleu(self):
        assert metric_improved(30.0, 20.0, "bleu4")
        assert not metric_improved(10.0, 20.0, "bleu4")

    def test_worst_values(self):
        assert worst_value("wer") == np.inf
        assert worst_value("bleu4") == -np.inf


class TestEvaluate:
    def test_aggregate_equals_recomputation_from_records(self, space30, clean_codec):
        # the corpus WER must equal total edits / total reference length
        # recomputed from the per-example records, not the mean of rates
        params = small_model(space30, seed=7)
        exs = asr_examples_for(space30, clean_codec,
                               ["abc", "de fgh", "ij", "klm nop qrs"])
        report = evaluate(params, space30, exs, "wer", codec=clean_codec)
        edits = 0
        ref_len = 0
        for rec in report.records:
            r = rec["reference"].split()
            h = rec["hypothesis"].split()
            edits += edit_distance(r, h)
            ref_len += len(r)
        assert_allclose(report.value, edits / max(1, ref_len), rtol=1e-15)
        assert report.count == 4

    def test_aggregate_differs_from_mean_of_rates(self, space30, clean_codec):
        # the zero model deterministically emits 'aaaa' (lowest text id,
        # four times): ref "c" scores 1/1 while ref "aaaa bbbb" scores 1/2,
        # so the pooled value 2/3 is not the mean rate 3/4
        params = init_zero(ModelConfig(d_model=16, n_layers=1, n_heads=2,
                                       d_ff=64, max_seq_len=128,
                                       vocab_size=space30.total_size))
        exs = asr_examples_for(space30, clean_codec, ["c", "aaaa bbbb"])
        report = evaluate(params, space30, exs, "wer", codec=clean_codec,
                          max_new=4)
        mean_rate = float(np.mean([r["score"] for r in report.records]))
        assert_allclose(report.value, 2 / 3, rtol=1e-15)
        assert_allclose(mean_rate, 3 / 4, rtol=1e-15)

    def test_loss_metric_matches_direct_mean(self, space30, clean_codec):
        params = small_model(space30, seed=9)
        exs = asr_examples_for(space30, clean_codec, ["ab", "cde", "fg hi"])
        report = evaluate(params, space30, exs, "loss")
        per_example = []
        for e in exs:
            seq = pack(e, space30)
            batch = make_batch([seq], space30.pad_id)
            inputs, targets, codes, mask = batch_shift_targets(batch, space30)
            logits, _ = forward(params, inputs)
            per_example.append(trimodal_loss(logits, targets, codes, mask).total)
        assert_allclose(report.value, np.mean(per_example), rtol=1e-9)

    def test_group_size_does_not_change_scores(self, space30, clean_codec):
        params = small_model(space30, seed=10)
        exs = asr_examples_for(space30, clean_codec, ["aa", "bb cc", "dd", "ee ff gg"])
        all_at_once = evaluate(params, space30, exs, "wer", codec=clean_codec)
        grouped = evaluate(params, space30, exs, "wer", codec=clean_codec, group_size=2)
        assert_allclose(all_at_once.value, grouped.value, rtol=1e-15)
        for a, b in zip(all_at_once.records, grouped.records):
            assert a["hypothesis"] == b["hypothesis"]

    def test_bleu_metric(self, space30, clean_codec):
        params = small_model(space30, seed=11)
        exs = asr_examples_for(space30, clean_codec, ["ab cd", "ef gh ij"])
        report = evaluate(params, space30, exs, "bleu4", codec=clean_codec)
        assert 0.0 <= report.value <= 100.0

    def test_empty_dataset_rejected(self, space30):
        params = small_model(space30)
        with pytest.raises(InvalidArgument):
            evaluate(params, space30, [], "wer")

    def test_unsupervised_examples_rejected_for_decode_metrics(self, space30):
        params = small_model(space30)
        exs = lm_examples_for(space30, ["abc"])
        with pytest.raises(InvalidArgument):
            evaluate(params, space30, exs, "wer")

    def test_unknown_metric_rejected(self, space30, clean_codec):
        params = small_model(space30)
        exs = asr_examples_for(space30, clean_codec, ["a"])
        with pytest.raises(InvalidArgument):
            evaluate(params, space30, exs, "accuracy")


class TestSampleComponents:
    def test_fraction_tracks_weights(self):
        rng = np.random.default_rng(123)
        draws = sample_components(rng, [3.0, 1.0], 100_000)
        frac = (draws == 0).mean()
        assert abs(frac - 0.75) < 0.01

    def test_zero_weight_component_never_drawn(self):
        rng = np.random.default_rng(5)
        draws = sample_components(rng, [1.0, 0.0, 1.0], 10_000)
        assert (draws != 1).all()

    def test_invalid_weights_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidArgument):
            sample_components(rng, [], 4)
        with pytest.raises(InvalidArgument):
            sample_components(rng, [-1.0, 2.0], 4)


def quick_config(**overrides):
    base = dict(
        mix=[MixComponent("train", Supervision.SUPERVISED, 1.0)],
        dev_metric="loss",
        steps_per_epoch=15,
        max_epochs=2,
        batch_size=2,
        lr=3e-3,
        patience=1,
        seed=7,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrain:
    def test_loss_decreases_on_repetitive_data(self, space30, clean_codec):
        params = small_model(space30, seed=20)
        exs = asr_examples_for(space30, clean_codec, ["ab"] * 4)
        cfg = quick_config(steps_per_epoch=40, max_epochs=1, lr=5e-3)
        result = train(cfg, params, space30, mix_data=[(exs, 1.0)],
                       dev_data=exs, codec=clean_codec)
        steps = [e["loss_total"] for e in result.log if e["loss_total"] is not None]
        assert steps[-1] < steps[0]
        assert result.steps_run == 40

    def test_input_params_never_mutated(self, space30, clean_codec):
        params = small_model(space30, seed=21)
        snapshot = {k: v.copy() for k, v in params.tensors.items()}
        exs = asr_examples_for(space30, clean_codec, ["cd"] * 2)
        train(quick_config(), params, space30, mix_data=[(exs, 1.0)],
              dev_data=exs, codec=clean_codec)
        for name, v in params.tensors.items():
            assert_array_equal(v, snapshot[name])

    def test_patience_zero_stops_after_first_eval(self, space30, clean_codec):
        params = small_model(space30, seed=22)
        exs = asr_examples_for(space30, clean_codec, ["ef"] * 2)
        cfg = quick_config(patience=0, max_epochs=6)
        result = train(cfg, params, space30, mix_data=[(exs, 1.0)],
                       dev_data=exs, codec=clean_codec)
        assert result.epochs_run == 1

    def test_stagnant_metric_stops_at_patience(self, space30, clean_codec):
        # a vanishing learning rate freezes the model, so the dev value
        # repeats exactly; the first eval improves on +inf, the second
        # does not, and patience=1 stops there
        params = small_model(space30, seed=23)
        exs = asr_examples_for(space30, clean_codec, ["gh"] * 2)
        cfg = quick_config(lr=1e-12, patience=1, max_epochs=8, dev_metric="wer")
        result = train(cfg, params, space30, mix_data=[(exs, 1.0)],
                       dev_data=exs, codec=clean_codec)
        assert result.epochs_run == 2
        assert result.best_epoch == 1

    def test_returned_params_reproduce_best_metric(self, space30, clean_codec):
        params = small_model(space30, seed=24)
        exs = asr_examples_for(space30, clean_codec, ["ij kl", "mn"])
        cfg = quick_config(dev_metric="wer", max_epochs=3, patience=3,
                           steps_per_epoch=10)
        result = train(cfg, params, space30, mix_data=[(exs, 1.0)],
                       dev_data=exs, codec=clean_codec)
        re_eval = evaluate(result.params, space30, exs, "wer", codec=clean_codec)
        assert_allclose(re_eval.value, result.best_metric, rtol=1e-15)

    def test_mixed_supervision_runs(self, space30, clean_codec):
        params = small_model(space30, seed=25)
        sup = asr_examples_for(space30, clean_codec, ["op", "qr"])
        unsup = lm_examples_for(space30, ["st uv", "wx"])
        cfg = quick_config(mix=[
            MixComponent("sup", Supervision.SUPERVISED, 1.0),
            MixComponent("unsup", Supervision.UNSUPERVISED_LM, 1.0),
        ])
        result = train(cfg, params, space30, mix_data=[(sup, 1.0), (unsup, 1.0)],
                       dev_data=sup, codec=clean_codec)
        assert result.steps_run == cfg.steps_per_epoch * result.epochs_run

    def test_supervision_mismatch_rejected(self, space30, clean_codec):
        params = small_model(space30, seed=26)
        unsup = lm_examples_for(space30, ["yz"])
        cfg = quick_config()  # declares supervised
        with pytest.raises(InvalidArgument):
            train(cfg, params, space30, mix_data=[(unsup, 1.0)],
                  dev_data=unsup, codec=clean_codec)

    def test_vocab_mismatch_rejected(self, space30, clean_codec):
        cfg_model = ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=64,
                                max_seq_len=128, vocab_size=50)
        params = init_random(cfg_model, seed=27)
        exs = asr_examples_for(space30, clean_codec, ["ab"])
        with pytest.raises(InvalidArgument):
            train(quick_config(), params, space30, mix_data=[(exs, 1.0)],
                  dev_data=exs, codec=clean_codec)

    def test_deterministic_given_seed(self, space30, clean_codec):
        exs = asr_examples_for(space30, clean_codec, ["cd ef", "gh"])
        results = []
        for _ in range(2):
            params = small_model(space30, seed=28)
            r = train(quick_config(max_epochs=1), params, space30,
                      mix_data=[(exs, 1.0)], dev_data=exs, codec=clean_codec)
            results.append(r)
        for name in results[0].params.tensors:
            assert_array_equal(results[0].params.tensors[name],
                               results[1].params.tensors[name])
        assert results[0].log == results[1].log


class TestLambdaSearch:
    def test_baselines_reported_but_never_selected(self, space30, clean_codec):
        params = small_model(space30, seed=30)
        exs = asr_examples_for(space30, clean_codec, ["ab", "cd"])
        spec = SearchSpec(trials=2, seed=3)
        cfg = quick_config(max_epochs=1, steps_per_epoch=5, dev_metric="loss")
        result = lambda_search(spec, cfg, params, space30,
                               mix_data=[(exs, 1.0)], dev_data=exs,
                               codec=clean_codec)
        kinds = [r["kind"] for r in result.table]
        assert kinds.count("baseline") == 2
        assert kinds.count("search") == 2
        search_rows = [r for r in result.table if r["kind"] == "search"]
        best_row = min(search_rows, key=lambda r: r["dev_metric"])
        assert result.best_metric == best_row["dev_metric"]
        assert result.best_weights.lambda_speech == best_row["lambda_speech"]

    def test_baselines_can_be_disabled(self, space30, clean_codec):
        params = small_model(space30, seed=31)
        exs = asr_examples_for(space30, clean_codec, ["ef"])
        spec = SearchSpec(trials=1, seed=4, include_baselines=False)
        cfg = quick_config(max_epochs=1, steps_per_epoch=3, dev_metric="loss")
        result = lambda_search(spec, cfg, params, space30,
                               mix_data=[(exs, 1.0)], dev_data=exs,
                               codec=clean_codec)
        assert all(r["kind"] == "search" for r in result.table)

    def test_invalid_spec_rejected(self):
        with pytest.raises(InvalidArgument):
            SearchSpec(trials=0)
        with pytest.raises(InvalidArgument):
            SearchSpec(lambda_s_range=(0.5, 0.2))
