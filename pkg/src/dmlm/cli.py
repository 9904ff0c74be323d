"""Command-line entry point.

One binary, subcommand style. Every command takes --seed (falling back
to the DMLM_SEED environment variable, then 0) and writes its artifacts
under --out. Outputs carry no timestamps, so a rerun with identical
inputs and flags is byte-identical. Exit codes: 0 success, 2 usage
error, 3 missing file, 4 manifest mismatch, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import codebook as cb
from . import synth
from .errors import DmlmError, InvalidArgument, InvalidToken, ManifestMismatch
from .net import (
    ModelConfig,
    extend_from_pretrained,
    init_random,
    load_checkpoint,
    save_checkpoint,
)
from .objective import LossWeights
from .pipeline import (
    METRICS,
    EvalReport,
    MixComponent,
    SearchSpec,
    TrainConfig,
    evaluate,
    generate_many,
    lambda_search,
    train,
    write_log,
)
from .seqfmt import Supervision, read_examples, write_examples
from .tokenspace import (
    TASK_OUTPUT_MODALITY,
    Modality,
    SyntheticSpeechCodec,
    TokenRun,
    build_token_space,
    load_codec,
    load_manifest,
    read_token_runs,
    save_codec,
    save_manifest,
    write_token_runs,
)

TASK_FLAGS = {
    "asr": "TASK_ASR",
    "t2s": "TASK_T2S",
    "s2tt": "TASK_S2TT",
    "i2t": "TASK_I2T",
    "lm": "TASK_LM",
}


# ---------------------------------------------------------------------------
# shared helpers


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("DMLM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise InvalidArgument(f"DMLM_SEED is not an integer: {env!r}") from exc
    return 0


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_space(path):
    return load_manifest(_require_file(path, "manifest"))


def _read_dataset(path, space):
    _require_file(path, "dataset")
    try:
        return read_examples(path, space)
    except (InvalidToken, InvalidArgument) as exc:
        raise ManifestMismatch(f"dataset {path} does not match the manifest: {exc}") from exc


def _load_ckpt(path, space=None):
    params = load_checkpoint(_require_file(path, "checkpoint"))
    if space is not None and params.config.vocab_size != space.total_size:
        raise ManifestMismatch(
            f"checkpoint vocabulary {params.config.vocab_size} does not match "
            f"the manifest's token-space size {space.total_size}"
        )
    return params


def _load_codec_checked(path, space):
    codec = load_codec(_require_file(path, "codec"))
    if tuple(codec.text_range) != space.text_range or tuple(codec.speech_range) != space.speech_range:
        raise ManifestMismatch(
            "codec token ranges do not match the manifest "
            f"(codec text {codec.text_range}/speech {codec.speech_range}, "
            f"manifest text {space.text_range}/speech {space.speech_range})"
        )
    return codec


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _model_config_from_args(args, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        d_model=args.d_model,
        n_layers=args.layers,
        n_heads=args.heads,
        d_ff=args.d_ff,
        max_seq_len=args.max_seq_len,
        vocab_size=vocab_size,
        tie_embeddings=not args.untied,
    )


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--untied", action="store_true",
                   help="use a separate output projection instead of tied embeddings")


def _resolve_mix_paths(config: TrainConfig, config_dir: Path) -> TrainConfig:
    def fix(p: str) -> str:
        q = Path(p)
        return str(q if q.is_absolute() else config_dir / q)

    mix = [replace(c, path=fix(c.path)) for c in config.mix]
    dev = fix(config.dev_path) if config.dev_path else config.dev_path
    return replace(config, mix=mix, dev_path=dev)


def _load_train_config(path: str) -> TrainConfig:
    p = _require_file(path, "training config")
    try:
        cfg = TrainConfig.from_json(json.loads(p.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidArgument(f"malformed training config {p}: {exc}") from exc
    return _resolve_mix_paths(cfg, p.parent.resolve())


# ---------------------------------------------------------------------------
# commands


def cmd_manifest(args) -> int:
    space = build_token_space(args.text, args.speech, args.image, alphabet=args.alphabet)
    out = _out_dir(args)
    save_manifest(space, out / "tokenspace.json")
    print(f"wrote {out / 'tokenspace.json'} (total {space.total_size} ids)")
    return 0


def cmd_synth_data(args) -> int:
    space = _load_space(args.manifest)
    seed = _resolve_seed(args.seed)
    out = _out_dir(args)
    lexicon_seed = args.lexicon_seed if args.lexicon_seed is not None else seed
    lexicon = synth.make_lexicon(
        space, args.lexicon_size, lexicon_seed, (args.word_min, args.word_max)
    )
    sentences = synth.make_sentences(
        lexicon, args.n, seed, (args.words_min, args.words_max)
    )
    fractions = tuple(float(x) for x in args.split.split(","))
    splits = synth.split3(sentences, fractions)
    names = ("train", "dev", "test")

    if args.task == "features":
        for i, (name, part) in enumerate(zip(names, splits)):
            corpus = synth.make_feature_corpus(
                space, part, args.dim, args.family, seed + i,
                frames_per_char=args.frames_per_char,
            )
            corpus.save(out / f"features-{name}.feat", out / f"utterances-{name}.jsonl")
        print(f"wrote feature corpus ({args.family}) for splits {names} under {out}")
        return 0

    codec = None
    if args.task in ("asr", "t2s", "lm-speech"):
        if args.codec:
            codec = _load_codec_checked(args.codec, space)
        else:
            codec = SyntheticSpeechCodec.create(
                space, args.codec_k, noise=args.noise, seed=seed
            )
            save_codec(codec, out / "codec.json")
    builders = {
        "asr": lambda part: synth.asr_examples(space, codec, part),
        "t2s": lambda part: synth.t2s_examples(space, codec, part),
        "lm-text": lambda part: synth.text_lm_examples(space, part),
        "lm-speech": lambda part: synth.speech_lm_examples(space, codec, part),
    }
    build = builders[args.task]
    counts = []
    for name, part in zip(names, splits):
        examples = build(part)
        write_examples(out / f"{name}.jsonl", examples, space)
        counts.append(f"{name}={len(examples)}")
    print(f"wrote {args.task} datasets under {out} ({', '.join(counts)})")
    return 0


def cmd_codebook_fit(args) -> int:
    frames = cb.read_features(_require_file(args.features, "feature file"))
    book = cb.fit_codebook(
        frames, args.k,
        batch_size=args.batch_size, max_iters=args.iters,
        tol=args.tol, seed=_resolve_seed(args.seed),
    )
    out = _out_dir(args)
    book.save(out / "codebook.bin")
    print(
        f"wrote {out / 'codebook.bin'} (k={book.k}, dim={book.dim}, "
        f"iters={book.meta['iters']})"
    )
    return 0


def cmd_codebook_assign(args) -> int:
    space = _load_space(args.manifest)
    book = cb.Codebook.load(_require_file(args.codebook, "codebook"))
    frames = cb.read_features(_require_file(args.features, "feature file"))
    if book.k > space.speech_size:
        raise ManifestMismatch(
            f"codebook k={book.k} exceeds the manifest's speech range "
            f"size {space.speech_size}"
        )
    labels = book.assign(frames)
    out = _out_dir(args)
    lo = space.speech_range[0]
    if args.utterances:
        utts = [
            json.loads(line)
            for line in _require_file(args.utterances, "utterance sidecar")
            .read_text().splitlines() if line.strip()
        ]
        runs = [
            TokenRun((lo + labels[u["start"]:u["end"]]).astype(np.int32), Modality.SPEECH)
            for u in utts
        ]
        write_token_runs(out / "tokens.jsonl", runs)
        examples = synth.examples_from_labels(
            space, utts, labels, task_name=TASK_FLAGS[args.task]
        )
        write_examples(out / "dataset.jsonl", examples, space)
        print(f"wrote {out / 'tokens.jsonl'} and {out / 'dataset.jsonl'} "
              f"({len(examples)} examples)")
    else:
        run = TokenRun((lo + labels).astype(np.int32), Modality.SPEECH)
        write_token_runs(out / "tokens.jsonl", [run])
        print(f"wrote {out / 'tokens.jsonl'} ({labels.shape[0]} frames)")
    return 0


def cmd_codebook_inertia(args) -> int:
    book = cb.Codebook.load(_require_file(args.codebook, "codebook"))
    frames = cb.read_features(_require_file(args.features, "feature file"))
    result = {"inertia": book.inertia(frames), "frames": int(frames.shape[0]), "k": book.k}
    print(json.dumps(result, sort_keys=True))
    if args.out is not None:
        out = _out_dir(args)
        _write_json(out / "inertia.json", result)
    return 0


def cmd_pretrain(args) -> int:
    space = _load_space(args.manifest)
    seed = _resolve_seed(args.seed)
    max_epochs = max(1, math.ceil(args.steps / args.steps_per_epoch))
    config = TrainConfig(
        mix=[MixComponent(str(args.train), Supervision.UNSUPERVISED_LM, 1.0)],
        dev_path=str(args.dev),
        dev_metric="loss",
        steps_per_epoch=args.steps_per_epoch,
        max_epochs=max_epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        patience=args.patience,
        seed=seed,
    )
    mix_data = [(_read_dataset(args.train, space), 1.0)]
    dev_data = _read_dataset(args.dev, space)
    params = init_random(_model_config_from_args(args, space.total_size), seed)
    result = train(config, params, space, mix_data=mix_data, dev_data=dev_data)
    out = _out_dir(args)
    save_checkpoint(result.params, out / "base.ckpt")
    write_log(out / "pretrain-log.jsonl", result.log)
    print(
        f"wrote {out / 'base.ckpt'} (best dev loss {result.best_metric:.6f} "
        f"at epoch {result.best_epoch}, {result.steps_run} steps)"
    )
    return 0


def cmd_extend(args) -> int:
    space = _load_space(args.manifest)
    base = _load_ckpt(args.base)
    extended = extend_from_pretrained(base, space, _resolve_seed(args.seed))
    out = _out_dir(args)
    save_checkpoint(extended, out / "extended.ckpt")
    print(
        f"wrote {out / 'extended.ckpt'} "
        f"(vocab {base.config.vocab_size} -> {extended.config.vocab_size})"
    )
    return 0


def _init_params_for_train(args, space, seed):
    if args.init:
        return _load_ckpt(args.init, space)
    return init_random(_model_config_from_args(args, space.total_size), seed)


def cmd_train(args) -> int:
    space = _load_space(args.manifest)
    config = _load_train_config(args.config)
    if args.seed is not None or os.environ.get("DMLM_SEED") is not None:
        config = replace(config, seed=_resolve_seed(args.seed))
    mix_data = [(_read_dataset(c.path, space), c.weight) for c in config.mix]
    dev_data = _read_dataset(config.dev_path, space)
    codec = _load_codec_checked(args.codec, space) if args.codec else None
    params = _init_params_for_train(args, space, config.seed)
    result = train(config, params, space, mix_data=mix_data, dev_data=dev_data, codec=codec)
    out = _out_dir(args)
    save_checkpoint(result.params, out / "best.ckpt")
    write_log(out / "log.jsonl", result.log)
    _write_json(out / "result.json", {
        "dev_metric": config.dev_metric,
        "best_metric": result.best_metric,
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
        "steps_run": result.steps_run,
    })
    print(
        f"wrote {out / 'best.ckpt'} (best {config.dev_metric} "
        f"{result.best_metric:.6f} at epoch {result.best_epoch})"
    )
    return 0


def cmd_lambda_search(args) -> int:
    space = _load_space(args.manifest)
    config = _load_train_config(args.config)
    seed = _resolve_seed(args.seed)
    mix_data = [(_read_dataset(c.path, space), c.weight) for c in config.mix]
    dev_data = _read_dataset(config.dev_path, space)
    codec = _load_codec_checked(args.codec, space) if args.codec else None
    params = _init_params_for_train(args, space, config.seed)

    def parse_range(s: str) -> tuple[float, float]:
        lo, hi = (float(x) for x in s.split(","))
        return lo, hi

    spec = SearchSpec(
        trials=args.trials,
        lambda_s_range=parse_range(args.lambda_s_range),
        lambda_t_range=parse_range(args.lambda_t_range),
        seed=seed,
        include_baselines=not args.no_baselines,
    )
    result = lambda_search(
        spec, config, params, space, mix_data=mix_data, dev_data=dev_data, codec=codec
    )
    out = _out_dir(args)
    _write_json(out / "trials.json", {
        "best": {
            "weights": result.best_weights.to_json(),
            "dev_metric": result.best_metric,
            "metric_name": config.dev_metric,
        },
        "table": result.table,
    })
    print(
        f"wrote {out / 'trials.json'} (best {config.dev_metric} "
        f"{result.best_metric:.6f} at lambda_S={result.best_weights.lambda_speech:.4f}, "
        f"lambda_T={result.best_weights.lambda_text:.4f})"
    )
    return 0


def cmd_generate(args) -> int:
    space = _load_space(args.manifest)
    params = _load_ckpt(args.ckpt, space)
    codec = _load_codec_checked(args.codec, space) if args.codec else None
    task_name = TASK_FLAGS[args.task]
    task = space.control_tokens[task_name]
    if args.input_file:
        runs = read_token_runs(_require_file(args.input_file, "input runs"), space)
    elif args.input_text is not None:
        text_run = space.encode_text(args.input_text)
        in_mod = (
            Modality.TEXT if task_name == "TASK_LM"
            else {"TASK_ASR": Modality.SPEECH, "TASK_S2TT": Modality.SPEECH,
                  "TASK_T2S": Modality.TEXT, "TASK_I2T": Modality.IMAGE}[task_name]
        )
        if in_mod is Modality.TEXT:
            runs = [text_run]
        elif in_mod is Modality.SPEECH:
            if codec is None:
                raise InvalidArgument(
                    f"{args.task} takes speech input; give --codec to synthesize "
                    "it from --input-text, or use --input-file"
                )
            runs = [codec.encode(text_run)]
        else:
            raise InvalidArgument(f"{args.task} input cannot come from --input-text")
    else:
        raise InvalidArgument("need --input-text or --input-file")
    results = generate_many(
        params, space, [task] * len(runs), runs, args.max_new, masked=not args.unmasked
    )
    records = []
    for res in results:
        rec = {
            "ids": res.output.ids.tolist(),
            "modality": res.output.modality.value,
            "truncated": res.truncated,
        }
        if res.output.modality is Modality.TEXT:
            rec["text"] = space.decode_text(res.output)
        elif res.output.modality is Modality.SPEECH and codec is not None:
            rec["text"] = space.decode_text(codec.decode(res.output, strict=False))
        records.append(rec)
    lines = "\n".join(json.dumps(r, sort_keys=True) for r in records)
    if args.out is not None:
        out = _out_dir(args)
        (out / "generated.jsonl").write_text(lines + "\n")
        print(f"wrote {out / 'generated.jsonl'} ({len(records)} outputs)")
    else:
        print(lines)
    return 0


def cmd_evaluate(args) -> int:
    space = _load_space(args.manifest)
    params = _load_ckpt(args.ckpt, space)
    examples = _read_dataset(args.data, space)
    codec = _load_codec_checked(args.codec, space) if args.codec else None
    report = evaluate(
        params, space, examples, args.metric,
        codec=codec, max_new=args.max_new, group_size=args.jobs,
        masked=not args.unmasked,
    )
    out = _out_dir(args)
    report.save(out / "report.json")
    print(f"metric={report.metric} value={report.value:.6f} count={report.count}")
    return 0


def _report_rows(paths: list[str]) -> tuple[list[dict], str]:
    rows: list[dict] = []
    metric_name = "metric"
    for path in paths:
        p = _require_file(path, "report input")
        text = p.read_text()
        # A search result is one JSON document with a "table"; anything
        # else is treated as a JSONL training log.
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict) and "table" in obj:
            table = obj["table"]
            for r in table:
                rows.append({
                    "source": p.name,
                    "kind": r.get("kind", ""),
                    "lambda_speech": r.get("lambda_speech"),
                    "lambda_text": r.get("lambda_text"),
                    "lambda_image": r.get("lambda_image"),
                    "metric": r.get("dev_metric"),
                    "status": r.get("status", ""),
                })
                metric_name = r.get("metric_name", metric_name)
        else:
            best = None
            for lineno, line in enumerate(text.splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InvalidArgument(f"{p} line {lineno}: {exc.msg}") from exc
                dm = entry.get("dev_metric")
                if dm:
                    metric_name = dm.get("name", metric_name)
                    if best is None or dm["value"] < best:
                        best = dm["value"]
            rows.append({
                "source": p.name, "kind": "log",
                "lambda_speech": None, "lambda_text": None, "lambda_image": None,
                "metric": best, "status": "ok" if best is not None else "no dev entries",
            })
    return rows, metric_name


def cmd_report(args) -> int:
    rows, metric_name = _report_rows(args.input)
    reverse = metric_name == "bleu4"
    rows.sort(key=lambda r: (r["metric"] is None,
                             -(r["metric"] or 0) if reverse else (r["metric"] or 0)))
    out = _out_dir(args)
    headers = ["source", "kind", "lambda_speech", "lambda_text", "lambda_image",
               metric_name, "status"]
    fmt = lambda v: "" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v))
    lines = ["\t".join(headers)]
    for r in rows:
        lines.append("\t".join(fmt(v) for v in (
            r["source"], r["kind"], r["lambda_speech"], r["lambda_text"],
            r["lambda_image"], r["metric"], r["status"])))
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        for r in rows:
            w.writerow([
                r["source"], r["kind"],
                "" if r["lambda_speech"] is None else repr(r["lambda_speech"]),
                "" if r["lambda_text"] is None else repr(r["lambda_text"]),
                "" if r["lambda_image"] is None else repr(r["lambda_image"]),
                "" if r["metric"] is None else repr(r["metric"]),
                r["status"],
            ])
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dmlm",
        description="Discrete multimodal language model toolkit: unified token "
                    "spaces, codebooks, training, decoding, and evaluation.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (default: $DMLM_SEED, then 0)")
        return p

    p = add("manifest", cmd_manifest, "lay out a unified token space")
    p.add_argument("--text", type=int, required=True)
    p.add_argument("--speech", type=int, required=True)
    p.add_argument("--image", type=int, required=True)
    p.add_argument("--alphabet", default=None)
    p.add_argument("--out", default=".")

    p = add("synth-data", cmd_synth_data, "generate synthetic datasets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", required=True,
                   choices=["asr", "t2s", "lm-text", "lm-speech", "features"])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--codec-k", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--codec", default=None, help="reuse an existing codec file")
    p.add_argument("--lexicon-size", type=int, default=40)
    p.add_argument("--lexicon-seed", type=int, default=None,
                   help="lexicon-only seed; two values give two domains")
    p.add_argument("--word-min", type=int, default=2)
    p.add_argument("--word-max", type=int, default=5)
    p.add_argument("--words-min", type=int, default=2)
    p.add_argument("--words-max", type=int, default=5)
    p.add_argument("--split", default="0.8,0.1,0.1")
    p.add_argument("--family", choices=list(synth.FEATURE_FAMILIES), default="clustered")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--frames-per-char", type=int, default=3)
    p.add_argument("--out", default=".")

    p = add("codebook-fit", cmd_codebook_fit, "fit a mini-batch k-means codebook")
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--jobs", type=int, default=1,
                   help="accepted for symmetry; clustering is BLAS-parallel")
    p.add_argument("--out", default=".")

    p = add("codebook-assign", cmd_codebook_assign, "quantize frames to speech tokens")
    p.add_argument("--codebook", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--utterances", default=None,
                   help="utterance sidecar; also emits a paired dataset")
    p.add_argument("--task", choices=["asr", "lm"], default="asr")
    p.add_argument("--out", default=".")

    p = add("codebook-inertia", cmd_codebook_inertia, "sum of squared assignment distances")
    p.add_argument("--codebook", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None)

    p = add("pretrain", cmd_pretrain, "train a text-only language model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--steps-per-epoch", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=10,
                   help="pretraining usually runs its full step budget")
    _add_model_flags(p)
    p.add_argument("--out", default=".")

    p = add("extend", cmd_extend, "grow a text model's vocabulary to a full manifest")
    p.add_argument("--base", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=".")

    p = add("train", cmd_train, "train on a weighted mix with early stopping")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--init", default=None, help="starting checkpoint (default: random)")
    p.add_argument("--codec", default=None)
    _add_model_flags(p)
    p.add_argument("--out", default=".")

    p = add("lambda-search", cmd_lambda_search, "random search over loss weights")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--init", default=None)
    p.add_argument("--codec", default=None)
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--lambda-s-range", default="0,1")
    p.add_argument("--lambda-t-range", default="0,1")
    p.add_argument("--no-baselines", action="store_true")
    _add_model_flags(p)
    p.add_argument("--out", default=".")

    p = add("generate", cmd_generate, "greedy-decode outputs for given inputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", choices=list(TASK_FLAGS), required=True)
    p.add_argument("--input-text", default=None)
    p.add_argument("--input-file", default=None)
    p.add_argument("--max-new", type=int, default=64)
    p.add_argument("--codec", default=None)
    p.add_argument("--unmasked", action="store_true",
                   help="do not restrict logits to the target modality")
    p.add_argument("--out", default=None)

    p = add("evaluate", cmd_evaluate, "decode a dataset and score it")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metric", choices=list(METRICS), default="wer")
    p.add_argument("--codec", default=None)
    p.add_argument("--max-new", type=int, default=None)
    p.add_argument("--jobs", type=int, default=0,
                   help="examples decoded per batched group (0 = all at once)")
    p.add_argument("--unmasked", action="store_true")
    p.add_argument("--out", default=".")

    p = add("report", cmd_report, "tabulate search results and training logs")
    p.add_argument("--input", action="append", required=True,
                   help="trials.json or a training log (repeatable)")
    p.add_argument("--out", default=".")

    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ManifestMismatch as exc:
        print(f"error: {str(exc).replace(chr(10), ' ')}", file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        print(f"error: {str(exc).replace(chr(10), ' ')}", file=sys.stderr)
        return 3
    except (DmlmError, ValueError) as exc:
        print(f"error: {str(exc).replace(chr(10), ' ')}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
