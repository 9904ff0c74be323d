"""Decoder-only causal transformer over the unified vocabulary.

Pure numpy, with a hand-written exact backward pass. Pre-norm residual
blocks, multi-head attention, a GELU feed-forward, learned positional
embeddings, and an input embedding of shape (d, |D|) whose transpose
doubles as the output projection when tied. Vocabulary growth happens by
appending embedding columns; everything else is width-preserving, which
is what makes the text-pretrain-then-extend workflow a column copy.

Float32 is the training dtype; tests that compare against finite
differences build float64 models via the dtype argument.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    ChecksumError,
    IncompatibleCheckpoint,
    InvalidArgument,
    InvalidToken,
)
from .tokenspace import CONTROL_NAMES, TokenSpace, build_token_space

CHECKPOINT_MAGIC = b"DMCK"
CHECKPOINT_VERSION = 1
INIT_STD = 0.02
LN_EPS = 1e-5
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_seq_len: int = 256
    vocab_size: int = 0
    tie_embeddings: bool = True

    def __post_init__(self):
        if self.d_model < 1 or self.n_layers < 1 or self.n_heads < 1 or self.d_ff < 1:
            raise InvalidArgument("model dimensions must be positive")
        if self.d_model % self.n_heads != 0:
            raise InvalidArgument(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.max_seq_len < 2:
            raise InvalidArgument("max_seq_len must be at least 2")
        if self.vocab_size < 1:
            raise InvalidArgument("vocab_size must be at least 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_seq_len": self.max_seq_len,
            "vocab_size": self.vocab_size,
            "tie_embeddings": self.tie_embeddings,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ModelConfig":
        return cls(**{k: obj[k] for k in (
            "d_model", "n_layers", "n_heads", "d_ff",
            "max_seq_len", "vocab_size", "tie_embeddings")})


def tensor_specs(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) order; init, checkpoints, and the optimizer
    all iterate tensors in exactly this order."""
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("embedding", (d, v)),
        ("pos_emb", (config.max_seq_len, d)),
    ]
    if not config.tie_embeddings:
        specs.append(("out_proj", (d, v)))
    for i in range(config.n_layers):
        p = f"layers.{i}."
        specs += [
            (p + "ln1.gamma", (d,)), (p + "ln1.beta", (d,)),
            (p + "attn.wq", (d, d)), (p + "attn.bq", (d,)),
            (p + "attn.wk", (d, d)), (p + "attn.bk", (d,)),
            (p + "attn.wv", (d, d)), (p + "attn.bv", (d,)),
            (p + "attn.wo", (d, d)), (p + "attn.bo", (d,)),
            (p + "ln2.gamma", (d,)), (p + "ln2.beta", (d,)),
            (p + "ffn.w1", (d, f)), (p + "ffn.b1", (f,)),
            (p + "ffn.w2", (f, d)), (p + "ffn.b2", (d,)),
        ]
    specs += [("ln_f.gamma", (d,)), ("ln_f.beta", (d,))]
    return specs


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["embedding"].dtype

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def validate(self) -> None:
        for name, shape in tensor_specs(self.config):
            t = self.tensors.get(name)
            if t is None:
                raise InvalidArgument(f"missing tensor {name}")
            if t.shape != shape:
                raise InvalidArgument(f"tensor {name} has shape {t.shape}, expected {shape}")
            if not np.isfinite(t).all():
                raise InvalidArgument(f"tensor {name} contains non-finite values")


def init_random(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Matrices and embeddings N(0, 0.02^2); biases zero; norm gains one."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_specs(config):
        if name.endswith(".gamma") or name == "ln_f.gamma":
            tensors[name] = np.ones(shape, dtype=dtype)
        elif name.endswith((".beta", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
            tensors[name] = np.zeros(shape, dtype=dtype)
        else:
            tensors[name] = (rng.normal(0.0, INIT_STD, size=shape)).astype(dtype)
    return ModelParams(config, tensors)


def init_zero(config: ModelConfig, dtype=np.float32) -> ModelParams:
    """Every tensor zero, norm gains included; a symmetry probe for tests."""
    return ModelParams(
        config, {name: np.zeros(shape, dtype=dtype) for name, shape in tensor_specs(config)}
    )


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass
class ForwardTrace:
    ids: np.ndarray  # (B, L)
    x0: np.ndarray  # embedded input (B, L, d)
    layers: list[dict] = field(default_factory=list)
    hf: np.ndarray | None = None  # final pre-norm residual (B, L, d)
    ln_f: dict | None = None
    squeeze: bool = False  # input arrived as a single sequence


def _layer_norm(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=x.dtype))
    xhat = xc * inv
    return gamma * xhat + beta, {"xhat": xhat, "inv": inv}


def _layer_norm_backward(dy, cache, gamma):
    xhat, inv = cache["xhat"], cache["inv"]
    dgamma = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbeta = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dgamma, dbeta


def _gelu(x):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), t


def _gelu_backward(dy, x, t):
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _split_heads(x, n_heads):
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


def forward(params: ModelParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Causal logits over the vocabulary for each position.

    Accepts a single id sequence (L,) or a right-padded batch (B, L);
    logits have a matching leading shape. Position i sees inputs[0..i]
    only.
    """
    cfg = params.config
    ids = np.asarray(inputs, dtype=np.int64)
    squeeze = ids.ndim == 1
    if squeeze:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise InvalidArgument("inputs must be a sequence or a batch of sequences")
    b, l = ids.shape
    if l < 1:
        raise InvalidArgument("empty input sequence")
    if l > cfg.max_seq_len:
        raise InvalidArgument(f"sequence length {l} exceeds max_seq_len {cfg.max_seq_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        bad = ids[(ids < 0) | (ids >= cfg.vocab_size)].flat[0]
        raise InvalidToken(f"input id {int(bad)} outside [0, {cfg.vocab_size})")
    t = params.tensors
    dtype = params.dtype

    x = t["embedding"].T[ids] + t["pos_emb"][:l]
    trace = ForwardTrace(ids=ids, x0=x, squeeze=squeeze)
    scale = np.asarray(1.0 / np.sqrt(cfg.head_dim), dtype=dtype)
    neg_inf = np.asarray(-np.inf, dtype=dtype)
    causal = np.tril(np.ones((l, l), dtype=bool))

    h = x
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        a, ln1_cache = _layer_norm(h, t[p + "ln1.gamma"], t[p + "ln1.beta"])
        q = a @ t[p + "attn.wq"] + t[p + "attn.bq"]
        k = a @ t[p + "attn.wk"] + t[p + "attn.bk"]
        v = a @ t[p + "attn.wv"] + t[p + "attn.bv"]
        qh, kh, vh = (_split_heads(z, cfg.n_heads) for z in (q, k, v))
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        scores = np.where(causal, scores, neg_inf)
        smax = scores.max(axis=-1, keepdims=True)
        e = np.exp(scores - smax)
        probs = e / e.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(probs @ vh)
        attn_out = ctx @ t[p + "attn.wo"] + t[p + "attn.bo"]
        h1 = h + attn_out

        bpre, ln2_cache = _layer_norm(h1, t[p + "ln2.gamma"], t[p + "ln2.beta"])
        z1 = bpre @ t[p + "ffn.w1"] + t[p + "ffn.b1"]
        g, tanh_u = _gelu(z1)
        ff = g @ t[p + "ffn.w2"] + t[p + "ffn.b2"]
        h2 = h1 + ff

        trace.layers.append({
            "a": a, "ln1": ln1_cache, "qh": qh, "kh": kh, "vh": vh,
            "probs": probs, "ctx": ctx, "bpre": bpre, "ln2": ln2_cache,
            "z1": z1, "g": g, "tanh_u": tanh_u,
        })
        h = h2

    hf_in = h
    hf, lnf_cache = _layer_norm(hf_in, t["ln_f.gamma"], t["ln_f.beta"])
    trace.hf = hf
    trace.ln_f = lnf_cache
    out_w = t["embedding"] if cfg.tie_embeddings else t["out_proj"]
    logits = hf @ out_w
    if squeeze:
        return logits[0], trace
    return logits, trace


def backward(
    params: ModelParams, trace: ForwardTrace, logit_grads: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact parameter gradients for the scalar loss whose per-logit
    gradients are supplied. Shapes must match the trace's logits."""
    cfg = params.config
    t = params.tensors
    dlogits = np.asarray(logit_grads, dtype=params.dtype)
    if trace.squeeze and dlogits.ndim == 2:
        dlogits = dlogits[None, :, :]
    b, l = trace.ids.shape
    if dlogits.shape != (b, l, cfg.vocab_size):
        raise InvalidArgument(
            f"logit grads have shape {logit_grads.shape}, expected {(b, l, cfg.vocab_size)}"
        )
    grads = {name: np.zeros(shape, dtype=params.dtype) for name, shape in tensor_specs(cfg)}
    flat = lambda z: z.reshape(-1, z.shape[-1])

    out_w = t["embedding"] if cfg.tie_embeddings else t["out_proj"]
    out_name = "embedding" if cfg.tie_embeddings else "out_proj"
    grads[out_name] += flat(trace.hf).T @ flat(dlogits)
    dh = dlogits @ out_w.T

    dh, dg_f, db_f = _layer_norm_backward(dh, trace.ln_f, t["ln_f.gamma"])
    grads["ln_f.gamma"] += dg_f
    grads["ln_f.beta"] += db_f

    scale = np.asarray(1.0 / np.sqrt(cfg.head_dim), dtype=params.dtype)
    for i in reversed(range(cfg.n_layers)):
        p = f"layers.{i}."
        c = trace.layers[i]

        # feed-forward branch
        dff = dh
        grads[p + "ffn.w2"] += flat(c["g"]).T @ flat(dff)
        grads[p + "ffn.b2"] += flat(dff).sum(axis=0)
        dg = dff @ t[p + "ffn.w2"].T
        dz1 = _gelu_backward(dg, c["z1"], c["tanh_u"])
        grads[p + "ffn.w1"] += flat(c["bpre"]).T @ flat(dz1)
        grads[p + "ffn.b1"] += flat(dz1).sum(axis=0)
        dbpre = dz1 @ t[p + "ffn.w1"].T
        dh1_ln, dg2, db2 = _layer_norm_backward(dbpre, c["ln2"], t[p + "ln2.gamma"])
        grads[p + "ln2.gamma"] += dg2
        grads[p + "ln2.beta"] += db2
        dh1 = dh + dh1_ln

        # attention branch
        dattn = dh1
        grads[p + "attn.wo"] += flat(c["ctx"]).T @ flat(dattn)
        grads[p + "attn.bo"] += flat(dattn).sum(axis=0)
        dctx = _split_heads(dattn @ t[p + "attn.wo"].T, cfg.n_heads)
        dprobs = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["probs"].transpose(0, 1, 3, 2) @ dctx
        probs = c["probs"]
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dscores = dscores * scale
        dqh = dscores @ c["kh"]
        dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"]
        dq, dk, dv = (_merge_heads(z) for z in (dqh, dkh, dvh))
        a = c["a"]
        grads[p + "attn.wq"] += flat(a).T @ flat(dq)
        grads[p + "attn.bq"] += flat(dq).sum(axis=0)
        grads[p + "attn.wk"] += flat(a).T @ flat(dk)
        grads[p + "attn.bk"] += flat(dk).sum(axis=0)
        grads[p + "attn.wv"] += flat(a).T @ flat(dv)
        grads[p + "attn.bv"] += flat(dv).sum(axis=0)
        da = dq @ t[p + "attn.wq"].T + dk @ t[p + "attn.wk"].T + dv @ t[p + "attn.wv"].T
        dh_ln, dg1, db1 = _layer_norm_backward(da, c["ln1"], t[p + "ln1.gamma"])
        grads[p + "ln1.gamma"] += dg1
        grads[p + "ln1.beta"] += db1
        dh = dh1 + dh_ln

    # input embedding and positions
    grads["pos_emb"][:l] += dh.sum(axis=0)
    demb_rows = np.zeros((cfg.vocab_size, cfg.d_model), dtype=params.dtype)
    np.add.at(demb_rows, trace.ids.reshape(-1), flat(dh))
    grads["embedding"] += demb_rows.T
    return grads


# ---------------------------------------------------------------------------
# Checkpoints: magic + JSON header + raw little-endian tensors.


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    params.validate()
    specs = tensor_specs(params.config)
    dtype = np.dtype(params.dtype)
    payload = b"".join(
        np.ascontiguousarray(params.tensors[name], dtype=dtype.newbyteorder("<")).tobytes()
        for name, _ in specs
    )
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": params.config.to_json(),
        "dtype": dtype.name,
        "tensors": [{"name": n, "shape": list(s)} for n, s in specs],
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def load_checkpoint(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != CHECKPOINT_MAGIC:
        raise IncompatibleCheckpoint(f"{path} is not a model checkpoint")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise ChecksumError(f"checkpoint {path} is truncated")
    header = json.loads(raw[8 : 8 + hlen].decode())
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpoint(
            f"checkpoint format version {header.get('format_version')} unsupported"
        )
    payload = raw[8 + hlen :]
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise ChecksumError(f"checkpoint {path} failed its checksum")
    config = ModelConfig.from_json(header["config"])
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    tensors: dict[str, np.ndarray] = {}
    off = 0
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape)) * dtype.itemsize
        buf = payload[off : off + nbytes]
        if len(buf) != nbytes:
            raise ChecksumError(f"checkpoint {path} is truncated")
        tensors[spec["name"]] = (
            np.frombuffer(buf, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
        )
        off += nbytes
    if off != len(payload):
        raise ChecksumError(f"checkpoint {path} has trailing bytes")
    params = ModelParams(config, tensors)
    params.validate()
    return params


# ---------------------------------------------------------------------------
# Pretrained-embedding extension


def extend_from_pretrained(base: ModelParams, space: TokenSpace, seed: int) -> ModelParams:
    """Grow a text-only model's vocabulary to the full unified space.

    Text embedding columns stay at their ids; control columns move to
    their new ids (matched by name against the text-only layout); new
    speech and image columns are drawn N(0, 0.02^2). Every non-embedding
    tensor is copied bit for bit.
    """
    base_space = build_token_space(space.text_size, 0, 0, alphabet=space.alphabet)
    if base.config.vocab_size != base_space.total_size:
        raise IncompatibleCheckpoint(
            f"base vocabulary {base.config.vocab_size} does not match a text-only "
            f"layout of size {base_space.total_size}"
        )
    new_config = replace(base.config, vocab_size=space.total_size)
    rng = np.random.default_rng(seed)
    dtype = base.dtype
    tensors: dict[str, np.ndarray] = {}
    emb_names = ["embedding"] + ([] if base.config.tie_embeddings else ["out_proj"])
    for name, shape in tensor_specs(new_config):
        if name in emb_names:
            old = base.tensors[name]
            new = rng.normal(0.0, INIT_STD, size=shape).astype(dtype)
            tsz = space.text_size
            new[:, :tsz] = old[:, :tsz]
            for cname in CONTROL_NAMES:
                new[:, space.control_tokens[cname]] = old[:, base_space.control_tokens[cname]]
            tensors[name] = new
        else:
            tensors[name] = base.tensors[name].copy()
    return ModelParams(new_config, tensors)
