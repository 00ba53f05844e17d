"""The five architectures: MTLFormer, MTLFormer_light, Transformer_simple, LSTM, LSTM_light.

Every model exposes the same interface: ``model(batch, training)`` returns
activity logits, role logits and a 3-vector of normalised time predictions
(waiting, duration, remaining). Parameters are grouped under ``backbone/``,
``heads/`` and ``loss_weights/`` so light and full variants can be compared
by name.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import ConfigViolation, IndivisibleHeads, ShapeMismatch
from .nn import ops as T
from .nn.tensor import Tensor

TRANSFORMER_TYPES = ("mtlformer", "mtlformer_light", "transformer_simple")
LSTM_TYPES = ("lstm", "lstm_light")
MODEL_TYPES = TRANSFORMER_TYPES + LSTM_TYPES

TRANSFORMER_GRID = {
    "embed_dim": (16, 32),
    "heads": (1, 2, 4),
    "ff_dim": (32, 64, 128),
    "encoder_layers": (1, 2, 4),
}
LSTM_GRID = {
    "hidden_size": (10, 25, 50),
    "ngram": (5, 10, 15),
}


def family(model_type):
    if model_type in TRANSFORMER_TYPES:
        return "transformer"
    if model_type in LSTM_TYPES:
        return "lstm"
    raise ConfigViolation(f"unknown model_type {model_type!r}; expected one of {MODEL_TYPES}")


@dataclass(frozen=True)
class ModelConfig:
    model_type: str
    embed_dim: int = 16
    heads: int = 1
    ff_dim: int = 32
    encoder_layers: int = 1
    dropout: float = 0.1
    hidden_size: int = 50
    ngram: int = 5
    head_mlp_dims: tuple = field(default=(128, 64))

    def validate(self):
        fam = family(self.model_type)
        if fam == "transformer":
            if self.heads <= 0 or self.embed_dim % self.heads:
                raise IndivisibleHeads(self.embed_dim, self.heads)
            for key, allowed in TRANSFORMER_GRID.items():
                if getattr(self, key) not in allowed:
                    raise ConfigViolation(f"{key}={getattr(self, key)} not in {allowed}")
            if self.dropout != 0.1:
                raise ConfigViolation(f"transformer block dropout is fixed at 0.1, got {self.dropout}")
        else:
            for key, allowed in LSTM_GRID.items():
                if getattr(self, key) not in allowed:
                    raise ConfigViolation(f"{key}={getattr(self, key)} not in {allowed}")
            if self.embed_dim not in TRANSFORMER_GRID["embed_dim"]:
                raise ConfigViolation(f"embed_dim={self.embed_dim} not in (16, 32)")
            if not 0.0 <= self.dropout < 1.0:
                raise ConfigViolation(f"dropout={self.dropout} outside [0, 1)")
        if any(d <= 0 for d in self.head_mlp_dims):
            raise ConfigViolation("head_mlp_dims must be positive")
        return self

    def to_dict(self):
        d = asdict(self)
        d["head_mlp_dims"] = list(self.head_mlp_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "head_mlp_dims" in d:
            d["head_mlp_dims"] = tuple(d["head_mlp_dims"])
        return cls(**d)


@dataclass
class ModelOutput:
    activity_logits: np.ndarray
    role_logits: np.ndarray
    time_preds: np.ndarray


class UncertaintyWeights(nn.Module):
    """Learnable log-variance scalars, one per head."""

    def __init__(self):
        self.s_activity = Tensor(np.zeros(()), requires_grad=True)
        self.s_role = Tensor(np.zeros(()), requires_grad=True)
        self.s_time = Tensor(np.zeros(()), requires_grad=True)


class _Group(nn.Module):
    def __init__(self, **children):
        for k, v in children.items():
            setattr(self, k, v)


# -- Transformer family ---------------------------------------------------

class _Stream(nn.Module):
    """Input projection -> positional encoding -> encoder stack -> masked mean pool."""

    def __init__(self, embed, cfg, width, rng):
        self.embed = embed
        self.encoder = nn.Encoder(cfg.encoder_layers, cfg.embed_dim, cfg.heads, cfg.ff_dim,
                                  cfg.dropout, rng)
        self._pe = nn.sinusoidal_positions(width, cfg.embed_dim)

    def __call__(self, x, mask, training, rng):
        h = T.add_const(self.embed(x), self._pe)
        h = self.encoder(h, mask, training, rng)
        return T.mean_pool(h, mask)


def _heads(cfg, d_in, n_act, n_role, rng, deep):
    if deep:
        dims = tuple(cfg.head_mlp_dims)
        return _Group(activity=nn.MLP((d_in,) + dims + (n_act,), rng),
                      role=nn.MLP((d_in,) + dims + (n_role,), rng),
                      time=nn.MLP((d_in,) + dims + (3,), rng))
    return _Group(activity=nn.Linear(d_in, n_act, rng), role=nn.Linear(d_in, n_role, rng),
                  time=nn.Linear(d_in, 3, rng))


class PPMModel(nn.Module):
    def __init__(self, config, n_activities, n_roles, width, seed):
        self.config = config
        self.n_activities = n_activities
        self.n_roles = n_roles
        self.width = width
        self.seed = seed
        init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
        self._rng = np.random.Generator(np.random.PCG64(drop_ss))
        self._build(np.random.Generator(np.random.PCG64(init_ss)))
        self.loss_weights = UncertaintyWeights()

    def _build(self, rng):
        raise NotImplementedError

    def _check(self, batch):
        if batch.width != self.width:
            raise ShapeMismatch(f"{self.config.model_type}.forward", batch.activities.shape,
                                ("batch", self.width))

    def __call__(self, batch, training=False):
        self._check(batch)
        return self._forward(batch, training)

    def param_store(self):
        return self.parameters()

    def count_params(self):
        return nn.count_params(self.parameters())


class MTLFormer(PPMModel):
    deep_heads = True

    def _build(self, rng):
        c, d, L = self.config, self.config.embed_dim, self.width
        self.backbone = _Group(
            activity1=_Stream(nn.Embedding(self.n_activities, d, rng), c, L, rng),
            activity2=_Stream(nn.Embedding(self.n_activities, d, rng), c, L, rng),
            role1=_Stream(nn.Embedding(self.n_roles, d, rng), c, L, rng),
            role2=_Stream(nn.Embedding(self.n_roles, d, rng), c, L, rng),
            temporal=_Stream(nn.Linear(3, d, rng), c, L, rng),
            fuse=nn.Linear(3 * d, d, rng),
        )
        self.heads = _heads(c, 3 * d, self.n_activities, self.n_roles, rng, self.deep_heads)

    def _forward(self, batch, training):
        b, m, rng = self.backbone, batch.mask, self._rng
        a1 = b.activity1(batch.activities, m, training, rng)
        r1 = b.role1(batch.roles, m, training, rng)
        t = b.temporal(Tensor(batch.times), m, training, rng)
        a2 = b.activity2(batch.activities, m, training, rng)
        r2 = b.role2(batch.roles, m, training, rng)
        z = T.concat([b.fuse(T.concat([a1, r1, t], axis=-1)), a2, r2], axis=-1)
        return self.heads.activity(z), self.heads.role(z), self.heads.time(z)


class MTLFormerLight(MTLFormer):
    deep_heads = False


class TransformerSimple(PPMModel):
    def _build(self, rng):
        c, d = self.config, self.config.embed_dim
        self.backbone = _Group(
            activity_embed=nn.Embedding(self.n_activities, d // 2, rng),
            role_embed=nn.Embedding(self.n_roles, d // 2, rng),
            encoder=nn.Encoder(c.encoder_layers, d, c.heads, c.ff_dim, c.dropout, rng),
            time_proj=nn.Linear(3, d, rng),
            mix=nn.Linear(2 * d, d, rng),
        )
        self._pe = nn.sinusoidal_positions(self.width, d)
        self.heads = _heads(c, d, self.n_activities, self.n_roles, rng, deep=False)

    def _forward(self, batch, training):
        b, m = self.backbone, batch.mask
        x = T.concat([b.activity_embed(batch.activities), b.role_embed(batch.roles)], axis=-1)
        h = b.encoder(T.add_const(x, self._pe), m, training, self._rng)
        pooled = T.mean_pool(h, m)
        last_t = b.time_proj(Tensor(batch.times[:, -1, :]))
        z = T.relu(b.mix(T.concat([pooled, last_t], axis=-1)))
        return self.heads.activity(z), self.heads.role(z), self.heads.time(z)


# -- LSTM family ---------------------------------------------------------

class _LSTMHead(nn.Module):
    def __init__(self, hidden, n_out, rng):
        self.lstm = nn.LSTM(hidden, hidden, rng)
        self.mlp = nn.MLP((hidden, hidden, n_out), rng, activation=T.tanh)

    def __call__(self, seq):
        _, last = self.lstm(seq)
        return self.mlp(last)


class LSTMModel(PPMModel):
    light = False

    def _build(self, rng):
        c, e, h = self.config, self.config.embed_dim, self.config.hidden_size
        self.backbone = _Group(
            activity_embed=nn.Embedding(self.n_activities, e, rng),
            role_embed=nn.Embedding(self.n_roles, e, rng),
            lstm=nn.LSTM(2 * e + 3, h, rng),
            norm=nn.BatchNorm(h),
        )
        if self.light:
            self.heads = _heads(c, h, self.n_activities, self.n_roles, rng, deep=False)
        else:
            self.heads = _Group(activity=_LSTMHead(h, self.n_activities, rng),
                                role=_LSTMHead(h, self.n_roles, rng),
                                time=_LSTMHead(h, 3, rng))

    def _forward(self, batch, training):
        b = self.backbone
        x = T.concat([b.activity_embed(batch.activities), b.role_embed(batch.roles),
                      Tensor(batch.times)], axis=-1)
        seq, _ = b.lstm(x)
        seq = T.dropout(b.norm(seq, training), self.config.dropout, training, self._rng)
        if self.light:
            z = seq[:, -1, :]
            return self.heads.activity(z), self.heads.role(z), self.heads.time(z)
        return self.heads.activity(seq), self.heads.role(seq), self.heads.time(seq)


class LSTMLight(LSTMModel):
    light = True


_CLASSES = {
    "mtlformer": MTLFormer,
    "mtlformer_light": MTLFormerLight,
    "transformer_simple": TransformerSimple,
    "lstm": LSTMModel,
    "lstm_light": LSTMLight,
}


def input_width(config, max_len):
    """Sequence width a model of this config consumes."""
    return max_len if family(config.model_type) == "transformer" else config.ngram


def build(config, activity_vocab_size, role_vocab_size, max_len, seed=42):
    """Wire the architecture named by ``config.model_type``.

    `max_len` is the padded prefix width; LSTM-family models ignore it and use
    ``config.ngram`` instead.
    """
    config.validate()
    cls = _CLASSES[config.model_type]
    return cls(config, activity_vocab_size, role_vocab_size, input_width(config, max_len), seed)


def forward(model, samples, training=False):
    """Per-sample outputs for a list of Samples."""
    from .features import collate

    act, role, times = model(collate(samples), training)
    return [ModelOutput(a, r, t) for a, r, t in zip(act.data, role.data, times.data)]


def predict_arrays(model, batch, chunk=512):
    """Evaluation-mode outputs as numpy arrays, computed in chunks."""
    outs = [[], [], []]
    for lo in range(0, len(batch), chunk):
        res = model(batch.take(slice(lo, lo + chunk)), training=False)
        for acc, t in zip(outs, res):
            acc.append(t.data)
    return tuple(np.concatenate(o) for o in outs)


def describe(model):
    """Per-tensor parameter table: (name, shape, count)."""
    return [(name, tuple(t.shape), int(t.size)) for name, t in model.parameters().items()]


def describe_text(model):
    rows = describe(model)
    lines = ["name\tshape\tcount"]
    lines += [f"{n}\t{'x'.join(map(str, s)) or 'scalar'}\t{c}" for n, s, c in rows]
    lines.append(f"total\t\t{sum(c for _, _, c in rows)}")
    return "\n".join(lines)


def state_tensors(model):
    """Ordered name -> (array, trainable) over parameters and buffers."""
    return {name: (t.data, t.requires_grad) for name, t in model.named_tensors()}


def load_state(model, tensors):
    own = dict(model.named_tensors())
    if set(own) != set(tensors):
        missing = sorted(set(own) ^ set(tensors))
        raise ShapeMismatch("load_state", missing[:5], "matching tensor names")
    for name, (arr, _) in tensors.items():
        if own[name].shape != arr.shape:
            raise ShapeMismatch(f"load_state[{name}]", arr.shape, own[name].shape)
        own[name].data = np.array(arr, dtype=np.float64)


def snapshot(model):
    return {name: t.data.copy() for name, t in model.named_tensors()}


def restore(model, snap):
    for name, t in model.named_tensors():
        t.data = snap[name].copy()


def save_model(path, model, **meta):
    """Write a checkpoint; `meta` is merged into the header (normalizer, vocabs, seeds...)."""
    from .nn import checkpoint

    header = {"model_type": model.config.model_type, "config": model.config.to_dict(),
              "n_activities": model.n_activities, "n_roles": model.n_roles,
              "width": model.width, "seed": model.seed}
    header.update(meta)
    checkpoint.save(path, state_tensors(model), header)


def load_model(path):
    from .nn import checkpoint

    tensors, meta = checkpoint.load(path)
    cfg = ModelConfig.from_dict(meta["config"])
    cfg.validate()
    model = _CLASSES[cfg.model_type](cfg, meta["n_activities"], meta["n_roles"], meta["width"],
                                     meta["seed"])
    load_state(model, tensors)
    return model, meta
