"""Uncertainty-weighted multi-task training and the two hyperparameter grids."""
from __future__ import annotations

import hashlib
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import models as M
from .errors import DataError, NonFiniteLoss, PPMError
from .features import Batch, build_ngram_samples, build_prefix_samples, collate
from .models import ModelConfig, UncertaintyWeights
from .nn import Adam
from .nn import ops as T
from .nn.optim import make_rng

log = logging.getLogger(__name__)

TRANSFORMER_TRAIN_GRID = {"learning_rate": (3e-4, 6e-4), "batch_size": (8, 16, 32)}
LSTM_TRAIN_GRID = {"learning_rate": (5e-4, 1e-3, 5e-3, 3e-4, 6e-4), "batch_size": (8, 16, 32, 64)}

__all__ = ["TrainConfig", "TrainHistory", "UncertaintyWeights", "combined_loss", "train",
           "grid_search", "family_grid", "candidate_seed"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 6e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 42

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_activity: float
    val_role: float
    val_time: float
    seconds: float

    @property
    def val_raw(self):
        """Unweighted sum of the three per-head validation losses."""
        return self.val_activity + self.val_role + self.val_time


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_validation_loss: float = float("inf")

    @property
    def best(self):
        return self.epochs[self.best_epoch - 1] if self.best_epoch > 0 else None

    def to_csv(self):
        cols = ("epoch", "train_loss", "val_loss", "val_activity", "val_role", "val_time", "seconds")
        lines = [",".join(cols)]
        for r in self.epochs:
            lines.append(",".join(repr(getattr(r, c)) for c in cols))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        h = cls([EpochRecord(int(r[0]), *map(float, r[1:])) for r in rows])
        for rec in h.epochs:
            if rec.val_loss < h.best_validation_loss:
                h.best_validation_loss, h.best_epoch = rec.val_loss, rec.epoch
        return h


def combined_loss(l_act, l_role, l_time, weights):
    """sum_i exp(-s_i) * L_i + s_i over the three heads."""
    total = None
    for loss, s in ((l_act, weights.s_activity), (l_role, weights.s_role), (l_time, weights.s_time)):
        term = T.exp(-s) * loss + s
        total = term if total is None else total + term
    return total


def head_losses(outputs, batch):
    act, role, times = outputs
    return (T.cross_entropy(act, batch.target_activity),
            T.cross_entropy(role, batch.target_role),
            T.mse(times, batch.target_times))


def _np_cross_entropy(logits, targets):
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float((lse - z[np.arange(len(targets)), targets]).mean())


def evaluation_losses(model, batch):
    """(combined, activity, role, time) losses in evaluation mode, current s_i."""
    act, role, times = M.predict_arrays(model, batch)
    la = _np_cross_entropy(act, batch.target_activity)
    lr = _np_cross_entropy(role, batch.target_role)
    lt = float(((times - batch.target_times) ** 2).mean())
    w = model.loss_weights
    comb = sum(np.exp(-s.data) * v + s.data
               for v, s in ((la, w.s_activity), (lr, w.s_role), (lt, w.s_time)))
    return float(comb), la, lr, lt


def _as_batch(samples):
    return samples if isinstance(samples, Batch) else collate(samples)


def train(model, train_samples, val_samples, config):
    """Minibatch Adam on the uncertainty-combined loss with early stopping.

    Returns the model restored to its best-validation epoch and the history.
    Raises NonFiniteLoss as soon as a batch (or the validation pass) yields a
    non-finite loss.
    """
    tb, vb = _as_batch(train_samples), _as_batch(val_samples)
    if len(vb) == 0:
        raise DataError("validation set is empty")
    rng = make_rng(config.seed)
    opt = Adam(model.parameters(), config.learning_rate)
    hist = TrainHistory()
    best_state, bad = None, 0
    n = len(tb)
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        total = 0.0
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            mb = tb.take(perm[lo:lo + config.batch_size])
            loss = combined_loss(*head_losses(model(mb, training=True), mb), model.loss_weights)
            if not np.isfinite(loss.data):
                raise NonFiniteLoss(epoch, bi)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(mb)
        comb, la, lr, lt = evaluation_losses(model, vb)
        if not np.isfinite(comb):
            raise NonFiniteLoss(epoch, -1)
        hist.epochs.append(EpochRecord(epoch, total / n, comb, la, lr, lt,
                                       time.perf_counter() - t0))
        if comb < hist.best_validation_loss:
            hist.best_validation_loss, hist.best_epoch = comb, epoch
            best_state, bad = M.snapshot(model), 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    M.restore(model, best_state)
    return model, hist


# -- grid search ------------------------------------------------------------

def family_grid(model_type, base=None):
    """Deterministically ordered (ModelConfig, TrainConfig) pairs for a model type."""
    base = base or TrainConfig()
    fam = M.family(model_type)
    out = []
    if fam == "transformer":
        g, tg = M.TRANSFORMER_GRID, TRANSFORMER_TRAIN_GRID
        for d, h, ff, lr, bs, layers in itertools.product(
                g["embed_dim"], g["heads"], g["ff_dim"], tg["learning_rate"], tg["batch_size"],
                g["encoder_layers"]):
            if d % h:
                continue
            out.append((ModelConfig(model_type, embed_dim=d, heads=h, ff_dim=ff,
                                    encoder_layers=layers),
                        TrainConfig(lr, bs, base.max_epochs, base.patience, base.seed)))
    else:
        g, tg = M.LSTM_GRID, LSTM_TRAIN_GRID
        for lr, bs, ng, hid in itertools.product(tg["learning_rate"], tg["batch_size"],
                                                 g["ngram"], g["hidden_size"]):
            out.append((ModelConfig(model_type, hidden_size=hid, ngram=ng),
                        TrainConfig(lr, bs, base.max_epochs, base.patience, base.seed)))
    return out


def candidate_seed(global_seed, index):
    digest = hashlib.sha256(f"{global_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class GridResult:
    index: int
    model_config: ModelConfig
    train_config: TrainConfig
    seed: int
    param_count: int = 0
    status: str = "ok"
    error: str = ""
    history: TrainHistory | None = None
    state: bytes | None = field(default=None, repr=False)

    @property
    def best_val_loss(self):
        return self.history.best_validation_loss if self.history and self.status == "ok" else float("nan")

    @property
    def best_val_raw(self):
        if self.status != "ok" or not self.history or not self.history.best:
            return float("nan")
        return self.history.best.val_raw


def encode_for(config, prepared, part):
    """Samples of one split part ('train' | 'validation' | 'test') in the model family's encoding."""
    log_ = getattr(prepared.split, part)
    if M.family(config.model_type) == "transformer":
        return build_prefix_samples(log_, prepared.normalizer, prepared.max_len)
    return build_ngram_samples(log_, prepared.normalizer, config.ngram)


def _checkpoint_meta(prepared, tc, index=None):
    meta = {"normalizer": prepared.normalizer.to_dict(), "max_len": prepared.max_len,
            "train_config": tc.to_dict(),
            "activity_vocab": prepared.split.train.activity_vocab.to_list(),
            "role_vocab": prepared.split.train.role_vocab.to_list()}
    if index is not None:
        meta["candidate"] = index
    return meta


def run_candidate(index, mc, tc, prepared, global_seed, keep_state=True, _cache=None):
    from .nn import checkpoint

    seed = candidate_seed(global_seed, index)
    tc = TrainConfig(tc.learning_rate, tc.batch_size, tc.max_epochs, tc.patience, seed)
    res = GridResult(index, mc, tc, seed)
    try:
        acts, roles = prepared.split.train.activity_vocab, prepared.split.train.role_vocab
        model = M.build(mc, len(acts), len(roles), prepared.max_len, seed=seed)
        res.param_count = model.count_params()
        key = M.input_width(mc, prepared.max_len)
        if _cache is not None and key in _cache:
            tb, vb = _cache[key]
        else:
            tb = collate(encode_for(mc, prepared, "train"))
            vb = collate(encode_for(mc, prepared, "validation"))
            if _cache is not None:
                _cache[key] = (tb, vb)
        model, res.history = train(model, tb, vb, tc)
        if keep_state:
            header = {"model_type": mc.model_type, "config": mc.to_dict(),
                      "n_activities": model.n_activities, "n_roles": model.n_roles,
                      "width": model.width, "seed": seed}
            header.update(_checkpoint_meta(prepared, tc, index))
            res.state = checkpoint.dumps(M.state_tensors(model), header)
    except PPMError as exc:
        res.status, res.error = "failed", f"{type(exc).__name__}: {exc}"
        log.warning("candidate %d failed: %s", index, res.error)
    return res


def _run_packed(args):
    return run_candidate(*args)


def grid_search(model_type, prepared, candidates=None, grid_limit=None, global_seed=42,
                base=None, jobs=1, keep_state=True, progress=None):
    """Train every candidate of the family grid (or `candidates`) and collect results.

    Each candidate's seed is derived from (global_seed, candidate index), so any
    prefix of the grid reproduces the corresponding rows of a full run. Failed
    candidates are recorded with status "failed" rather than aborting the grid.
    """
    cands = candidates if candidates is not None else family_grid(model_type, base)
    if grid_limit is not None:
        cands = cands[:grid_limit]
    jobs_args = [(i, mc, tc, prepared, global_seed, keep_state) for i, (mc, tc) in enumerate(cands)]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for res in ex.map(_run_packed, jobs_args):
                results.append(res)
                if progress:
                    progress(res)
    else:
        cache = {}
        for a in jobs_args:
            res = run_candidate(*a, _cache=cache)
            results.append(res)
            if progress:
                progress(res)
    results.sort(key=lambda r: r.index)
    return results
