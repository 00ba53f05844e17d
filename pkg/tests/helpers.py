"""Independent oracles shared by the unit tests and the acceptance suite."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from leanppm.nn import ops as T
from leanppm.nn.layers import Linear, lstm_layer, multi_head_attention
from leanppm.nn.tensor import Tensor

# ---------------------------------------------------------------- gradients


def _scalarize(out, proj):
    return float((out * proj).sum())


def grad_check(fn, arrays, h=1e-5, seed=0):
    """Max relative error between autodiff and central differences over all inputs.

    The output is reduced with a fixed random projection so the whole Jacobian is
    exercised, not only its column sums. Gradient norms below 1e-5 are compared
    absolutely (some gradients, e.g. attention key biases, are exactly zero).
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = fn(*[Tensor(a) for a in arrays]).data
    proj = np.random.default_rng(seed).normal(size=out.shape)

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    y = fn(*tensors)
    loss = T.sum(T.mul_const(y, proj))
    loss.backward()

    worst = 0.0
    for i, a in enumerate(arrays):
        num = np.zeros_like(a)
        flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = _scalarize(fn(*[Tensor(b) for b in arrays]).data, proj)
            flat[j] = orig - h
            fm = _scalarize(fn(*[Tensor(b) for b in arrays]).data, proj)
            flat[j] = orig
            num.reshape(-1)[j] = (fp - fm) / (2 * h)
        ana = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(a)
        scale = max(np.linalg.norm(ana), np.linalg.norm(num), 1e-5)
        worst = max(worst, float(np.linalg.norm(ana - num) / scale))
    return worst


def _away_from_zero(x, eps=1e-2):
    return np.where(np.abs(x) < eps, np.sign(x + 1e-30) * eps, x)


def _shapes(rng, ndim_choices=(2, 3), lo=1, hi=5, n=5):
    out = []
    for _ in range(n):
        nd = int(rng.choice(ndim_choices))
        out.append(tuple(int(s) for s in rng.integers(lo, hi + 1, size=nd)))
    return out


def op_cases(seed=0):
    """name -> list of (fn, arrays); at least five random shapes per differentiable op."""
    rng = np.random.default_rng(seed)
    N = rng.normal
    cases = {}

    def add_case(name, fn, *arrays):
        cases.setdefault(name, []).append((fn, list(arrays)))

    for s in _shapes(rng):
        add_case("add", T.add, N(size=s), N(size=s))
        add_case("sub", T.sub, N(size=s), N(size=s))
        add_case("mul", T.mul, N(size=s), N(size=s))
        add_case("neg", T.neg, N(size=s))
        c = N(size=s)
        add_case("add_const", lambda x, c=c: T.add_const(x, c), N(size=s))
        add_case("mul_const", lambda x, c=c: T.mul_const(x, c), N(size=s))
        add_case("relu", T.relu, _away_from_zero(N(size=s)))
        add_case("tanh", T.tanh, N(size=s))
        add_case("sigmoid", T.sigmoid, N(size=s))
        add_case("exp", T.exp, N(size=s))
        add_case("log", T.log, rng.uniform(0.5, 2.0, size=s))
        add_case("sum", T.sum, N(size=s))
        add_case("mean", T.mean, N(size=s))
        add_case("reshape", lambda x: T.reshape(x, (-1,)), N(size=s))
        perm = tuple(rng.permutation(len(s)))
        add_case("transpose", lambda x, p=perm: T.transpose(x, p), N(size=s))
        add_case("slice", lambda x: x[..., : max(1, x.shape[-1] - 1)], N(size=s))
        idx = rng.integers(0, s[0], size=4)
        add_case("gather", lambda x, i=idx: x[i], N(size=s))
        add_case("concat", lambda a, b: T.concat([a, b], axis=-1), N(size=s),
                 N(size=s[:-1] + (int(rng.integers(1, 4)),)))
        add_case("softmax", lambda x: T.softmax(x, axis=-1), N(size=s))
        m = rng.random(s) > 0.3
        m[..., 0] = True
        add_case("softmax_masked", lambda x, m=m: T.softmax(x, axis=-1, mask=m), N(size=s))
        w = s[-1] + 2
        add_case("layer_norm", T.layer_norm, N(size=s[:-1] + (w,)), N(size=w), N(size=w))
        d = s[-1]
        add_case("batch_norm_train",
                 lambda x, g, b, d=d: T.batch_norm(x, g, b, Tensor(np.zeros(d)), Tensor(np.ones(d)), True),
                 N(size=s[:-1] + (d,)) if np.prod(s[:-1]) > 1 else N(size=(3, d)), N(size=d), N(size=d))
        rm, rv = N(size=d), rng.uniform(0.5, 2.0, size=d)
        add_case("batch_norm_eval",
                 lambda x, g, b, rm=rm, rv=rv: T.batch_norm(x, g, b, Tensor(rm), Tensor(rv), False),
                 N(size=s), N(size=d), N(size=d))
        add_case("dropout",
                 lambda x: T.dropout(x, 0.3, True, np.random.default_rng(5)), N(size=s))
        k, mdim = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        add_case("matmul", T.matmul, N(size=s[:-1] + (k,)) if len(s) > 1 else N(size=(2, k)),
                 N(size=(k, mdim)))
        lead = s[:-1] if len(s) > 2 else (2,)
        add_case("matmul_batched", T.matmul, N(size=lead + (3, k)), N(size=lead + (k, mdim)))
        add_case("linear", T.linear, N(size=s[:-1] + (k,)) if len(s) > 1 else N(size=(2, k)),
                 N(size=(k, mdim)), N(size=mdim))
        B, L, dd = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        pm = rng.random((B, L)) > 0.4
        pm[:, -1] = True
        add_case("mean_pool", lambda x, m=pm: T.mean_pool(x, m), N(size=(B, L, dd)))
        V = int(rng.integers(3, 7))
        ix = rng.integers(0, V, size=(B, L))
        add_case("embedding", lambda t, ix=ix: T.embedding(t, ix), N(size=(V, dd)))
        C = int(rng.integers(2, 6))
        tgt = rng.integers(0, C, size=B + 1)
        add_case("cross_entropy", lambda z, t=tgt: T.cross_entropy(z, t), N(size=(B + 1, C)))
        tt = N(size=(B, 3))
        add_case("mse", lambda p, t=tt: T.mse(p, t), N(size=(B, 3)))
    return cases


def composite_cases(seed=0):
    """Gradient checks through multi-head attention and the LSTM recurrence."""
    rng = np.random.default_rng(seed)
    out = {"multi_head_attention": [], "lstm_layer": []}
    for B, L, d, h in [(1, 3, 8, 2), (2, 3, 8, 2), (2, 4, 4, 1), (1, 2, 6, 3), (2, 5, 4, 4)]:
        lin = [Linear(d, d, rng) for _ in range(4)]
        for layer in lin:
            layer.b.data = rng.normal(size=d) * 0.1
        mask = np.ones((B, L), bool)
        mask[0, 0] = L == 1

        def fn(x, *ws, lin=lin, mask=mask, h=h):
            for i, layer in enumerate(lin):
                layer.w, layer.b = ws[2 * i], ws[2 * i + 1]
            y, _ = multi_head_attention(x, h, *lin, mask=mask)
            return y

        arrays = [rng.normal(size=(B, L, d))]
        for layer in lin:
            arrays += [layer.w.data.copy(), layer.b.data.copy()]
        out["multi_head_attention"].append((fn, arrays))
    for B, L, di, hs in [(1, 4, 3, 5), (2, 4, 3, 5), (3, 2, 2, 3), (2, 3, 4, 2), (1, 1, 3, 4)]:
        arrays = [rng.normal(size=(B, L, di)), rng.normal(size=(di, 4 * hs)) * 0.5,
                  rng.normal(size=(hs, 4 * hs)) * 0.5, rng.normal(size=4 * hs) * 0.1]
        out["lstm_layer"].append((lambda x, w, u, b: lstm_layer(x, w, u, b)[0], arrays))
    return out


def reuse_case(rng):
    """Same tensor consumed on two paths: x*x + tanh(x)."""
    return (lambda x: T.add(T.mul(x, x), T.tanh(x))), [rng.normal(size=(3, 4))]


# ---------------------------------------------------------------- encoding


def enumerate_targets(log_):
    """Brute-force prefix enumerator over raw traces (boundary events added here).

    Yields (case_id, k, activity, role, waiting, duration, remaining) straight
    from the task definitions, with negative waits clamped to 0.
    """
    out = []
    for tr in log_.traces:
        evs = [("«start»", "«start»", tr.events[0].start, tr.events[0].start)]
        evs += [(e.activity, e.role, e.start, e.end) for e in tr.events]
        evs += [("«end»", "«end»", tr.events[-1].end, tr.events[-1].end)]
        n = len(evs)
        for k in range(1, n):
            nxt, cur, last = evs[k], evs[k - 1], evs[n - 1]
            out.append((tr.case_id, k, nxt[0], nxt[1], max(nxt[2] - cur[3], 0.0),
                        nxt[3] - nxt[2], last[3] - cur[3]))
    return out


# ---------------------------------------------------------------- metrics


def f1_bruteforce(pred, true, classes, mode="weighted"):
    """Per-class precision/recall from an explicit confusion matrix, in exact rationals."""
    cm = [[0] * classes for _ in range(classes)]
    for p, t in zip(pred, true):
        cm[t][p] += 1
    f1s, supports, seen = [], [], []
    for c in range(classes):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(classes)) - tp
        fn = sum(cm[c]) - tp
        prec = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        rec = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else Fraction(0))
        supports.append(tp + fn)
        seen.append(tp + fp + fn > 0)
    if mode == "weighted":
        return float(sum(f * s for f, s in zip(f1s, supports)) / sum(supports))
    vals = [f for f, s in zip(f1s, seen) if s]
    return float(sum(vals) / len(vals))


def mae_days_oracle(pred, true, mean, std):
    total = 0.0
    for p, t in zip(pred, true):
        total += abs((p * std + mean) - (t * std + mean))
    return total / len(pred) / 86400.0


# ---------------------------------------------------------------- selection


def select_bruteforce(cands, lam):
    """Index minimising S over all candidates, computed from scratch."""
    n = len(cands)
    star = 0
    for i in range(1, n):
        pi, li = cands[i]
        ps, ls = cands[star]
        if (li, pi) < (ls, ps):
            star = i
    ps, ls = cands[star]
    best, best_key = None, None
    for i, (p, v) in enumerate(cands):
        s = p / ps + lam * (v - ls) / ls
        key = (s, p, i)
        if best_key is None or key < best_key:
            best, best_key = i, key
    return best, star
