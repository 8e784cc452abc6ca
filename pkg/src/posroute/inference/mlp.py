"""Small dense classifier over candidate lists, trained with Adam in numpy.

Input is the flattened (10 candidates x F features) block, output one logit
per candidate position; padded positions are masked out of the softmax.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from ..rng import rng_for

MAGIC = b"PRMLP"
FORMAT_VERSION = 1


class DegenerateDataError(ValueError):
    pass


@dataclass
class ModelConfig:
    hidden: tuple = (128, 128, 128, 64)
    lr: float = 1e-3
    passes: int = 1000
    batch_size: int = 256
    holdout: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    permute: bool = True


@dataclass
class MappingModel:
    weights: list
    biases: list
    mean: np.ndarray      # per-feature z-score stats
    std: np.ndarray
    n_candidates: int
    n_features: int
    history: list = field(default_factory=list)

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def standardize(self, x, mask):
        return np.where(mask[..., None], (x - self.mean) / self.std, 0.0)

    def logits(self, x, mask):
        x = np.asarray(x, float)
        mask = np.asarray(mask, bool)
        return _forward(self.weights, self.biases, self.standardize(x, mask).reshape(len(x), -1), mask)[0]

    def predict_proba(self, x, mask) -> np.ndarray:
        return _softmax(self.logits(x, mask), mask)

    # -- serialization: header, layer sizes, row-major weights then biases, z-score stats
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        sizes = self.sizes
        buf.write(MAGIC)
        buf.write(struct.pack("<HHHH", FORMAT_VERSION, len(sizes), self.n_candidates, self.n_features))
        buf.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w in self.weights:
            buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        for b in self.biases:
            buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        buf.write(np.asarray(self.mean, dtype="<f8").tobytes())
        buf.write(np.asarray(self.std, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MappingModel":
        if data[:len(MAGIC)] != MAGIC:
            raise ValueError("not a serialized mapping model")
        off = len(MAGIC)
        version, n_sizes, k, f = struct.unpack_from("<HHHH", data, off)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        off += 8
        sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
        off += 4 * n_sizes

        def take(count):
            nonlocal off
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
            off += 8 * count
            return arr

        ws = [take(a * b).reshape(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        bs = [take(b) for b in sizes[1:]]
        mean, std = take(f), take(f)
        if off != len(data):
            raise ValueError("trailing bytes in serialized model")
        return cls(ws, bs, mean, std, k, f)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "MappingModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def init_params(sizes, rng):
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)))   # He init for ReLU
        bs.append(np.zeros(b))
    return ws, bs


def _forward(ws, bs, x, mask):
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        h = h @ w + b
        if i < len(ws) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    z = np.where(mask, h, -np.inf)
    return z, acts


def _softmax(z, mask):
    m = np.max(z, axis=1, keepdims=True)
    e = np.where(mask, np.exp(z - m), 0.0)
    return e / e.sum(1, keepdims=True)


def loss_and_grads(ws, bs, x, mask, y):
    """Mean masked softmax cross-entropy and its gradients."""
    z, acts = _forward(ws, bs, x, mask)
    p = _softmax(z, mask)
    n = len(y)
    loss = -np.mean(np.log(p[np.arange(n), y]))
    d = p.copy()
    d[np.arange(n), y] -= 1.0
    d /= n
    gw, gb = [None] * len(ws), [None] * len(ws)
    for i in range(len(ws) - 1, -1, -1):
        gw[i] = acts[i].T @ d
        gb[i] = d.sum(0)
        if i:
            d = (d @ ws[i].T) * (acts[i] > 0)
    return loss, gw, gb


def gradient_check(seed: int = 0, n: int = 10, sizes=(60, 16, 16, 10), h: float = 1e-6) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    rng = rng_for(seed, "gradcheck")
    ws, bs = init_params(list(sizes), rng)
    x = rng.normal(size=(n, sizes[0]))
    mask = rng.random((n, sizes[-1])) < 0.8
    mask[:, 0] = True
    y = np.array([rng.choice(np.flatnonzero(m)) for m in mask])
    _, gw, gb = loss_and_grads(ws, bs, x, mask, y)
    worst = 0.0
    for params, grads in ((ws, gw), (bs, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + h
                lp = loss_and_grads(ws, bs, x, mask, y)[0]
                flat[j] = old - h
                lm = loss_and_grads(ws, bs, x, mask, y)[0]
                flat[j] = old
                num = (lp - lm) / (2 * h)
                denom = max(abs(num), abs(gflat[j]), 1e-8)
                worst = max(worst, abs(num - gflat[j]) / denom)
    return worst


def _permute(x, mask, y, rng):
    n, k = mask.shape
    perm = np.argsort(rng.random((n, k)), axis=1)
    rows = np.arange(n)[:, None]
    inv = np.argsort(perm, axis=1)
    return x[rows, perm], mask[rows, perm], inv[np.arange(n), y]


def split(n: int, holdout: float, seed: int):
    idx = rng_for(seed, "holdout").permutation(n)
    cut = int(round(n * (1 - holdout)))
    return np.sort(idx[:cut]), np.sort(idx[cut:])


def accuracy(model: MappingModel, x, mask, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(model.logits(x, mask), axis=1) == y))


def train(examples, seed: int = 0, config: ModelConfig = ModelConfig()) -> tuple:
    """Fit on 80% of ``examples`` (x, mask, y); return (model, metrics)."""
    x, mask, y = np.asarray(examples.x, float), np.asarray(examples.mask, bool), np.asarray(examples.y)
    # with per-pass permutation the label position varies whenever a list has
    # two or more candidates; without it the raw labels must differ
    if len(y) < 2:
        raise DegenerateDataError("training needs at least two examples")
    if config.permute and not np.any(mask.sum(1) >= 2):
        raise DegenerateDataError("every example has a single candidate")
    if not config.permute and len(np.unique(y)) < 2:
        raise DegenerateDataError("training needs at least two distinct label positions")
    n, k, f = x.shape
    tr, te = split(n, config.holdout, seed)
    valid = mask[tr]
    feats = x[tr][valid]
    mean = feats.mean(0)
    std = feats.std(0)
    std[std == 0] = 1.0
    sizes = [k * f, *config.hidden, k]
    rng = rng_for(seed, "mlp-train")
    ws, bs = init_params(sizes, rng)
    model = MappingModel(ws, bs, mean, std, k, f)

    xs = np.where(mask[..., None], (x - mean) / std, 0.0)
    m_w = [np.zeros_like(w) for w in ws]
    v_w = [np.zeros_like(w) for w in ws]
    m_b = [np.zeros_like(b) for b in bs]
    v_b = [np.zeros_like(b) for b in bs]
    b1, b2, step = config.beta1, config.beta2, 0
    history = []
    for _ in range(config.passes):
        xp, mp, yp = xs[tr], mask[tr], y[tr]
        if config.permute:
            xp, mp, yp = _permute(xp, mp, yp, rng)
        order = rng.permutation(len(tr))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            bi = order[s: s + config.batch_size]
            loss, gw, gb = loss_and_grads(ws, bs, xp[bi].reshape(len(bi), -1), mp[bi], yp[bi])
            total += loss * len(bi)
            step += 1
            lr_t = config.lr * np.sqrt(1 - b2 ** step) / (1 - b1 ** step)
            for P, G, M, V in ((ws, gw, m_w, v_w), (bs, gb, m_b, v_b)):
                for i in range(len(P)):
                    M[i] = b1 * M[i] + (1 - b1) * G[i]
                    V[i] = b2 * V[i] + (1 - b2) * G[i] ** 2
                    P[i] -= lr_t * M[i] / (np.sqrt(V[i]) + config.eps)
        history.append(total / len(tr))
    model.history = history
    metrics = {
        "n_train": int(len(tr)),
        "n_holdout": int(len(te)),
        "train_accuracy": accuracy(model, x[tr], mask[tr], y[tr]),
        "holdout_accuracy": accuracy(model, x[te], mask[te], y[te]),
        "final_loss": float(history[-1]) if history else float("nan"),
    }
    return model, metrics
