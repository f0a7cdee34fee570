"""Object-relation attention kernel over supplied appearance features and
2D box geometry.

Pure numerics: callers provide the feature vectors and the linear maps; the
kernel computes geometry-gated, appearance-weighted feature sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

GEOMETRY_DIM = 64
DEFAULT_EPS = 1e-3
DEFAULT_WAVELENGTH_BASE = 1000.0


@dataclass(frozen=True)
class Box2D:
    center: np.ndarray  # (2,) pixels
    width: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (2,):
            raise ValueError("center must be a 2-vector")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("box width and height must be positive")


@dataclass(frozen=True)
class RelationWeights:
    """Linear maps for the attention kernel.

    w_q, w_k, w_v: (d_k, d_a); w_g: (GEOMETRY_DIM,) mapping the geometry
    embedding to a scalar gate.
    """
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_g: np.ndarray

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v", "w_g"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if self.w_q.shape != self.w_k.shape or self.w_q.shape != self.w_v.shape:
            raise ValueError("w_q, w_k, w_v must share shape (d_k, d_a)")
        if self.w_q.ndim != 2 or self.w_q.shape[0] < 1:
            raise ValueError("projection maps must be 2D with d_k > 0")
        if self.w_g.shape != (GEOMETRY_DIM,):
            raise ValueError(f"w_g must have shape ({GEOMETRY_DIM},)")
        for name in ("w_q", "w_k", "w_v", "w_g"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def d_k(self):
        return self.w_q.shape[0]

    @property
    def d_a(self):
        return self.w_q.shape[1]

    @classmethod
    def random(cls, d_a, d_k, seed=0, scale=None):
        rng = np.random.default_rng(seed)
        if scale is None:
            scale = 1.0 / np.sqrt(d_a)
        return cls(rng.normal(0, scale, (d_k, d_a)),
                   rng.normal(0, scale, (d_k, d_a)),
                   rng.normal(0, scale, (d_k, d_a)),
                   rng.normal(0, scale, GEOMETRY_DIM))

    def save(self, path):
        doc = {"d_k": self.d_k, "d_a": self.d_a, "layout": "row-major",
               "w_q": self.w_q.ravel().tolist(),
               "w_k": self.w_k.ravel().tolist(),
               "w_v": self.w_v.ravel().tolist(),
               "w_g": self.w_g.tolist()}
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        dk, da = doc["d_k"], doc["d_a"]
        return cls(np.array(doc["w_q"]).reshape(dk, da),
                   np.array(doc["w_k"]).reshape(dk, da),
                   np.array(doc["w_v"]).reshape(dk, da),
                   np.array(doc["w_g"]))


def geometry_embedding(box_i: Box2D, box_j: Box2D, eps=DEFAULT_EPS,
                       base=DEFAULT_WAVELENGTH_BASE,
                       dims_per_component=GEOMETRY_DIM // 4):
    """Sinusoidal encoding of the relative geometry of two 2D boxes.

    The raw descriptor is (log(|dx|/w_i + eps), log(|dy|/h_i + eps),
    log(w_j/w_i), log(h_j/h_i)); each component gets dims_per_component
    alternating sin/cos channels over geometric frequencies.  Scale-invariant
    by construction.
    """
    dx, dy = box_j.center - box_i.center
    raw = np.array([np.log(abs(dx) / box_i.width + eps),
                    np.log(abs(dy) / box_i.height + eps),
                    np.log(box_j.width / box_i.width),
                    np.log(box_j.height / box_i.height)])
    half = dims_per_component // 2
    freqs = base ** (-np.arange(half) / half)
    angles = raw[:, None] * freqs[None, :]
    emb = np.empty((4, dims_per_component))
    emb[:, 0::2] = np.sin(angles)
    emb[:, 1::2] = np.cos(angles)
    return emb.ravel()


def attention_weights(features, boxes, weights: RelationWeights,
                      eps=DEFAULT_EPS, base=DEFAULT_WAVELENGTH_BASE):
    """The normalized (N, N) attention weight matrix.

    Appearance similarity w_a[i, j] = <Wq f_i, Wk f_j> / sqrt(d_k); geometry
    gate relu(Wg . embedding(i, j)); weights are gate * exp(w_a)
    row-normalized.  Rows whose gates all vanish fall back to a plain softmax
    of w_a.  Self-pairs are included.
    """
    f = np.asarray(features, dtype=float)
    if f.ndim != 2:
        raise ValueError("features must be (N, d_a)")
    n = f.shape[0]
    if n < 1 or len(boxes) != n:
        raise ValueError("features and boxes must have equal length N >= 1")
    if f.shape[1] != weights.d_a:
        raise ValueError(
            f"feature dimension {f.shape[1]} != weight d_a {weights.d_a}")

    q = f @ weights.w_q.T
    k = f @ weights.w_k.T
    w_a = (q @ k.T) / np.sqrt(weights.d_k)

    gate = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            emb = geometry_embedding(boxes[i], boxes[j], eps=eps, base=base)
            gate[i, j] = max(0.0, float(weights.w_g @ emb))

    # Stabilized row-wise normalization of gate * exp(w_a).
    e = np.exp(w_a - w_a.max(axis=1, keepdims=True))
    num = gate * e
    row = num.sum(axis=1, keepdims=True)
    dead = row[:, 0] == 0.0
    if np.any(dead):
        num[dead] = e[dead]
        row[dead] = e[dead].sum(axis=1, keepdims=True)
    return num / row


def attention_sum(features, boxes, weights: RelationWeights,
                  eps=DEFAULT_EPS, base=DEFAULT_WAVELENGTH_BASE):
    """Relational feature per object: the attention-weighted sum of the
    value-projected features.  Returns an (N, d_k) array."""
    f = np.asarray(features, dtype=float)
    omega = attention_weights(f, boxes, weights, eps=eps, base=base)
    return omega @ (f @ weights.w_v.T)
