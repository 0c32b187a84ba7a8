"""Feature-level open-set RF fingerprint identification.

Transmitters are unit vectors; every emission adds Gaussian feature noise and
re-normalises. Identification is Euclidean k-NN with a distance threshold for
rogue rejection.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

ROGUE = "Rogue"
_FP_STREAM = 0x4FF


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Fingerprint:
    vector: np.ndarray = field(repr=False)
    owner_seed: int = 0


@dataclass(frozen=True, eq=False)
class RffSample:
    vector: np.ndarray = field(repr=False)
    # ground truth for the simulator; protocol code must not look at it
    emitted_by: int | None = field(default=None, repr=False)


@dataclass(frozen=True)
class ClassifierConfig:
    k: int = 5
    threshold: float = 1.0
    metric: str = "euclidean"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if self.metric != "euclidean":
            raise ValueError("only the euclidean metric is supported")


@dataclass(frozen=True)
class RffDatabase:
    """Enrolled feature vectors per identity. Copy-on-write: updates return a new db."""

    entries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, ident):
        return ident in self.entries

    def ids(self):
        return sorted(self.entries)

    def matrix(self):
        ids = self.ids()
        if not ids:
            return np.empty((0, 0)), np.empty(0, dtype=np.int64)
        mats = [self.entries[i] for i in ids]
        labels = np.concatenate([np.full(len(m), i, dtype=np.int64) for m, i in zip(mats, ids)])
        return np.vstack(mats), labels

    def without(self, ident) -> "RffDatabase":
        return RffDatabase({k: v for k, v in self.entries.items() if k != ident})

    def to_json(self) -> str:
        return json.dumps(
            {str(i): self.entries[i].tolist() for i in self.ids()}, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "RffDatabase":
        raw = json.loads(text)
        return cls({int(k): np.asarray(v, dtype=np.float64) for k, v in raw.items()})


def _unit(v):
    return v / np.linalg.norm(v)


def transmitter_new(owner_seed: int, dim: int = 64) -> Fingerprint:
    if dim < 8:
        raise ValueError("fingerprint dimension must be >= 8")
    rng = np.random.default_rng([owner_seed, _FP_STREAM])
    v = _unit(rng.standard_normal(dim))
    v.setflags(write=False)
    return Fingerprint(v, owner_seed)


def emit_sample(fp: Fingerprint, noise_sigma: float, rng, emitted_by=None) -> RffSample:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if noise_sigma == 0:
        return RffSample(fp.vector.copy(), emitted_by)
    v = fp.vector + rng.normal(0.0, noise_sigma, size=fp.vector.shape)
    return RffSample(_unit(v), emitted_by)


def enroll(db: RffDatabase, ident: int, samples) -> RffDatabase:
    """Add (or replace) an identity's enrolled vectors."""
    if not samples:
        raise ValueError("enrollment needs at least one sample")
    vecs = np.vstack([s.vector for s in samples]).astype(np.float64)
    entries = dict(db.entries)
    entries[ident] = vecs
    return RffDatabase(entries)


def knn_score(db: RffDatabase, cfg: ClassifierConfig, vector):
    """Mean distance to the k nearest enrolled vectors and their labels."""
    mat, labels = db.matrix()
    if len(labels) == 0:
        raise ValueError("cannot classify against an empty database")
    dist = np.linalg.norm(mat - vector, axis=1)
    k = min(cfg.k, len(dist))
    idx = np.argpartition(dist, k - 1)[:k]
    return float(dist[idx].mean()), labels[idx]


def classify(db: RffDatabase, cfg: ClassifierConfig, sample: RffSample):
    """Identity of the sample's transmitter, or ROGUE."""
    score, labels = knn_score(db, cfg, sample.vector)
    if score > cfg.threshold:
        return ROGUE
    votes = Counter(labels.tolist())
    top = max(votes.values())
    return min(i for i, n in votes.items() if n == top)


def loo_scores(db: RffDatabase, k: int) -> np.ndarray:
    """Leave-one-out k-NN mean distance for every enrolled vector."""
    mat, _ = db.matrix()
    sq = np.sum(mat**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * mat @ mat.T, 0.0)
    np.fill_diagonal(d2, np.inf)
    nearest = np.partition(d2, k - 1, axis=1)[:, :k]
    return np.sqrt(nearest).mean(axis=1)


def calibrate_threshold(db: RffDatabase, cfg: ClassifierConfig, percentile: float = 99.0):
    if not 0 <= percentile <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    if len(db) == 0 or any(len(v) <= cfg.k for v in db.entries.values()):
        raise CalibrationError(f"every identity needs more than k={cfg.k} enrolled samples")
    scores = loo_scores(db, cfg.k)
    threshold = float(np.percentile(scores, percentile))
    return replace(cfg, threshold=max(threshold, np.finfo(float).tiny))


def rogue_detection_auc(db: RffDatabase, cfg: ClassifierConfig, known, rogue) -> float:
    from sklearn.metrics import roc_auc_score

    scores = [knn_score(db, cfg, s.vector)[0] for s in list(known) + list(rogue)]
    y = [0] * len(known) + [1] * len(rogue)
    return float(roc_auc_score(y, scores))
