"""Adaptive retrieval routing: a tiny cost-weighted logistic model.

Features per query: constraint count, relational-keyword count, dense
score drop, and a binary failed-before flag.  The loss is weighted
cross-entropy with a heavier penalty on false negatives (missing a query
that needed the graph), trained by full-batch gradient descent from a
seeded init so the fitted weights are bit-reproducible.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .vector import ScoredDoc, normalize_phrases, score_drop

FEATURE_NAMES = ("n_c", "n_r", "score_drop", "fail_h")

# longest-first so the scan never splits a long phrase into a short hit
_RELATIONAL_LEXICON = [
    r"walking\s+distance",
    r"school\s+district",
    r"commute\s+to",
    r"close\s+to",
    r"next\s+to",
    r"(?:within|under|in|below)\s+\d+\s*min(?:ute)?s?\b",
    r"adjacent",
    r"\bnear\b",
]
_RELATIONAL_RE = re.compile("|".join(f"(?:{p})" for p in _RELATIONAL_LEXICON))


def relational_keyword_count(query: str) -> int:
    """Non-overlapping relational-phrase hits in the normalized query."""
    return sum(1 for _ in _RELATIONAL_RE.finditer(normalize_phrases(query)))


@dataclass(frozen=True)
class RouterFeatures:
    n_c: int
    n_r: int
    score_drop: float
    fail_h: int

    def as_array(self) -> np.ndarray:
        return np.array([self.n_c, self.n_r, self.score_drop, self.fail_h], dtype=np.float64)

    def to_dict(self) -> dict:
        return {"n_c": self.n_c, "n_r": self.n_r, "score_drop": self.score_drop, "fail_h": self.fail_h}


@dataclass(frozen=True)
class RoutingHistoryEvent:
    """What the router remembers of an earlier turn in the session."""

    relational_kinds: frozenset[str]
    failed: bool  # constraint_conflict or empty graph result


def featurize(
    query: str,
    cs,
    dense: Sequence[ScoredDoc],
    history: Sequence[RoutingHistoryEvent] = (),
) -> RouterFeatures:
    """``cs`` is the post-fusion effective constraint set, so constraints
    carried by memory count toward n_c and the fail_h kind overlap."""
    kinds = cs.relational_kinds()
    fail_h = 0
    for event in history:
        if event.failed and kinds & event.relational_kinds:
            fail_h = 1
            break
    return RouterFeatures(
        n_c=cs.n_c,
        n_r=relational_keyword_count(query),
        score_drop=score_drop(dense),
        fail_h=fail_h,
    )


@dataclass(frozen=True)
class RoutingDecision:
    p: float
    route: str  # "graph" | "dense"
    features: Optional[RouterFeatures] = None

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "route": self.route,
            "features": self.features.to_dict() if self.features else None,
        }


@dataclass(frozen=True)
class TrainingConfig:
    c_fn: float = 5.0
    c_fp: float = 1.0
    learning_rate: float = 0.5
    epochs: int = 400
    seed: int = 7
    threshold: float = 0.5


class UntrainedModelError(RuntimeError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def loss_and_grad(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy and its gradient.

    ``params`` = [bias, theta...]; written with softplus so the value stays
    finite and smooth (the gradient check differentiates it numerically).
    """
    bias, theta = params[0], params[1:]
    z = X @ theta + bias
    # -y log p - (1-y) log(1-p) == softplus(z) - y z
    losses = np.logaddexp(0.0, z) - y * z
    total = float(np.sum(weights * losses))
    p = _sigmoid(z)
    resid = weights * (p - y)
    grad = np.empty_like(params)
    grad[0] = float(np.sum(resid))
    grad[1:] = X.T @ resid
    return total, grad


class RouterModel:
    def __init__(
        self,
        theta: np.ndarray,
        bias: float,
        mean: np.ndarray,
        std: np.ndarray,
        threshold: float = 0.5,
        config: Optional[dict] = None,
    ):
        self.theta = np.asarray(theta, dtype=np.float64)
        self.bias = float(bias)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self.threshold = float(threshold)
        self.config = config or {}

    def standardize(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.mean) / self.std

    def predict_proba(self, f: RouterFeatures) -> float:
        x = self.standardize(f.as_array())
        return float(_sigmoid(np.array([x @ self.theta + self.bias]))[0])

    def predict(self, f: RouterFeatures) -> RoutingDecision:
        p = self.predict_proba(f)
        return RoutingDecision(p=p, route="graph" if p >= self.threshold else "dense", features=f)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "features": list(FEATURE_NAMES),
            "theta": self.theta.tolist(),
            "bias": self.bias,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "threshold": self.threshold,
            "config": self.config,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "RouterModel":
        if d.get("version") != 1:
            raise ValueError(f"unsupported router model version: {d.get('version')!r}")
        return cls(
            theta=np.array(d["theta"]),
            bias=d["bias"],
            mean=np.array(d["mean"]),
            std=np.array(d["std"]),
            threshold=d["threshold"],
            config=d.get("config", {}),
        )

    @classmethod
    def load(cls, path: str) -> "RouterModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(data: Sequence[tuple[RouterFeatures, int]], cfg: TrainingConfig = TrainingConfig()) -> RouterModel:
    """Full-batch gradient descent on the weighted cross-entropy."""
    if not data:
        raise ValueError("empty training set")
    y = np.array([label for _, label in data], dtype=np.float64)
    if y.min() == y.max():
        raise ValueError("training data contains a single class")
    X_raw = np.vstack([f.as_array() for f, _ in data])
    mean = X_raw.mean(axis=0)
    std = X_raw.std(axis=0)
    std[std == 0.0] = 1.0
    X = (X_raw - mean) / std
    weights = np.where(y == 1.0, cfg.c_fn, cfg.c_fp)

    rng = np.random.default_rng(cfg.seed)
    params = rng.normal(0.0, 0.01, size=X.shape[1] + 1)
    lr = cfg.learning_rate / len(data)
    for _ in range(cfg.epochs):
        _, grad = loss_and_grad(params, X, y, weights)
        params = params - lr * grad
    return RouterModel(
        theta=params[1:],
        bias=params[0],
        mean=mean,
        std=std,
        threshold=cfg.threshold,
        config={
            "c_fn": cfg.c_fn,
            "c_fp": cfg.c_fp,
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
        },
    )


def load_training_rows(path: str) -> list[tuple[RouterFeatures, int]]:
    """JSONL rows with the four feature fields plus ``label``."""
    rows: list[tuple[RouterFeatures, int]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            rows.append(
                (
                    RouterFeatures(
                        n_c=int(d["n_c"]),
                        n_r=int(d["n_r"]),
                        score_drop=float(d["score_drop"]),
                        fail_h=int(d["fail_h"]),
                    ),
                    int(d["label"]),
                )
            )
    return rows
