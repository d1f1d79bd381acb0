"""Modular-addition instances: sampling, exhaustive enumeration, bag encoding.

A sequence ``s_1..s_m`` over ``{0..p-1}`` is seen by the model only through its
bag-of-tokens count vector ``x`` (length ``p``, entries summing to ``m``); the
label is ``sum(s_i) mod p``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .numerics import RngStream

DATASET_SCHEMA = "modadd.dataset/1"
DEFAULT_ENUM_CAP = 10**7


@dataclass(frozen=True)
class TaskSpec:
    p: int
    m: int

    def __post_init__(self):
        if int(self.p) < 2:
            raise ValueError(f"modulus p must be >= 2, got {self.p}")
        if int(self.m) < 2:
            raise ValueError(f"sequence length m must be >= 2, got {self.m}")

    @property
    def domain_size(self) -> int:
        """``|X_m| = C(m+p-1, p-1)``."""
        return math.comb(self.m + self.p - 1, self.p - 1)


@dataclass
class LabeledSet:
    """Bags ``X`` (n, p) with labels ``y`` (n,).

    ``m`` is ``None`` for sets merged across lengths. ``sequences`` keeps the raw
    token draws when the set was sampled.
    """

    p: int
    X: np.ndarray
    y: np.ndarray
    m: int | None
    provenance: dict = field(default_factory=dict)
    sequences: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[1] != self.p:
            raise ValueError(f"X must have shape (n, {self.p}), got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("X and y disagree on the number of items")

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @property
    def spec(self) -> TaskSpec:
        if self.m is None:
            raise ValueError("mixed-length set has no single TaskSpec")
        return TaskSpec(self.p, self.m)

    def subset(self, idx) -> "LabeledSet":
        seqs = None if self.sequences is None else self.sequences[idx]
        return LabeledSet(self.p, self.X[idx], self.y[idx], self.m, dict(self.provenance), seqs)

    @staticmethod
    def merge(sets: Iterable["LabeledSet"]) -> "LabeledSet":
        sets = list(sets)
        if not sets:
            raise ValueError("nothing to merge")
        p = sets[0].p
        if any(s.p != p for s in sets):
            raise ValueError("cannot merge sets with different moduli")
        ms = {s.m for s in sets}
        m = ms.pop() if len(ms) == 1 else None
        X = np.concatenate([s.X for s in sets])
        y = np.concatenate([s.y for s in sets])
        return LabeledSet(p, X, y, m, {"merged": [s.provenance for s in sets]})


def _check_tokens(seqs: np.ndarray, p: int) -> None:
    if seqs.size and (seqs.min() < 0 or seqs.max() >= p):
        bad = seqs[(seqs < 0) | (seqs >= p)].ravel()[0]
        raise ValueError(f"token {bad} outside vocabulary [0, {p})")


def encode(seq, spec: TaskSpec) -> np.ndarray:
    """Count vector of a single token sequence."""
    s = np.asarray(seq, dtype=np.int64)
    if s.ndim != 1 or s.shape[0] != spec.m:
        raise ValueError(f"expected a sequence of length {spec.m}, got shape {s.shape}")
    _check_tokens(s, spec.p)
    return np.bincount(s, minlength=spec.p).astype(np.int64)


def encode_batch(seqs: np.ndarray, p: int) -> np.ndarray:
    """Count vectors for an (n, m) array of token sequences."""
    seqs = np.asarray(seqs, dtype=np.int64)
    _check_tokens(seqs, p)
    n = seqs.shape[0]
    flat = (seqs + p * np.arange(n, dtype=np.int64)[:, None]).ravel()
    return np.bincount(flat, minlength=n * p).reshape(n, p).astype(np.int64)


def label_of(x, spec: TaskSpec | int) -> int:
    p = spec.p if isinstance(spec, TaskSpec) else int(spec)
    x = np.asarray(x, dtype=np.int64)
    return int(np.dot(np.arange(p, dtype=np.int64), x) % p)


def labels_of(X: np.ndarray, p: int) -> np.ndarray:
    return (np.asarray(X, dtype=np.int64) @ np.arange(p, dtype=np.int64)) % p


def sample_set(spec: TaskSpec, n: int, rng: RngStream) -> LabeledSet:
    """``n`` i.i.d. uniform sequences (duplicates kept), encoded and labeled.

    Draws are consumed row by row, so for a fixed stream the set of size ``n``
    is a prefix of any larger set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seqs = rng.integers(0, spec.p, size=(n, spec.m), dtype=np.int64)
    X = encode_batch(seqs, spec.p)
    prov = {"seed": rng.seed, "stream_id": rng.stream_id, "n": int(n)}
    return LabeledSet(spec.p, X, seqs.sum(axis=1) % spec.p, spec.m, prov, seqs)


def enumerate_domain(spec: TaskSpec, cap: int = DEFAULT_ENUM_CAP) -> LabeledSet:
    """Every bag of ``X_m`` once, in ascending lexicographic order of counts."""
    size = spec.domain_size
    if size > cap:
        raise ValueError(f"|X_m| = {size} exceeds the enumeration cap {cap}")
    # sorted multisets come out in descending lexicographic order of their counts
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations_with_replacement(range(spec.p), spec.m)),
        dtype=np.int64,
        count=size * spec.m,
    ).reshape(size, spec.m)[::-1]
    X = encode_batch(combos, spec.p)
    return LabeledSet(spec.p, X, labels_of(X, spec.p), spec.m, {"exhaustive": True})


def multinomial_weights(X: np.ndarray, m: int, p: int) -> np.ndarray:
    """Probability of each bag under uniform token draws: ``m!/prod(x_r!) / p^m``."""
    X = np.asarray(X, dtype=np.int64)
    if m <= 20:
        fact = np.array([math.factorial(k) for k in range(m + 1)], dtype=np.int64)
        counts = fact[m] // np.prod(fact[X], axis=1)
        return counts.astype(np.float64) / float(p) ** m
    from scipy.special import gammaln

    logw = gammaln(m + 1) - gammaln(X + 1).sum(axis=1) - m * math.log(p)
    return np.exp(logw)


def multinomial_counts(X: np.ndarray, m: int) -> list[int]:
    """Exact number of sequences mapping to each bag (Python ints)."""
    out = []
    for row in np.asarray(X, dtype=np.int64):
        c = math.factorial(m)
        for k in row:
            c //= math.factorial(int(k))
        out.append(c)
    return out


def exact_label_distribution(spec: TaskSpec) -> list[Fraction]:
    """Distribution of ``sum(s_i) mod p`` by m-fold cyclic convolution, in exact rationals."""
    p = spec.p
    dist = [Fraction(0)] * p
    dist[0] = Fraction(1)
    step = Fraction(1, p)
    for _ in range(spec.m):
        dist = [sum(dist[(r - u) % p] for u in range(p)) * step for r in range(p)]
    return dist


# --- JSONL import/export ------------------------------------------------------

_HEADER_KEYS = {"schema", "p", "m", "n", "provenance"}
_ITEM_KEYS = {"counts", "label"}


def save_jsonl(data: LabeledSet, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {"schema": DATASET_SCHEMA, "p": data.p, "m": data.m, "n": len(data), "provenance": data.provenance}
        fh.write(json.dumps(header) + "\n")
        for x, y in zip(data.X.tolist(), data.y.tolist()):
            fh.write(json.dumps({"counts": x, "label": y}) + "\n")


def load_jsonl(path) -> LabeledSet:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    extra = set(header) - _HEADER_KEYS
    if extra:
        raise ValueError(f"{path}: unknown header fields {sorted(extra)}")
    if header.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"{path}: unsupported schema {header.get('schema')!r}")
    p, m = int(header["p"]), header["m"]
    X, y = [], []
    for ln in lines[1:]:
        rec = json.loads(ln)
        if set(rec) != _ITEM_KEYS:
            raise ValueError(f"{path}: bad item fields {sorted(rec)}")
        X.append(rec["counts"])
        y.append(rec["label"])
    if len(X) != header["n"]:
        raise ValueError(f"{path}: header says n={header['n']}, found {len(X)} items")
    X = np.asarray(X, dtype=np.int64).reshape(len(X), p)
    y = np.asarray(y, dtype=np.int64)
    if np.any(labels_of(X, p) != y):
        raise ValueError(f"{path}: stored labels disagree with the bags")
    return LabeledSet(p, X, y, m, header.get("provenance", {}))
