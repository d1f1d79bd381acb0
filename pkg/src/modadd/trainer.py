"""Mini-batch training of the two-layer MLP on static (multi-length) training sets.

Randomness is split into independent Philox streams so that data content,
data order and initialization never share state:

* training shard of length ``m``: ``RngStream(seed*1009 + m, 1)``
* held-out set of length ``m``:   ``RngStream(seed*2009 + m, 2)``
* shuffle for epoch ``e``:         ``RngStream(seed*3009 + e, 3)``
* initialization:                  ``RngStream(seed, 4)``
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .data import LabeledSet, TaskSpec, sample_set
from .metrics import EvalSummary, evaluate, margin_report
from .model import Activation, MlpParams, cross_entropy, loss_and_grad
from .numerics import RngStream
from .optim import OptimConfig, OptimState, default_wd_policy, step

RUN_SCHEMA = "modadd.run/1"
DEFAULT_SEEDS = (1337, 1338, 1339)
OOD_TRAIN_LENGTHS = (2, 3, 4, 5, 7, 13, 19)
OOD_EVAL_LENGTHS = (14, 38, 53, 97, 201, 303, 401, 512, 602, 705, 811)

TRAIN_STREAM, TEST_STREAM, SHUFFLE_STREAM, INIT_STREAM = 1, 2, 3, 4


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; carries the records logged so far."""

    def __init__(self, message: str, records: list, theta: MlpParams, epoch: int):
        super().__init__(message)
        self.records = records
        self.theta = theta
        self.epoch = epoch


@dataclass
class TrainConfig:
    p: int
    lengths: tuple[int, ...]
    d: int
    act: Activation = Activation.SINE
    bias: bool = False
    n_train: int = 1000
    epochs: int = 1000
    batch: int = 1024
    optim: OptimConfig = field(default_factory=OptimConfig)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    init_std: float = 0.01
    eval_lengths: tuple[int, ...] = ()
    test_n: int = 10000
    test_lengths: tuple[int, ...] | None = None  # in-domain test lengths; defaults to the training lengths
    log_every: int | None = None  # None: every ceil(epochs/200) epochs
    log_margins: bool = True

    def __post_init__(self):
        self.act = Activation(self.act)
        if isinstance(self.optim, dict):
            self.optim = OptimConfig.from_dict(self.optim)
        self.lengths = tuple(int(m) for m in self.lengths)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.eval_lengths = tuple(int(m) for m in self.eval_lengths)
        if self.test_lengths is not None:
            self.test_lengths = tuple(int(m) for m in self.test_lengths)
        if not self.lengths:
            raise ValueError("at least one training length is required")
        for m in self.lengths + self.eval_lengths + (self.test_lengths or ()):
            TaskSpec(self.p, m)
        if len(set(self.lengths)) != len(self.lengths):
            raise ValueError("training lengths must be distinct")
        if self.d < 1:
            raise ValueError("width d must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.n_train < len(self.lengths):
            raise ValueError("every training length needs at least one sample")
        if self.test_n < 1:
            raise ValueError("test_n must be >= 1")
        if self.init_std < 0:
            raise ValueError("init_std must be non-negative")
        if self.log_every is not None and self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    @property
    def specs(self) -> list[TaskSpec]:
        return [TaskSpec(self.p, m) for m in self.lengths]

    @property
    def log_interval(self) -> int:
        return self.log_every or max(1, math.ceil(self.epochs / 200))

    def shard_sizes(self) -> list[int]:
        return split_budget(self.n_train, len(self.lengths))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["act"] = self.act.value
        d["optim"] = self.optim.to_dict()
        for k in ("lengths", "seeds", "eval_lengths"):
            d[k] = list(d[k])
        if self.test_lengths is not None:
            d["test_lengths"] = list(self.test_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown training-config fields {sorted(extra)}")
        return cls(**d)

    def config_hash(self) -> str:
        """Hash of everything except the seed list, so cells share it across seeds."""
        d = self.to_dict()
        d.pop("seeds")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "TrainConfig":
        """Copy with fields replaced; ``optim.<field>`` or bare optimizer field names reach the optimizer.

        Changing ``act`` without naming a ``wd_policy`` switches the policy to the
        activation's default (sine: V only, ReLU: both layers).
        """
        own, opt = {}, {}
        optim_fields = set(OptimConfig.__dataclass_fields__)
        for k, v in kw.items():
            if k.startswith("optim."):
                opt[k[len("optim."):]] = v
            elif k in self.__dataclass_fields__:
                own[k] = v
            elif k in optim_fields:
                opt[k] = v
            else:
                raise ValueError(f"{k!r} is neither a training nor an optimizer field")
        if "act" in own and "wd_policy" not in opt:
            opt["wd_policy"] = default_wd_policy(own["act"])
        if opt:
            own["optim"] = OptimConfig.from_dict({**self.optim.to_dict(), **opt})
        return replace(self, **own)


def split_budget(n: int, parts: int) -> list[int]:
    """Split ``n`` as evenly as possible; the first ``n % parts`` shares get one extra."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    q, r = divmod(n, parts)
    return [q + 1 if i < r else q for i in range(parts)]


# --- data and initialization --------------------------------------------------------

def training_shards(cfg: TrainConfig, seed: int) -> list[LabeledSet]:
    return [
        sample_set(spec, n, RngStream(seed * 1009 + spec.m, TRAIN_STREAM))
        for spec, n in zip(cfg.specs, cfg.shard_sizes())
    ]


def test_set(p: int, m: int, n: int, seed: int) -> LabeledSet:
    """Held-out set for length ``m``; the same for every epoch and every caller."""
    return sample_set(TaskSpec(p, m), n, RngStream(seed * 2009 + m, TEST_STREAM))


def init_params(cfg: TrainConfig, seed: int) -> MlpParams:
    rng = RngStream(seed, INIT_STREAM)
    W = rng.normal(0.0, cfg.init_std, size=(cfg.d, cfg.p))
    V = rng.normal(0.0, cfg.init_std, size=(cfg.p, cfg.d))
    b = rng.normal(0.0, cfg.init_std, size=cfg.d) if cfg.bias else None
    return MlpParams(W, V, b, cfg.act)


def epoch_batches(shards: list[LabeledSet], batch: int, seed: int, epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Reshuffle each shard, cut it into batches (last one partial), and interleave shards round-robin."""
    rng = RngStream(seed * 3009 + epoch, SHUFFLE_STREAM)
    per_shard = []
    for sh in shards:
        perm = rng.permutation(len(sh))
        per_shard.append([perm[i:i + batch] for i in range(0, len(sh), batch)])
    for j in range(max(len(b) for b in per_shard)):
        for sh, idx in zip(shards, per_shard):
            if j < len(idx):
                yield sh.X[idx[j]], sh.y[idx[j]]


# --- records --------------------------------------------------------------------------

@dataclass
class RunRecord:
    epoch: int
    train_acc: float
    test_acc: float
    loss: float
    wallclock: float
    margins: dict = field(default_factory=dict)
    ood: dict = field(default_factory=dict)  # length -> accuracy
    config_hash: str = ""
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ood"] = {str(k): v for k, v in self.ood.items()}
        return d


@dataclass
class TrainResult:
    cfg: TrainConfig
    seed: int
    records: list[RunRecord]
    theta: MlpParams

    @property
    def final(self) -> RunRecord:
        return self.records[-1]


def evaluate_ood(theta: MlpParams, lengths: Iterable[int], test_n: int, seed: int) -> dict[int, EvalSummary]:
    """Accuracy on the fixed held-out set of each length."""
    return {m: evaluate(theta, test_set(theta.p, m, test_n, seed)) for m in lengths}


def _snapshot(theta, cfg, train, tests, epoch, t0, chash, seed, with_ood) -> RunRecord:
    rec = RunRecord(
        epoch=epoch,
        train_acc=evaluate(theta, train).accuracy,
        test_acc=float(np.mean([evaluate(theta, t).accuracy for t in tests])),
        loss=cross_entropy(theta, train),
        wallclock=time.perf_counter() - t0,
        config_hash=chash,
        seed=seed,
    )
    if cfg.log_margins:
        rec.margins = margin_report(theta, train).summary()
    if with_ood and cfg.eval_lengths:
        rec.ood = {m: s.accuracy for m, s in evaluate_ood(theta, cfg.eval_lengths, cfg.test_n, seed).items()}
    return rec


def train(cfg: TrainConfig, seed: int | None = None,
          sink: Callable[[RunRecord], None] | None = None, ood_every_log: bool = False) -> TrainResult:
    """One deterministic run: static shards, per-epoch reshuffle, optimizer steps, periodic logs.

    Out-of-distribution accuracies are computed for the final record only unless
    ``ood_every_log`` is set.
    """
    seed = cfg.seeds[0] if seed is None else int(seed)
    chash = cfg.config_hash()
    shards = training_shards(cfg, seed)
    train_set = LabeledSet.merge(shards)
    tests = [test_set(cfg.p, m, cfg.test_n, seed) for m in (cfg.test_lengths or cfg.lengths)]
    theta = init_params(cfg, seed)
    state = OptimState()
    records: list[RunRecord] = []
    t0 = time.perf_counter()

    def log(epoch, final):
        rec = _snapshot(theta, cfg, train_set, tests, epoch, t0, chash, seed, final or ood_every_log)
        records.append(rec)
        if sink is not None:
            sink(rec)

    for epoch in range(1, cfg.epochs + 1):
        for Xb, yb in epoch_batches(shards, cfg.batch, seed, epoch):
            loss, grads = loss_and_grad(theta, Xb, yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", records, theta, epoch)
            step(theta, grads, cfg.optim, state)
        if epoch == cfg.epochs:
            log(epoch, True)
        elif epoch % cfg.log_interval == 0:
            log(epoch, False)
    return TrainResult(cfg, seed, records, theta)


def train_multilength(cfg: TrainConfig, seed: int | None = None, **kw) -> TrainResult:
    """Same loop as :func:`train`; named entry point for multi-length configurations."""
    if len(cfg.lengths) < 2:
        raise ValueError("multi-length training needs at least two lengths")
    return train(cfg, seed, **kw)


def train_all(cfg: TrainConfig, **kw) -> list[TrainResult]:
    return [train(cfg, s, **kw) for s in cfg.seeds]


# --- JSONL persistence ------------------------------------------------------------------

def write_run_jsonl(path, cfg: TrainConfig, seed: int, records: Iterable[RunRecord], status: str = "ok") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        header = {"schema": RUN_SCHEMA, "config": cfg.to_dict(), "config_hash": cfg.config_hash(),
                  "seed": seed, "status": status}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


_RECORD_KEYS = set(RunRecord.__dataclass_fields__)


def read_run_jsonl(path) -> tuple[dict, list[RunRecord]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty run file")
    header = json.loads(lines[0])
    if header.get("schema") != RUN_SCHEMA:
        raise ValueError(f"{path}: unsupported schema {header.get('schema')!r}")
    extra = set(header) - {"schema", "config", "config_hash", "seed", "status"}
    if extra:
        raise ValueError(f"{path}: unknown header fields {sorted(extra)}")
    records = []
    for ln in lines[1:]:
        d = json.loads(ln)
        if set(d) - _RECORD_KEYS:
            raise ValueError(f"{path}: unknown record fields {sorted(set(d) - _RECORD_KEYS)}")
        d["ood"] = {int(k): v for k, v in d.get("ood", {}).items()}
        records.append(RunRecord(**d))
    return header, records
