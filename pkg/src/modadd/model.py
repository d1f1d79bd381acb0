"""Two-layer MLP ``s(x) = V act(W x + b)`` with a strict unique-argmax predictor."""

from __future__ import annotations

import base64
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INVALID = -1
CHECKPOINT_SCHEMA = "modadd.checkpoint/1"


class Activation(str, enum.Enum):
    SINE = "sine"
    RELU = "relu"


@dataclass
class MlpParams:
    W: np.ndarray  # (d, p)
    V: np.ndarray  # (p, d)
    b: np.ndarray | None = None  # (d,)
    act: Activation = Activation.SINE

    def __post_init__(self):
        self.act = Activation(self.act)
        self.W = np.asarray(self.W, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.W.ndim != 2 or self.V.ndim != 2:
            raise ValueError("W and V must be matrices")
        d, p = self.W.shape
        if p < 1 or self.V.shape != (p, d):
            raise ValueError(f"V must have shape {(p, d)} to match W {self.W.shape}, got {self.V.shape}")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64)
            if self.b.shape != (d,):
                raise ValueError(f"bias must have shape ({d},), got {self.b.shape}")

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    @property
    def has_bias(self) -> bool:
        return self.b is not None

    def copy(self) -> "MlpParams":
        return MlpParams(self.W.copy(), self.V.copy(), None if self.b is None else self.b.copy(), self.act)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"W": self.W, "V": self.V}
        if self.b is not None:
            out["b"] = self.b
        return out


def _act(z: np.ndarray, act: Activation) -> np.ndarray:
    return np.sin(z) if act is Activation.SINE else np.maximum(z, 0.0)


def _act_grad(z: np.ndarray, act: Activation) -> np.ndarray:
    # ReLU'(0) = 0
    return np.cos(z) if act is Activation.SINE else (z > 0).astype(np.float64)


def _inputs(theta: MlpParams, x) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.shape[-1] != theta.p:
        raise ValueError(f"input has {X.shape[-1]} coordinates, network expects p={theta.p}")
    return X


def preactivations(theta: MlpParams, x) -> np.ndarray:
    X = _inputs(theta, x)
    Z = X @ theta.W.T
    if theta.b is not None:
        Z = Z + theta.b
    return Z


def scores(theta: MlpParams, x) -> np.ndarray:
    """Score vector(s); ``x`` may be a single bag (p,) or a batch (n, p)."""
    return _act(preactivations(theta, x), theta.act) @ theta.V.T


def uargmax(S: np.ndarray) -> np.ndarray:
    """Row-wise unique argmax; ``INVALID`` where the maximum is attained more than once."""
    S = np.atleast_2d(S)
    top = S.max(axis=1, keepdims=True)
    ties = (S == top).sum(axis=1)
    out = S.argmax(axis=1).astype(np.int64)
    out[ties != 1] = INVALID
    return out


def predict(theta: MlpParams, x) -> int:
    return int(uargmax(scores(theta, x))[0])


def predict_batch(theta: MlpParams, X) -> np.ndarray:
    return uargmax(scores(theta, X))


def _log_softmax(S: np.ndarray) -> np.ndarray:
    S = S - S.max(axis=1, keepdims=True)
    return S - np.log(np.exp(S).sum(axis=1, keepdims=True))


def cross_entropy_arrays(theta: MlpParams, X, y) -> float:
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("cross-entropy of an empty set")
    logp = _log_softmax(np.atleast_2d(scores(theta, X)))
    return float(-logp[np.arange(y.size), y].mean())


def cross_entropy(theta: MlpParams, data) -> float:
    """Mean cross-entropy of the scores-as-logits over a labeled set."""
    return cross_entropy_arrays(theta, data.X, data.y)


def loss_and_grad(theta: MlpParams, X, y) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and its exact gradient w.r.t. ``W``, ``V`` (and ``b``)."""
    X = np.atleast_2d(_inputs(theta, X))
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    if n == 0:
        raise ValueError("gradient of an empty batch")
    Z = X @ theta.W.T
    if theta.b is not None:
        Z += theta.b
    H = _act(Z, theta.act)
    S = H @ theta.V.T
    S -= S.max(axis=1, keepdims=True)
    E = np.exp(S)
    sumE = E.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(np.mean(np.log(sumE[:, 0]) - S[rows, y]))
    dS = E / sumE
    dS[rows, y] -= 1.0
    dS /= n
    grads = {"V": dS.T @ H}
    dZ = (dS @ theta.V) * _act_grad(Z, theta.act)
    grads["W"] = dZ.T @ X
    if theta.b is not None:
        grads["b"] = dZ.sum(axis=0)
    return loss, grads


def grad_cross_entropy(theta: MlpParams, batch) -> dict[str, np.ndarray]:
    return loss_and_grad(theta, batch.X, batch.y)[1]


# --- checkpoints --------------------------------------------------------------

def _pack(a: np.ndarray, encoding: str):
    if encoding == "b64":
        return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")
    return a.ravel().tolist()


def _unpack(blob, shape, encoding: str) -> np.ndarray:
    if encoding == "b64":
        a = np.frombuffer(base64.b64decode(blob), dtype="<f8").astype(np.float64)
    else:
        a = np.asarray(blob, dtype=np.float64)
    return a.reshape(shape)


def checkpoint_dict(theta: MlpParams, encoding: str = "b64") -> dict:
    if encoding not in ("b64", "list"):
        raise ValueError(f"unknown weight encoding {encoding!r}")
    out = {
        "schema": CHECKPOINT_SCHEMA,
        "d": theta.d,
        "p": theta.p,
        "act": theta.act.value,
        "bias": theta.has_bias,
        "encoding": encoding,
        "W": _pack(theta.W, encoding),
        "V": _pack(theta.V, encoding),
    }
    if theta.has_bias:
        out["b"] = _pack(theta.b, encoding)
    return out


def params_from_dict(obj: dict) -> MlpParams:
    allowed = {"schema", "d", "p", "act", "bias", "encoding", "W", "V", "b"}
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown checkpoint fields {sorted(extra)}")
    if obj.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {obj.get('schema')!r}")
    d, p, enc = int(obj["d"]), int(obj["p"]), obj["encoding"]
    b = _unpack(obj["b"], (d,), enc) if obj["bias"] else None
    return MlpParams(_unpack(obj["W"], (d, p), enc), _unpack(obj["V"], (p, d), enc), b, Activation(obj["act"]))


def save_checkpoint(theta: MlpParams, path, encoding: str = "b64") -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(theta, encoding)), encoding="utf-8")


def load_checkpoint(path) -> MlpParams:
    return params_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
