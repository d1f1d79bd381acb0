"""SGD, AdamW and Muon updates over the named arrays of an :class:`MlpParams`.

All updates are in place on the arrays held by ``theta`` and deterministic.
Decoupled decay follows the PyTorch ordering: shrink ``θ ← θ(1 - lr·wd)``
first, then apply the optimizer step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import Activation, MlpParams

# odd quintic used by the Newton-Schulz iteration
NS_COEFFS = (3.4445, -4.7750, 2.0315)


class OptimKind(str, enum.Enum):
    SGD = "sgd"
    ADAMW = "adamw"
    MUON = "muon"


class WdPolicy(str, enum.Enum):
    V_ONLY = "v_only"
    BOTH = "both"
    NONE = "none"


def default_wd_policy(act: Activation | str) -> WdPolicy:
    return WdPolicy.V_ONLY if Activation(act) is Activation.SINE else WdPolicy.BOTH


@dataclass
class OptimConfig:
    kind: OptimKind = OptimKind.ADAMW
    lr: float = 1e-3
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    momentum: float = 0.0
    nesterov: bool = False
    ns_steps: int = 5
    wd_policy: WdPolicy = WdPolicy.BOTH
    ns_coeffs: tuple[float, float, float] = NS_COEFFS

    def __post_init__(self):
        self.kind = OptimKind(self.kind)
        self.wd_policy = WdPolicy(self.wd_policy)
        self.betas = tuple(float(b) for b in self.betas)
        self.ns_coeffs = tuple(float(c) for c in self.ns_coeffs)
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")
        if self.ns_steps < 1:
            raise ValueError("ns_steps must be >= 1")

    @classmethod
    def sgd(cls, lr: float = 0.1, **kw) -> "OptimConfig":
        return cls(kind=OptimKind.SGD, lr=lr, **kw)

    @classmethod
    def adamw(cls, lr: float = 1e-3, weight_decay: float = 0.0, **kw) -> "OptimConfig":
        return cls(kind=OptimKind.ADAMW, lr=lr, weight_decay=weight_decay, **kw)

    @classmethod
    def muon(cls, lr: float = 1e-3, weight_decay: float = 0.0, **kw) -> "OptimConfig":
        kw.setdefault("momentum", 0.95)
        kw.setdefault("nesterov", True)
        return cls(kind=OptimKind.MUON, lr=lr, weight_decay=weight_decay, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["wd_policy"] = self.wd_policy.value
        d["betas"] = list(self.betas)
        d["ns_coeffs"] = list(self.ns_coeffs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown optimizer fields {sorted(extra)}")
        return cls(**d)


@dataclass
class OptimState:
    step: int = 0
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def slot(self, name: str, key: str, like: np.ndarray) -> np.ndarray:
        per = self.buffers.setdefault(name, {})
        if key not in per:
            per[key] = np.zeros_like(like)
        return per[key]


def decays(name: str, policy: WdPolicy) -> bool:
    """Whether parameter ``name`` receives weight decay under ``policy``; the bias never does."""
    if name == "V":
        return policy in (WdPolicy.V_ONLY, WdPolicy.BOTH)
    if name == "W":
        return policy is WdPolicy.BOTH
    return False


def sgd_step(theta: MlpParams, grads: dict, cfg: OptimConfig, state: OptimState) -> MlpParams:
    """Plain SGD, with optional heavy-ball momentum and coupled L2 decay (PyTorch semantics)."""
    state.step += 1
    for name, param in theta.arrays().items():
        g = grads[name]
        if cfg.weight_decay and decays(name, cfg.wd_policy):
            g = g + cfg.weight_decay * param
        if cfg.momentum:
            buf = state.slot(name, "momentum", param)
            if state.step == 1:
                buf[...] = g
            else:
                buf *= cfg.momentum
                buf += g
            g = g + cfg.momentum * buf if cfg.nesterov else buf
        param -= cfg.lr * g
    return theta


def _adamw_update(name: str, param: np.ndarray, g: np.ndarray, cfg: OptimConfig, state: OptimState,
                  step: int, weight_decay: float) -> None:
    b1, b2 = cfg.betas
    if weight_decay:
        param *= 1.0 - cfg.lr * weight_decay
    m = state.slot(name, "exp_avg", param)
    v = state.slot(name, "exp_avg_sq", param)
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    bc1 = 1.0 - b1**step
    bc2 = 1.0 - b2**step
    denom = np.sqrt(v) / math.sqrt(bc2) + cfg.eps
    param -= (cfg.lr / bc1) * m / denom


def adamw_step(theta: MlpParams, grads: dict, cfg: OptimConfig, state: OptimState) -> MlpParams:
    state.step += 1
    for name, param in theta.arrays().items():
        wd = cfg.weight_decay if decays(name, cfg.wd_policy) else 0.0
        _adamw_update(name, param, grads[name], cfg, state, state.step, wd)
    return theta


def newton_schulz_orthogonalize(G, steps: int = 5, coeffs=NS_COEFFS) -> np.ndarray:
    """Approximate the orthogonal polar factor of ``G``.

    ``X0 = G/‖G‖_F`` followed by ``steps`` rounds of ``X ← aX + b(XXᵀ)X + c(XXᵀ)²X``.
    The result is ``U g(Σ/‖G‖_F) Vᵀ`` where ``g`` is the quintic composed
    ``steps`` times.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2:
        raise ValueError("Newton-Schulz needs a matrix")
    a, b, c = coeffs
    norm = np.linalg.norm(G)
    if norm == 0.0:
        return np.zeros_like(G)
    tall = G.shape[0] > G.shape[1]
    X = (G.T if tall else G) / norm
    for _ in range(steps):
        A = X @ X.T
        X = a * X + (b * A + c * (A @ A)) @ X
    return X.T if tall else X


def composed_quintic(sigma, steps: int = 5, coeffs=NS_COEFFS) -> np.ndarray:
    """Scalar map applied to each normalized singular value by the iteration."""
    a, b, c = coeffs
    s = np.asarray(sigma, dtype=np.float64)
    for _ in range(steps):
        s = a * s + b * s**3 + c * s**5
    return s


def muon_update(name: str, param: np.ndarray, g: np.ndarray, cfg: OptimConfig, state: OptimState,
                weight_decay: float) -> None:
    if param.ndim != 2:
        raise ValueError(f"Muon only handles matrices; route 1-D parameter {name!r} to AdamW")
    if weight_decay:
        param *= 1.0 - cfg.lr * weight_decay
    buf = state.slot(name, "momentum", param)
    buf *= cfg.momentum
    buf += g
    update = g + cfg.momentum * buf if cfg.nesterov else buf
    O = newton_schulz_orthogonalize(update, cfg.ns_steps, cfg.ns_coeffs)
    rows, cols = param.shape
    scale = math.sqrt(max(rows, cols) / min(rows, cols))
    param -= cfg.lr * scale * O


def muon_step(theta: MlpParams, grads: dict, cfg: OptimConfig, state: OptimState) -> MlpParams:
    """Muon on ``W`` and ``V``; a bias, if present, gets AdamW without decay."""
    state.step += 1
    for name, param in theta.arrays().items():
        if param.ndim == 1:
            _adamw_update(name, param, grads[name], cfg, state, state.step, 0.0)
            continue
        wd = cfg.weight_decay if decays(name, cfg.wd_policy) else 0.0
        muon_update(name, param, grads[name], cfg, state, wd)
    return theta


_STEPS = {OptimKind.SGD: sgd_step, OptimKind.ADAMW: adamw_step, OptimKind.MUON: muon_step}


def step(theta: MlpParams, grads: dict, cfg: OptimConfig, state: OptimState) -> MlpParams:
    return _STEPS[cfg.kind](theta, grads, cfg, state)
