"""Closed-form networks for modular addition and the algebra they are built from.

Sine networks read the label off ``sin``/``cos`` of ``2πy/p``. The ReLU networks
approximate the Fourier modes ``cos(2πνy/p)``, ``sin(2πνy/p)`` through a
Newton-identity expansion into powers of linear forms, each power realized by
a ReLU interpolating spline.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import TaskSpec
from .model import Activation, MlpParams

TWO_PI = 2.0 * math.pi
DEFAULT_WEIGHT_CAP = 2 * 10**8

__all__ = [
    "NewtonTerm",
    "ReluPlan",
    "SplineUnit",
    "TrigPolyPair",
    "cycle_index_lambda",
    "grid_cos",
    "grid_sin",
    "newton_expansion",
    "newton_total_count",
    "polarize",
    "relu_construction",
    "relu_construction_m2",
    "relu_mode_readout",
    "relu_plan",
    "relu_spline_power",
    "sine_halfp_unbiased",
    "sine_highmargin_2p",
    "sine_width2_biased_uniform",
    "sine_width2_fixed",
    "stirling_first",
    "trig_sum_polynomialize",
    "wrap_angle",
]


# --- exact trigonometry on the grid 2πj/p ---------------------------------------

def wrap_angle(t):
    """Reduce angles to ``[-π, π)`` with a floor-based modulo."""
    t = np.asarray(t, dtype=np.float64)
    return t - TWO_PI * np.floor((t + math.pi) / TWO_PI)


def grid_sin(j, p: int) -> np.ndarray:
    """``sin(2πj/p)`` with exact zeros at ``j ≡ 0, p/2`` and exact antisymmetry ``j ↔ p-j``."""
    r = np.mod(np.asarray(j, dtype=np.int64), p)
    flip = 2 * r > p
    rr = np.where(flip, p - r, r)
    val = np.sin(TWO_PI * rr / p)
    val = np.where(flip, -val, val)
    val[(r == 0) | (2 * r == p)] = 0.0
    return val


def grid_cos(j, p: int) -> np.ndarray:
    """``cos(2πj/p)`` with exact symmetry ``j ↔ p-j`` and exact zeros at quarter turns."""
    r = np.mod(np.asarray(j, dtype=np.int64), p)
    rr = np.minimum(r, p - r)
    val = np.cos(TWO_PI * rr / p)
    val[4 * rr == p] = 0.0
    return val


# --- sine constructions ----------------------------------------------------------

def sine_width2_fixed(spec: TaskSpec) -> MlpParams:
    """Width-2, bias-free sine net exact on ``X_m`` for the given length ``m``.

    Unit 1 reads ``sin(2πy/p)``; unit 2 adds ``π/(2m)`` per token so that, since
    every bag has ``m`` tokens, it reads ``cos(2πy/p)``. Class ``q`` then scores
    ``cos(2π(y-q)/p)``.
    """
    p, m = spec.p, spec.m
    r = np.arange(p)
    base = TWO_PI * r / p
    W = np.stack([wrap_angle(base), wrap_angle(base + math.pi / (2 * m))])
    V = np.stack([grid_sin(r, p), grid_cos(r, p)], axis=1)
    return MlpParams(W, V, None, Activation.SINE)


def sine_width2_biased_uniform(p: int) -> MlpParams:
    """Width-2 sine net with bias ``(0, π/2)``; exact for every length ``m >= 2``."""
    if p < 2:
        raise ValueError("p must be >= 2")
    r = np.arange(p)
    row = wrap_angle(TWO_PI * r / p)
    W = np.stack([row, row])
    V = np.stack([grid_sin(r, p), grid_cos(r, p)], axis=1)
    return MlpParams(W, V, np.array([0.0, math.pi / 2]), Activation.SINE)


def sine_halfp_unbiased(p: int) -> MlpParams:
    """Bias-free sine net of width ``⌊(p-1)/2⌋`` valid at every length.

    Scores are the sine Gram sums ``S(q, y)``: ``p/4`` on the correct class
    unless ``y ∈ {0, p/2}``, where every score vanishes and the prediction is a
    tie. Accuracy is ``1 - 1/p`` (odd p) or ``1 - 2/p`` (even p).
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    K = (p - 1) // 2
    k = np.arange(1, K + 1)
    r = np.arange(p)
    W = TWO_PI * np.outer(k, r) / p
    V = grid_sin(np.outer(r, k), p)
    return MlpParams(W.reshape(K, p), V.reshape(p, K), None, Activation.SINE)


def sine_highmargin_2p(spec: TaskSpec) -> MlpParams:
    """Width ``2p`` sine net scoring ``p`` on the correct class and ``0`` elsewhere."""
    p, m = spec.p, spec.m
    r = np.arange(p)
    W = np.empty((2 * p, p))
    V = np.empty((p, 2 * p))
    for k in range(1, p + 1):
        ang = TWO_PI * np.mod(k * r, p) / p
        W[2 * k - 2] = wrap_angle(ang)
        W[2 * k - 1] = wrap_angle(ang + math.pi / (2 * m))
        V[:, 2 * k - 2] = grid_sin(k * r, p)
        V[:, 2 * k - 1] = grid_cos(k * r, p)
    return MlpParams(W, V, None, Activation.SINE)


# --- polarization and splines ----------------------------------------------------

def polarize(s: int) -> list[tuple[tuple[int, ...], Fraction]]:
    """Signed terms ``(ε, ∏ε / (s! 2^s))`` with ``x_1⋯x_s = Σ w_ε (Σ ε_i x_i)^s``."""
    if not 1 <= s <= 12:
        raise ValueError("polarization is provided for 1 <= s <= 12")
    scale = Fraction(1, math.factorial(s) * 2**s)
    return [(eps, scale * math.prod(eps)) for eps in itertools.product((-1, 1), repeat=s)]


def eval_polarization(terms, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    s = x.shape[-1]
    return float(sum(float(w) * float(np.dot(eps, x)) ** s for eps, w in terms))


@dataclass(frozen=True)
class SplineUnit:
    """One hinge ``c · ReLU(a z - b)``."""

    a: Fraction
    b: Fraction
    c: Fraction


def relu_spline_power(s: int, N: int) -> list[SplineUnit]:
    """ReLU form of the linear interpolant of ``z^s`` on the knots ``-1 + 2k/N``.

    Two boundary hinges ``ReLU(z+1)``, ``ReLU(1-z)`` plus one hinge per interior
    knot; ``N + 1`` units, exact rational coefficients.
    """
    if s < 1 or N < 1:
        raise ValueError("need s >= 1 and N >= 1")
    z = [Fraction(-1) + Fraction(2 * k, N) for k in range(N + 1)]
    f = [zk**s for zk in z]
    h = Fraction(2, N)
    half_sign = Fraction((-1) ** s, 2)
    units = [
        SplineUnit(Fraction(1), Fraction(-1), (f[1] - f[0]) / h + half_sign),
        SplineUnit(Fraction(-1), Fraction(-1), half_sign),
    ]
    for j in range(1, N):
        units.append(SplineUnit(Fraction(1), z[j], (f[j + 1] - 2 * f[j] + f[j - 1]) / h))
    return units


def eval_spline(units: list[SplineUnit], z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    for u in units:
        out += float(u.c) * np.maximum(float(u.a) * z - float(u.b), 0.0)
    return out


def spline_knots_for(s: int, delta: Fraction) -> int:
    """Smallest ``N >= 1`` with ``s(s-1)/(2N²) <= delta``."""
    target = Fraction(s * (s - 1)) / (2 * Fraction(delta))
    N = max(1, math.isqrt(math.floor(target)))
    while N * N < target:
        N += 1
    return N


# --- Newton expansion --------------------------------------------------------------

@dataclass(frozen=True)
class NewtonTerm:
    """Term ``coeff · G^{|k|}`` of the polarized Newton expansion.

    ``k`` is a partition of ``m`` written as multiplicities (``Σ j·k_j = m``),
    ``p_select <= k`` picks how many factors of each ``Z_j = C_j + iS_j`` are
    real, ``eps`` are the polarization signs. ``parity`` tells whether the term
    contributes to ``cos(Σθ)`` or ``sin(Σθ)``.
    """

    k: tuple[int, ...]
    p_select: tuple[int, ...]
    eps: tuple[int, ...]
    coeff: Fraction
    parity: str

    @property
    def order(self) -> int:
        return sum(self.k)

    def linear_form(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer weights of ``C_1..C_m`` and ``S_1..S_m`` in ``G``."""
        m = len(self.k)
        cw = np.zeros(m, dtype=np.int64)
        sw = np.zeros(m, dtype=np.int64)
        pos = 0
        for j in range(m):
            block = self.eps[pos:pos + self.k[j]]
            cw[j] = sum(block[: self.p_select[j]])
            sw[j] = sum(block[self.p_select[j]:])
            pos += self.k[j]
        return cw, sw


def partitions_as_multiplicities(m: int) -> list[tuple[int, ...]]:
    """All ``k ∈ Z_{>=0}^m`` with ``Σ_j j·k_j = m`` (j from 1), lexicographically."""
    out: list[tuple[int, ...]] = []

    def rec(j: int, remaining: int, prefix: tuple[int, ...]):
        if j > m:
            if remaining == 0:
                out.append(prefix)
            return
        for kj in range(remaining // j + 1):
            rec(j + 1, remaining - j * kj, prefix + (kj,))

    rec(1, m, ())
    return out


def newton_total_count(m: int) -> int:
    """Number of ``(k, p, ε)`` triples, ``Σ_k 2^{|k|} ∏ (k_j + 1)``."""
    return sum(2 ** sum(k) * math.prod(kj + 1 for kj in k) for k in partitions_as_multiplicities(m))


def newton_expansion(m: int) -> list[NewtonTerm]:
    """Every term of the polarized Newton expansion of ``cos(Σθ)`` and ``sin(Σθ)``."""
    if not 1 <= m <= 8:
        raise ValueError("Newton expansion is provided for 1 <= m <= 8")
    terms = []
    for k in partitions_as_multiplicities(m):
        r = sum(k)
        ck = Fraction((-1) ** (m - r), math.prod(math.factorial(kj) * (j + 1) ** kj for j, kj in enumerate(k)))
        scale = ck / (math.factorial(r) * 2**r)
        for p_sel in itertools.product(*(range(kj + 1) for kj in k)):
            binom = math.prod(math.comb(kj, pj) for kj, pj in zip(k, p_sel))
            gap = r - sum(p_sel)
            if gap % 2 == 0:
                parity, sign = "cos", (-1) ** (gap // 2)
            else:
                parity, sign = "sin", (-1) ** ((gap - 1) // 2)
            for eps in itertools.product((-1, 1), repeat=r):
                terms.append(NewtonTerm(k, p_sel, eps, scale * sign * binom * math.prod(eps), parity))
    return terms


def newton_reconstruct(terms: list[NewtonTerm], thetas) -> tuple[float, float]:
    """Evaluate the expansion at angles ``θ_1..θ_m``; returns ``(cos Σθ, sin Σθ)`` estimates."""
    th = np.asarray(thetas, dtype=np.float64)
    m = th.size
    j = np.arange(1, m + 1)
    C = np.cos(np.outer(j, th)).sum(axis=1)
    S = np.sin(np.outer(j, th)).sum(axis=1)
    fc = fs = 0.0
    for t in terms:
        cw, sw = t.linear_form()
        val = float(t.coeff) * float(cw @ C + sw @ S) ** t.order
        if t.parity == "cos":
            fc += val
        else:
            fs += val
    return fc, fs


def stirling_first(m: int, r: int) -> int:
    """Unsigned Stirling number of the first kind ``[m r]``."""
    row = [1]  # [0 0] = 1
    for n in range(1, m + 1):
        new = [0] * (n + 1)
        for k in range(1, n + 1):
            new[k] = (row[k - 1] if k - 1 < len(row) else 0) + (n - 1) * (row[k] if k < len(row) else 0)
        row = new
    return row[r] if 0 <= r <= m else 0


def cycle_index_lambda(m: int) -> Fraction:
    """``Λ_m = Σ_r 2^r (mr)^r [m r] / (r! m!)``: worst-case amplification of per-power errors."""
    return sum(
        (Fraction(2**r * (m * r) ** r * stirling_first(m, r), math.factorial(r) * math.factorial(m)) for r in range(1, m + 1)),
        Fraction(0),
    )


# --- ReLU constructions ----------------------------------------------------------

@dataclass(frozen=True)
class ReluPlan:
    m: int
    p: int
    tau: Fraction
    lam: Fraction
    delta: Fraction
    knots: dict  # r -> N_r
    triples: int
    width: int

    @property
    def width_bound(self) -> float:
        m, p, tau = self.m, self.p, float(self.tau)
        inner = m * math.sqrt(math.e * m / tau) * (1 + 2 * math.e * m) ** ((m - 1) / 2) + 2
        return 13 * p * m * 2**m * inner

    @property
    def v_inf_bound(self) -> float:
        m = self.m
        return (m + 0.5) * m ** (2 * m) / (math.factorial(m) * 2**m)


def relu_plan(spec: TaskSpec, tau: float | Fraction = Fraction(1, 10)) -> ReluPlan:
    m, p = spec.m, spec.p
    tau = Fraction(tau).limit_denominator(10**12) if not isinstance(tau, Fraction) else tau
    if not 0 < tau <= Fraction(1, 4):
        raise ValueError("tau must lie in (0, 1/4]")
    lam = cycle_index_lambda(m)
    delta = tau / lam
    knots = {r: spline_knots_for(r, delta) for r in range(1, m + 1)}
    per_freq = 0
    triples = 0
    for k in partitions_as_multiplicities(m):
        count = 2 ** sum(k) * math.prod(kj + 1 for kj in k)
        triples += count
        per_freq += count * (knots[sum(k)] + 1)
    return ReluPlan(m, p, tau, lam, delta, knots, triples, p * per_freq)


def _readout_to_scores(p: int) -> np.ndarray:
    """``T`` (p, 2p): class ``q`` sums ``cos(2πνq/p)·Ĉ_ν + sin(2πνq/p)·Ŝ_ν`` over ν."""
    q = np.arange(p)
    T = np.empty((p, 2 * p))
    for nu in range(p):
        T[:, 2 * nu] = grid_cos(nu * q, p)
        T[:, 2 * nu + 1] = grid_sin(nu * q, p)
    return T


def relu_mode_readout(spec: TaskSpec, tau: float | Fraction = Fraction(1, 10),
                      cap: int = DEFAULT_WEIGHT_CAP) -> tuple[np.ndarray, np.ndarray, ReluPlan]:
    """First layer ``W`` and a readout ``R`` (2p, d) with ``R·ReLU(Wx) ≈ (Ĉ_0, Ŝ_0, Ĉ_1, ...)``."""
    m, p = spec.m, spec.p
    if m > 6:
        raise ValueError("the general ReLU construction is provided for m <= 6")
    plan = relu_plan(spec, tau)
    if 2 * plan.width * p > cap:
        raise MemoryError(f"construction needs width d={plan.width} ({2 * plan.width * p} weights), cap is {cap}")
    terms = newton_expansion(m)
    splines = {r: relu_spline_power(r, plan.knots[r]) for r in range(1, m + 1)}
    forms = np.array([np.concatenate(t.linear_form()) for t in terms], dtype=np.float64)  # (T, 2m)
    r_of = np.array([t.order for t in terms])
    is_cos = np.array([t.parity == "cos" for t in terms])
    # exact per-unit output weights: coeff · (m r)^r · c_i
    out_w = [
        np.array([float(t.coeff * (m * t.order) ** t.order * u.c) for u in splines[t.order]]) for t in terms
    ]
    a_of = {r: np.array([float(u.a) for u in splines[r]]) for r in splines}
    b_of = {r: np.array([float(u.b) for u in splines[r]]) for r in splines}

    rows_W, cols_R = [], []
    for nu in range(p):
        basis = np.concatenate(
            [np.stack([grid_cos(nu * j * np.arange(p), p) for j in range(1, m + 1)]),
             np.stack([grid_sin(nu * j * np.arange(p), p) for j in range(1, m + 1)])]
        )  # (2m, p)
        U = forms @ basis  # (T, p)
        for t in range(len(terms)):
            r = r_of[t]
            a, b = a_of[r], b_of[r]
            rows_W.append(np.outer(a / (m * r), U[t]) - (b / m)[:, None])
            R = np.zeros((2 * p, a.size))
            R[2 * nu + (0 if is_cos[t] else 1)] = out_w[t]
            cols_R.append(R)
    W = np.concatenate(rows_W)
    R = np.concatenate(cols_R, axis=1)
    assert W.shape[0] == plan.width
    return W, R, plan


def relu_construction(spec: TaskSpec, tau: float | Fraction = Fraction(1, 10),
                      cap: int = DEFAULT_WEIGHT_CAP) -> MlpParams:
    """Bias-free ReLU net exact on ``X_m`` with margin at least ``(1 - 4τ)p``."""
    W, R, _ = relu_mode_readout(spec, tau, cap)
    return MlpParams(W, _readout_to_scores(spec.p) @ R, None, Activation.RELU)


# spline for z^2 on 7 uniform intervals, shared by the m = 2 network
def _m2_units() -> list[SplineUnit]:
    return relu_spline_power(2, 7)


def relu_m2_readout(p: int) -> tuple[np.ndarray, np.ndarray]:
    """``W`` (36p, p) and readout ``R`` (2p, 36p) of the explicit m = 2 ReLU network."""
    if p < 2:
        raise ValueError("p must be >= 2")
    units = _m2_units()
    a = np.array([float(u.a) for u in units])
    b = np.array([float(u.b) for u in units])
    c = np.array([float(u.c) for u in units])
    r = np.arange(p)
    rows, cols = [], []
    for nu in range(p):
        c1, s1 = grid_cos(nu * r, p), grid_sin(nu * r, p)
        c2, s2 = grid_cos(2 * nu * r, p), grid_sin(2 * nu * r, p)
        for vec, scale in ((c1, 0.5), (s1, 0.5), (c1 + s1, 0.25), (c1 - s1, 0.25)):
            rows.append(np.outer(a * scale, vec) - (b / 2)[:, None])
        rows.extend([0.5 * c2, -0.5 * c2, 0.5 * s2, -0.5 * s2])
        R = np.zeros((2 * p, 36))
        R[2 * nu, 0:8] = 2 * c
        R[2 * nu, 8:16] = -2 * c
        R[2 * nu + 1, 16:24] = 4 * c
        R[2 * nu + 1, 24:32] = -4 * c
        R[2 * nu, 32:34] = (-1.0, 1.0)
        R[2 * nu + 1, 34:36] = (-1.0, 1.0)
        cols.append(R)
    W = np.vstack([np.atleast_2d(x) for x in rows])
    return W, np.concatenate(cols, axis=1)


def relu_construction_m2(p: int) -> MlpParams:
    """Explicit width-``36p`` ReLU net for ``m = 2`` with margin ``>= 25p/49 + 20/49``."""
    W, R = relu_m2_readout(p)
    return MlpParams(W, _readout_to_scores(p) @ R, None, Activation.RELU)


# --- trigonometric sum polynomials ----------------------------------------------

@dataclass
class TrigPolyPair:
    """Integer polynomials in ``(c_1, s_1, ..., c_p, s_p)`` for ``sin``/``cos`` of ``Σ x_v α_v``.

    Monomials are exponent tuples of length ``2p`` ordered ``c_1, s_1, c_2, ...``.
    """

    p: int
    S: dict
    C: dict

    @property
    def degree(self) -> int:
        return max((sum(e) for e in list(self.S) + list(self.C)), default=0)

    def evaluate(self, angles) -> tuple[float, float]:
        angles = np.asarray(angles, dtype=np.float64)
        vals = np.empty(2 * self.p)
        vals[0::2] = np.cos(angles)
        vals[1::2] = np.sin(angles)

        def ev(poly):
            return math.fsum(coef * math.prod(vals[i] ** e for i, e in enumerate(exps) if e) for exps, coef in poly.items())

        return ev(self.S), ev(self.C)


def _times_var(poly: dict, idx: int) -> dict:
    out = {}
    for exps, coef in poly.items():
        e = list(exps)
        e[idx] += 1
        out[tuple(e)] = coef
    return out


def _combine(a: dict, b: dict, sign: int) -> dict:
    out = dict(a)
    for exps, coef in b.items():
        out[exps] = out.get(exps, 0) + sign * coef
        if out[exps] == 0:
            del out[exps]
    return out


def trig_sum_polynomialize(x) -> TrigPolyPair:
    """Polynomials with ``S_x = sin(Σ x_v α_v)``, ``C_x = cos(Σ x_v α_v)``.

    Built by repeatedly peeling the smallest-index positive coordinate ``u``:
    ``S_x = s_u C_y + c_u S_y``, ``C_x = c_u C_y - s_u S_y`` with ``y = x - e_u``.
    """
    x = [int(v) for v in np.asarray(x).ravel()]
    if any(v < 0 for v in x):
        raise ValueError("bag counts must be non-negative")
    if sum(x) > 8:
        raise ValueError("polynomialization is provided for m <= 8")
    p = len(x)
    peel = []
    y = list(x)
    while any(y):
        u = next(i for i, v in enumerate(y) if v > 0)
        peel.append(u)
        y[u] -= 1
    zero = tuple([0] * (2 * p))
    S: dict = {}
    C: dict = {zero: 1}
    for u in reversed(peel):
        cu, su = 2 * u, 2 * u + 1
        S, C = (
            _combine(_times_var(C, su), _times_var(S, cu), +1),
            _combine(_times_var(C, cu), _times_var(S, su), -1),
        )
    return TrigPolyPair(p, S, C)
