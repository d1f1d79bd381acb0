"""Executable checks for the identities, constructions and bounds.

Each check returns a :class:`Certificate` with the measured extremals in
``witness``. A failed certificate always carries a witness.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from . import constructions as C
from .data import TaskSpec, enumerate_domain, exact_label_distribution
from .metrics import margin_report, population_accuracy
from .model import Activation, MlpParams, predict_batch, scores, uargmax
from .numerics import RngStream, spectral_norm

NORM_SLACK = 1e-8
MARGIN_SLACK = 1e-9
DEFAULT_CERT_CAP = 10**6

CONSTRUCTION_KINDS = ("sine_width2", "sine_biased", "sine_halfp", "sine_highmargin", "relu_m2", "relu_general")


@dataclass
class Certificate:
    claim_id: str
    params: dict
    passed: bool
    witness: dict | None = None
    tolerance: float = 0.0

    def __post_init__(self):
        self.passed = bool(self.passed)
        if not self.passed and self.witness is None:
            raise ValueError("a failed certificate needs a witness")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# --- lemma oracles ---------------------------------------------------------------

def gram_formula(a: int, b: int, p: int) -> float:
    a, b = a % p, b % p
    if a == 0 or b == 0 or 2 * a == p or 2 * b == p:
        return 0.0
    if a == b:
        return p / 4
    if (a + b) % p == 0:
        return -p / 4
    return 0.0


def check_gram_identity(p: int) -> Certificate:
    """``Σ_{k=1..K} sin(2πka/p) sin(2πkb/p)``, ``K = ⌊(p-1)/2⌋``, against its ±p/4 / 0 cases."""
    if not 2 <= p <= 64:
        raise ValueError("gram identity check covers 2 <= p <= 64")
    k = np.arange(1, (p - 1) // 2 + 1, dtype=np.longdouble)
    ang = 2 * np.pi * np.outer(np.arange(p, dtype=np.longdouble), k) / p
    Sn = np.sin(ang)
    G = Sn @ Sn.T
    F = np.array([[gram_formula(a, b, p) for b in range(p)] for a in range(p)])
    err = np.abs(G.astype(np.float64) - F)
    tol = 1e-9 * p
    worst = np.unravel_index(int(err.argmax()), err.shape)
    witness = {"max_error": float(err.max()), "at": [int(worst[0]), int(worst[1])]}
    return Certificate("gram", {"p": p}, bool(err.max() <= tol), witness, tol)


def check_uniformity(spec: TaskSpec) -> Certificate:
    dist = exact_label_distribution(spec)
    dev = max(abs(q - Fraction(1, spec.p)) for q in dist)
    return Certificate("uniformity", {"p": spec.p, "m": spec.m}, dev <= 1e-15,
                       {"max_deviation": float(dev), "exact": dev == 0}, 1e-15)


def check_polarization(s: int, trials: int, rng: RngStream) -> Certificate:
    if not 1 <= s <= 10:
        raise ValueError("polarization check covers 1 <= s <= 10")
    terms = C.polarize(s)
    worst = 0.0
    worst_x = None
    for _ in range(trials):
        x = rng.uniform(-1.0, 1.0, size=s)
        err = abs(C.eval_polarization(terms, x) - float(np.prod(x)))
        if err > worst:
            worst, worst_x = err, x.tolist()
    tol = 1e-9
    return Certificate("polarization", {"s": s, "trials": trials, "seed": rng.seed}, worst <= tol,
                       {"max_error": worst, "x": worst_x}, tol)


def check_spline_bound(s: int, N: int, grid: int = 10**4) -> Certificate:
    if not (1 <= s <= 6 and 1 <= N <= 64):
        raise ValueError("spline check covers s <= 6, N <= 64")
    z = np.linspace(-1.0, 1.0, grid)
    err = np.abs(C.eval_spline(C.relu_spline_power(s, N), z) - z**s)
    bound = s * (s - 1) / (2 * N * N)
    i = int(err.argmax())
    return Certificate("spline", {"s": s, "N": N}, err[i] <= bound + 1e-12,
                       {"sup_error": float(err[i]), "at": float(z[i]), "bound": bound}, 1e-12)


def _count_triples(m: int) -> int:
    n = 0
    for k in C.partitions_as_multiplicities(m):
        for p_sel in itertools.product(*(range(kj + 1) for kj in k)):
            for _ in itertools.product((-1, 1), repeat=sum(k)):
                n += 1
    return n


def check_newton_counts(m: int) -> Certificate:
    """Brute-force count of ``(k, p, ε)`` triples against ``[m 2^m, 13 m 2^m]``."""
    if not 1 <= m <= 10:
        raise ValueError("newton count check covers 1 <= m <= 10")
    n = _count_triples(m)
    lo, hi = m * 2**m, 13 * m * 2**m
    return Certificate("newton_counts", {"m": m}, lo <= n <= hi, {"n_tot": n, "lower": lo, "upper": hi}, 0.0)


def check_newton_reconstruction(m: int, trials: int, rng: RngStream, tol: float = 1e-8) -> Certificate:
    terms = C.newton_expansion(m)
    worst = 0.0
    for _ in range(trials):
        th = rng.uniform(-math.pi, math.pi, size=m)
        fc, fs = C.newton_reconstruct(terms, th)
        worst = max(worst, abs(fc - math.cos(th.sum())), abs(fs - math.sin(th.sum())))
    cmax = max(abs(t.coeff) for t in terms)
    ok = worst <= tol and cmax <= Fraction(1, 2)
    return Certificate("newton_reconstruction", {"m": m, "trials": trials, "seed": rng.seed}, ok,
                       {"max_error": worst, "max_abs_coeff": float(cmax), "terms": len(terms)}, tol)


def check_trig_polynomialization(p: int, m: int, trials: int, rng: RngStream, tol: float = 1e-10) -> Certificate:
    worst = 0.0
    bad_x = None
    for _ in range(trials):
        x = np.bincount(rng.integers(0, p, size=m), minlength=p)
        poly = C.trig_sum_polynomialize(x)
        angles = rng.uniform(-math.pi, math.pi, size=p)
        s_val, c_val = poly.evaluate(angles)
        t = float(np.dot(x, angles))
        err = max(abs(s_val - math.sin(t)), abs(c_val - math.cos(t)))
        integral = all(isinstance(v, int) for v in itertools.chain(poly.S.values(), poly.C.values()))
        if err > worst or not integral or poly.degree > m:
            worst = max(worst, err)
            if not integral or poly.degree > m:
                bad_x = x.tolist()
                break
    return Certificate("trig_poly", {"p": p, "m": m, "trials": trials, "seed": rng.seed},
                       worst <= tol and bad_x is None, {"max_error": worst, "bad_x": bad_x}, tol)


# --- construction certificates ---------------------------------------------------

def build_construction(kind: str, spec: TaskSpec, extra: dict | None = None) -> MlpParams:
    extra = extra or {}
    if kind == "sine_width2":
        return C.sine_width2_fixed(spec)
    if kind == "sine_biased":
        return C.sine_width2_biased_uniform(spec.p)
    if kind == "sine_halfp":
        return C.sine_halfp_unbiased(spec.p)
    if kind == "sine_highmargin":
        return C.sine_highmargin_2p(spec)
    if kind == "relu_m2":
        if spec.m != 2:
            raise ValueError("relu_m2 is the m = 2 network")
        return C.relu_construction_m2(spec.p)
    if kind == "relu_general":
        return C.relu_construction(spec, Fraction(str(extra.get("tau", "0.1"))), int(extra.get("cap", C.DEFAULT_WEIGHT_CAP)))
    raise ValueError(f"unknown construction {kind!r}; choose from {CONSTRUCTION_KINDS}")


def claimed_properties(kind: str, spec: TaskSpec, extra: dict | None = None) -> dict:
    """Stated accuracy, margin and norm bounds of a construction."""
    extra = extra or {}
    p, m = spec.p, spec.m
    if kind in ("sine_width2", "sine_biased"):
        return {"accuracy": 1.0, "min_margin_ge": 1 - math.cos(2 * math.pi / p), "width": 2}
    if kind == "sine_halfp":
        acc = Fraction(p - 1, p) if p % 2 else Fraction(p - 2, p)
        return {"accuracy": acc, "width": (p - 1) // 2}
    if kind == "sine_highmargin":
        return {"accuracy": 1.0, "margin_eq": float(p), "width": 2 * p, "w_frobenius_le": math.pi * math.sqrt(2) * p,
                "v_singular_eq": math.sqrt(p), "norm_margin_sine_ge": 0.5}
    if kind == "relu_m2":
        return {"accuracy": 1.0, "min_margin_ge": 25 * p / 49 + 20 / 49, "width": 36 * p, "w_max_le": 1.0,
                "v_max_le": 34 / 7, "v_spectral_le": 11 * math.sqrt(p)}
    if kind == "relu_general":
        tau = Fraction(str(extra.get("tau", "0.1")))
        plan = C.relu_plan(spec, tau)
        return {"accuracy": 1.0, "min_margin_ge": float((1 - 4 * tau) * p), "width_le": plan.width_bound,
                "width": plan.width, "w_max_le": 2 / m, "v_max_le": plan.v_inf_bound, "mode_error_le": float(tau)}
    raise ValueError(f"unknown construction {kind!r}")


def relu_mode_errors(spec: TaskSpec, tau, domain=None) -> float:
    """Worst ``|C_ν - Ĉ_ν|``, ``|S_ν - Ŝ_ν|`` over ν and the whole domain."""
    W, R, _ = C.relu_mode_readout(spec, tau)
    D = domain if domain is not None else enumerate_domain(spec)
    est = np.maximum(D.X @ W.T, 0.0) @ R.T  # (n, 2p)
    nu = np.arange(spec.p)
    exact = np.empty_like(est)
    exact[:, 0::2] = C.grid_cos(np.outer(D.y, nu), spec.p)
    exact[:, 1::2] = C.grid_sin(np.outer(D.y, nu), spec.p)
    return float(np.abs(est - exact).max())


def certify_construction(kind: str, spec: TaskSpec, extra: dict | None = None,
                         cap: int = DEFAULT_CERT_CAP) -> Certificate:
    """Exhaustive check of a construction on ``X_m`` against its stated properties."""
    extra = dict(extra or {})
    if spec.domain_size > cap:
        raise ValueError(f"|X_m| = {spec.domain_size} exceeds certification cap {cap}")
    theta = build_construction(kind, spec, extra)
    claim = claimed_properties(kind, spec, extra)
    D = enumerate_domain(spec, cap)
    rep = margin_report(theta, D)
    pop = population_accuracy(theta, D)
    g = rep.per_sample_margins
    wmax = float(np.abs(theta.W).max()) if theta.d else 0.0
    vmax = float(np.abs(theta.V).max()) if theta.d else 0.0
    measured = {
        "width": theta.d,
        "accuracy_unweighted": pop.unweighted,
        "accuracy_weighted": pop.weighted,
        "correct_sequences": pop.weighted_exact[0],
        "total_sequences": pop.weighted_exact[1],
        "min_margin": rep.min_margin,
        "max_margin": float(g.max()),
        "w_max": wmax,
        "v_max": vmax,
        "w_frobenius": rep.w_frobenius,
        "v_spectral": rep.v_spectral,
        "v_row_l1": rep.v_row_l1,
        "norm_margin_sine": rep.norm_min_margin_sine,
        "norm_margin_relu": rep.norm_min_margin_relu,
    }
    failed = []
    acc = claim["accuracy"]
    if isinstance(acc, Fraction):
        num, den = pop.weighted_exact
        if num * acc.denominator != acc.numerator * den:
            failed.append("accuracy")
        if abs(pop.weighted - float(acc)) > 1e-12:
            failed.append("accuracy_float")
    elif pop.unweighted != 1.0:
        failed.append("accuracy")
        bad = int(np.flatnonzero(uargmax(scores(theta, D.X)) != D.y)[0])
        measured["counterexample"] = {"x": D.X[bad].tolist(), "y": int(D.y[bad])}
    if "width" in claim and theta.d != claim["width"]:
        failed.append("width")
    if "width_le" in claim and theta.d > claim["width_le"]:
        failed.append("width_le")
    if "min_margin_ge" in claim and rep.min_margin < claim["min_margin_ge"] - MARGIN_SLACK:
        failed.append("min_margin")
    if "margin_eq" in claim and np.abs(g - claim["margin_eq"]).max() > MARGIN_SLACK:
        failed.append("margin_eq")
    if "w_max_le" in claim and wmax > claim["w_max_le"] + NORM_SLACK:
        failed.append("w_max")
    if "v_max_le" in claim and vmax > claim["v_max_le"] + 1e-12:
        failed.append("v_max")
    if "v_spectral_le" in claim and rep.v_spectral > claim["v_spectral_le"] + NORM_SLACK:
        failed.append("v_spectral")
    if "w_frobenius_le" in claim and rep.w_frobenius > claim["w_frobenius_le"] + NORM_SLACK:
        failed.append("w_frobenius")
    if "v_singular_eq" in claim:
        sv = np.linalg.svd(theta.V, compute_uv=False)
        measured["v_singular_range"] = [float(sv.min()), float(sv.max())]
        if np.abs(sv - claim["v_singular_eq"]).max() > NORM_SLACK:
            failed.append("v_singular")
    if "norm_margin_sine_ge" in claim and rep.norm_min_margin_sine < claim["norm_margin_sine_ge"] - NORM_SLACK:
        failed.append("norm_margin_sine")
    if "mode_error_le" in claim:
        measured["mode_error"] = relu_mode_errors(spec, Fraction(str(extra.get("tau", "0.1"))), D)
        if measured["mode_error"] > claim["mode_error_le"]:
            failed.append("mode_error")
    measured["failed_checks"] = failed
    params = {"kind": kind, "p": spec.p, "m": spec.m, **extra}
    return Certificate(kind, _jsonable(params), not failed, _jsonable({"claimed": claim, "measured": measured}),
                       MARGIN_SLACK)


# --- ReLU impossibility diagnostics ----------------------------------------------

def _require_nobias_relu(theta: MlpParams) -> None:
    if theta.act is not Activation.RELU:
        raise ValueError("needs a ReLU network")
    if theta.has_bias:
        raise ValueError("the scale-invariance argument needs a bias-free network")


def relu_scale_invariance_witness(theta: MlpParams, m1: int, m2: int, trials: int = 1000,
                                  rng: RngStream | None = None, alphas=(0.5, 2.0, 10.0)) -> Certificate:
    """Ray invariance of a bias-free ReLU net, and the resulting forced error.

    The bags ``m1·e_1`` and ``m2·e_1`` (token 1 repeated) lie on one ray, so they
    get the same prediction while their labels ``m1 mod p``, ``m2 mod p`` differ.
    """
    _require_nobias_relu(theta)
    p = theta.p
    if p < 2:
        raise ValueError("needs p >= 2")
    if (m1 - m2) % p == 0:
        raise ValueError("m1 and m2 must be incongruent mod p")
    rng = rng or RngStream(0, 0)
    e = np.zeros(p)
    e[1] = 1.0
    h1, h2 = predict_batch(theta, np.stack([m1 * e, m2 * e]))
    y1, y2 = m1 % p, m2 % p
    X = rng.integers(0, 6, size=(trials, p)).astype(np.float64)
    base = predict_batch(theta, X)
    mismatches = {str(a): int(np.sum(predict_batch(theta, a * X) != base)) for a in alphas}
    witness = {
        "pred_m1": int(h1), "pred_m2": int(h2), "label_m1": y1, "label_m2": y2,
        "ray_invariant": bool(h1 == h2), "errors_on_ray": int(h1 != y1) + int(h2 != y2),
        "alpha_mismatches": mismatches,
    }
    ok = h1 == h2 and witness["errors_on_ray"] >= 1 and not any(mismatches.values())
    return Certificate("scale_invariance", {"p": p, "d": theta.d, "m1": m1, "m2": m2, "trials": trials,
                                            "seed": rng.seed}, ok, witness, 0.0)


def relu_path_probe(theta: MlpParams, spec: TaskSpec) -> Certificate:
    """Adjacent-class sign pattern along ``x(s) = (m-s)e_0 + s e_1``.

    A diagnostic of the width counting argument: passes when every step
    ``s → s+1`` shows ``g_ℓ(s)(s) > 0 > g_ℓ(s)(s+1)``. The breakpoint budget says
    this is impossible unless ``m - 2d <= p(d+1)``.
    """
    _require_nobias_relu(theta)
    p, m, d = spec.p, spec.m, theta.d
    if theta.p != p or p < 2:
        raise ValueError("network and task disagree on p")
    s = np.arange(m + 1)
    X = np.zeros((m + 1, p))
    X[:, 0] = m - s
    X[:, 1] += s
    F = scores(theta, X)  # (m+1, p)
    ell = s[:-1] % p
    nxt = (ell + 1) % p
    g_here = F[s[:-1], ell] - F[s[:-1], nxt]
    g_next = F[s[1:], ell] - F[s[1:], nxt]
    good = (g_here > 0) & (g_next < 0)
    y = theta.W[:, 0]
    z = theta.W[:, 1] - theta.W[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        bp = np.where(z != 0, -m * y / np.where(z != 0, z, 1.0), np.nan)
    n_bp = int(np.sum((bp >= 0) & (bp <= m)))
    budget_ok = m - 2 * d <= p * (d + 1)
    achieved = int(good.sum())
    witness = {
        "achieved": achieved, "required": m, "breakpoints_in_path": n_bp,
        "budget_feasible": bool(budget_ok), "width_lower_bound": (m - p) / (p + 2),
        "first_failure": None if good.all() else int(np.flatnonzero(~good)[0]),
        "consistent_with_bound": bool(budget_ok or achieved < m),
    }
    return Certificate("path_probe", {"p": p, "m": m, "d": d}, achieved == m, witness, 0.0)


# --- closed-form capacity calculators --------------------------------------------

def capacity_bounds(family: str, d: int, p: int, **extras) -> float:
    """Closed-form bounds (natural log); ``relu_width_lb`` ignores ``d``."""
    if family == "relu_width_lb":
        m = extras["m"]
        if m < 1 or p < 1:
            raise ValueError("positive arguments required")
        return (m - p) / (p + 2)
    if d < 1 or p < 1:
        raise ValueError("positive arguments required")
    head = 6 * math.log(6 * d * p)
    if family == "ppoly":
        L, r = extras["L"], extras["r"]
        return 2 * d * p * (head + math.log(2 * math.e * L) + 2 * math.log(math.e * p * r))
    if family == "trigpoly":
        K, m = extras["K"], extras["m"]
        return 2 * d * p * (head + 2 * math.log(math.e * p * (K * m + 1)))
    if family == "ratexp":
        r, m = extras["r"], extras["m"]
        return 2 * d * p * (head + 2 * math.log(math.e * p * (d * m + r + 1)))
    raise ValueError(f"unknown capacity family {family!r}")


# --- registry used by the command line -------------------------------------------

def _spec(params) -> TaskSpec:
    return TaskSpec(int(params["p"]), int(params.get("m", 2)))


def _seeded(params) -> RngStream:
    return RngStream(int(params.get("seed", 0)), 0)


CLAIMS: dict[str, Callable[[dict], Certificate]] = {
    **{kind: (lambda params, kind=kind: certify_construction(
        kind, _spec(params), {k: v for k, v in params.items() if k in ("tau",)},
        int(params.get("cap", DEFAULT_CERT_CAP)))) for kind in CONSTRUCTION_KINDS},
    "gram": lambda params: check_gram_identity(int(params["p"])),
    "uniformity": lambda params: check_uniformity(_spec(params)),
    "polarization": lambda params: check_polarization(int(params["s"]), int(params.get("trials", 100)), _seeded(params)),
    "spline": lambda params: check_spline_bound(int(params["s"]), int(params["N"])),
    "newton_counts": lambda params: check_newton_counts(int(params["m"])),
    "newton_reconstruction": lambda params: check_newton_reconstruction(
        int(params["m"]), int(params.get("trials", 100)), _seeded(params)),
    "trig_poly": lambda params: check_trig_polynomialization(
        int(params["p"]), int(params.get("m", 4)), int(params.get("trials", 100)), _seeded(params)),
}


def run_claim(claim_id: str, params: dict[str, Any]) -> Certificate:
    if claim_id not in CLAIMS:
        raise KeyError(f"unknown claim {claim_id!r}; known: {sorted(CLAIMS)}")
    return CLAIMS[claim_id](params)
