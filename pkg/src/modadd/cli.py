"""Command-line entry point: ``modadd <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 verification failure,
3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import verify as V
from .data import TaskSpec, enumerate_domain, sample_set
from .metrics import margin_report, q2_hoeffding_band, q2_statistic
from .model import load_checkpoint, save_checkpoint
from .numerics import RngStream
from .sweep import PRESETS, ReportTable, SweepSpec, emit_heatmap, preset, run_sweep
from .trainer import TrainConfig, TrainingDiverged, evaluate_ood, train, write_run_jsonl

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj, out: Path | None = None, name: str | None = None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1)
    if out is not None and name is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n", encoding="utf-8")
    print(text)


def _seed_list(text: str | None):
    return None if text is None else tuple(int(s) for s in text.split(",") if s.strip())


def _kv(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- subcommands ----------------------------------------------------------------

def cmd_construct(args) -> int:
    spec = TaskSpec(args.p, args.m)
    extra = {"tau": args.tau} if args.kind == "relu_general" else {}
    theta = V.build_construction(args.kind, spec, {**extra, "cap": args.cap or V.C.DEFAULT_WEIGHT_CAP})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(theta, out / "checkpoint.json", args.encoding)
    claim = V.claimed_properties(args.kind, spec, extra)
    cert = {"kind": args.kind, "p": spec.p, "m": spec.m, "width": theta.d, "claimed": V._jsonable(claim)}
    if spec.domain_size <= (args.cert_cap or V.DEFAULT_CERT_CAP):
        rep = margin_report(theta, enumerate_domain(spec))
        cert["measured"] = V._jsonable(rep.summary())
    _emit(cert, out, "certificate.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    params = _kv(args.params)
    if args.cap is not None:
        params["cap"] = args.cap
    cert = V.run_claim(args.claim_id, params)
    print(cert.to_json())
    return EXIT_OK if cert.passed else EXIT_VERIFY


def cmd_train(args) -> int:
    cfg = TrainConfig.from_dict(_load_json(args.config))
    seeds = _seed_list(args.seeds) or cfg.seeds
    out = Path(args.out)
    status = EXIT_OK
    summary = []
    for seed in seeds:
        try:
            res = train(cfg, seed)
            write_run_jsonl(out / "runs" / f"{cfg.config_hash()}_{seed}.jsonl", cfg, seed, res.records)
            save_checkpoint(res.theta, out / f"checkpoint_{seed}.json")
            summary.append(res.final.to_dict())
        except TrainingDiverged as exc:
            write_run_jsonl(out / "runs" / f"{cfg.config_hash()}_{seed}.jsonl", cfg, seed, exc.records, "diverged")
            print(f"seed {seed}: {exc}", file=sys.stderr)
            status = EXIT_DIVERGED
    _emit({"config_hash": cfg.config_hash(), "final": summary}, out, "summary.json")
    return status


def cmd_sweep(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise ValueError("give exactly one of --config or --preset")
    spec = SweepSpec.from_dict(_load_json(args.config)) if args.config else preset(args.preset)
    if args.epochs is not None:
        spec.base = spec.base.with_overrides(epochs=args.epochs)
    table = run_sweep(spec, args.parallel, args.out, _seed_list(args.seeds))
    print(table.to_csv(), end="")
    return EXIT_DIVERGED if any(r.get("status") != "ok" for r in table.rows) else EXIT_OK


def cmd_ood(args) -> int:
    if args.checkpoint:
        theta = load_checkpoint(args.checkpoint)
    else:
        extra = {"tau": args.tau} if args.kind == "relu_general" else {}
        theta = V.build_construction(args.kind, TaskSpec(args.p, args.m), extra)
    lengths = [int(m) for m in args.lengths.split(",")]
    seeds = _seed_list(args.seeds) or (1337,)
    result = {
        str(seed): {str(m): {"accuracy": s.accuracy, "invalid_rate": s.invalid_rate, "n": s.n}
                    for m, s in evaluate_ood(theta, lengths, args.test_n, seed).items()}
        for seed in seeds
    }
    _emit({"p": theta.p, "d": theta.d, "act": theta.act.value, "results": result},
          Path(args.out) if args.out else None, "ood.json")
    return EXIT_OK


def cmd_lemma(args) -> int:
    if args.name == "capacity":
        params = _kv(args.params)
        fam = params.pop("family")
        d = int(params.pop("d", 1))
        p = int(params.pop("p"))
        print(json.dumps({"family": fam, "value": V.capacity_bounds(fam, d, p, **{k: int(v) for k, v in params.items()})}))
        return EXIT_OK
    if args.name == "q2":
        params = _kv(args.params)
        p, m, n = int(params["p"]), int(params["m"]), int(params.get("n", 100000))
        delta = float(params.get("delta", 0.01))
        data = sample_set(TaskSpec(p, m), n, RngStream(int(params.get("seed", 0)), 0))
        q2sq = q2_statistic(data) ** 2
        lo, hi = q2_hoeffding_band(m, p, n, delta)
        print(json.dumps({"q2_squared": q2sq, "band": [lo, hi], "inside": lo <= q2sq <= hi}))
        return EXIT_OK if lo <= q2sq <= hi else EXIT_VERIFY
    # the oracle suite
    certs = []
    rng = RngStream(int(_kv(args.params).get("seed", 0)), 0)
    certs += [V.check_gram_identity(p) for p in range(2, 65)]
    certs += [V.check_uniformity(TaskSpec(p, m)) for p in range(2, 13) for m in range(2, 13)]
    certs += [V.check_polarization(s, 100, rng) for s in range(1, 9)]
    certs += [V.check_newton_reconstruction(m, 100, rng) for m in range(1, 7)]
    certs += [V.check_newton_counts(m) for m in range(1, 11)]
    certs += [V.check_spline_bound(s, N) for s in range(1, 7) for N in (1, 2, 3, 5, 8, 16, 32, 64)]
    certs.append(V.check_trig_polynomialization(7, 5, 100, rng))
    failed = [c.to_dict() for c in certs if not c.passed]
    print(json.dumps({"checked": len(certs), "failed": failed}, sort_keys=True))
    return EXIT_OK if not failed else EXIT_VERIFY


def cmd_report(args) -> int:
    table = ReportTable.from_dict(_load_json(args.table))
    out = Path(args.out) if args.out else None
    csv_text = table.to_csv()
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text(csv_text, encoding="utf-8")
    print(csv_text, end="")
    if args.best_over:
        print(json.dumps(table.best_over(args.metric, args.best_over), sort_keys=True))
    if args.heatmap:
        axes = tuple(args.heatmap.split(","))
        if len(axes) != 2:
            raise ValueError("--heatmap needs two comma-separated axes")
        fixed = {}
        for k, v in _kv(args.fix).items():
            fixed[k] = json.loads(v) if v[:1] in "0123456789-[{" else v
        emit_heatmap(table, axes, (out or Path(".")) / "heatmap.svg", args.metric, fixed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="modadd", description="Sine and ReLU MLPs for modular addition.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("construct", help="build a closed-form network; write checkpoint and certificate")
    c.add_argument("kind", choices=V.CONSTRUCTION_KINDS)
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--m", type=int, default=2)
    c.add_argument("--tau", type=Fraction, default=Fraction(1, 10))
    c.add_argument("--out", required=True)
    c.add_argument("--encoding", choices=("b64", "list"), default="b64")
    c.add_argument("--cap", type=int, default=None, help="weight-entry cap for the general ReLU construction")
    c.add_argument("--cert-cap", type=int, default=None, help="largest domain certified exhaustively")
    c.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", help="check one claim; prints a JSON certificate")
    v.add_argument("claim_id", choices=sorted(V.CLAIMS))
    v.add_argument("params", nargs="*", help="key=value, e.g. p=7 m=3")
    v.add_argument("--cap", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("train", help="train from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seeds", default=None, help="comma-separated seeds overriding the config")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run a grid of training runs")
    s.add_argument("--config", default=None)
    s.add_argument("--preset", choices=PRESETS, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--seeds", default=None)
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--epochs", type=int, default=None, help="override the epoch count")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("ood", help="accuracy at unseen lengths")
    o.add_argument("--checkpoint", default=None)
    o.add_argument("--kind", choices=V.CONSTRUCTION_KINDS, default="sine_biased")
    o.add_argument("--p", type=int, default=11)
    o.add_argument("--m", type=int, default=2)
    o.add_argument("--tau", type=Fraction, default=Fraction(1, 10))
    o.add_argument("--lengths", default="14,38,53,97,201,303,401,512,602,705,811")
    o.add_argument("--test-n", type=int, default=10000)
    o.add_argument("--seeds", default=None)
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_ood)

    lm = sub.add_parser("lemma", help="run the lemma oracle suite, a capacity bound, or the Q2 check")
    lm.add_argument("name", choices=("suite", "capacity", "q2"))
    lm.add_argument("params", nargs="*")
    lm.set_defaults(func=cmd_lemma)

    r = sub.add_parser("report", help="re-aggregate a sweep table; optional heatmap")
    r.add_argument("--table", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--metric", default="test_acc")
    r.add_argument("--best-over", default=None)
    r.add_argument("--heatmap", default=None, help="two axes, e.g. length,n_train")
    r.add_argument("--fix", nargs="*", default=[], help="key=value pins for other grid axes")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, MemoryError) as exc:
        print(f"modadd {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
