"""Grid sweeps over training configurations, seed aggregation and heatmaps."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .model import Activation
from .optim import OptimConfig, WdPolicy
from .trainer import (
    OOD_EVAL_LENGTHS,
    OOD_TRAIN_LENGTHS,
    TrainConfig,
    TrainingDiverged,
    train,
    write_run_jsonl,
)

SWEEP_SCHEMA = "modadd.sweep/1"
TABLE_SCHEMA = "modadd.table/1"
WD_GRID = (0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 0.0)
MARGIN_KEYS = ("min_margin", "pct05_margin", "v_spectral", "w_frobenius", "v_row_l1",
               "norm_margin_relu", "norm_margin_sine", "norm_min_margin_relu", "norm_min_margin_sine")
REPORT_MODES = ("best_over_wd", "all")


@dataclass
class SweepSpec:
    base: TrainConfig
    grid: dict = field(default_factory=dict)
    report: str = "best_over_wd"

    def __post_init__(self):
        if self.report not in REPORT_MODES:
            raise ValueError(f"report must be one of {REPORT_MODES}")
        self.grid = {k: list(v) for k, v in self.grid.items()}
        for k, vals in self.grid.items():
            if not vals:
                raise ValueError(f"grid axis {k!r} is empty")
            self.base.with_overrides(**{k: vals[0]})  # validates the key

    def cells(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]

    def to_dict(self) -> dict:
        return {"schema": SWEEP_SCHEMA, "base": self.base.to_dict(), "grid": self.grid, "report": self.report}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        extra = set(d) - {"schema", "base", "grid", "report"}
        if extra:
            raise ValueError(f"unknown sweep fields {sorted(extra)}")
        if d.get("schema", SWEEP_SCHEMA) != SWEEP_SCHEMA:
            raise ValueError(f"unsupported sweep schema {d.get('schema')!r}")
        return cls(TrainConfig.from_dict(d["base"]), d.get("grid", {}), d.get("report", "best_over_wd"))


# --- aggregation ---------------------------------------------------------------------------

def _cell_key(row: dict, keys) -> tuple:
    return tuple(row[k] for k in keys)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ReportTable:
    """Per-run rows and their seed aggregates; a pure function of the rows."""

    grid_keys: list
    rows: list  # one dict per (cell, seed)

    @property
    def metrics(self) -> list[str]:
        skip = set(self.grid_keys) | {"seed", "config_hash", "status"}
        names = []
        for r in self.rows:
            for k in r:
                if k not in skip and k not in names:
                    names.append(k)
        return names

    def cell_values(self) -> list[tuple]:
        seen = []
        for r in self.rows:
            key = _cell_key(r, self.grid_keys)
            if key not in seen:
                seen.append(key)
        return seen

    def aggregate(self) -> list[dict]:
        """Seed mean and population std of every metric, per cell; diverged runs are excluded."""
        out = []
        for key in self.cell_values():
            runs = [r for r in self.rows if _cell_key(r, self.grid_keys) == key]
            ok = [r for r in runs if r.get("status", "ok") == "ok"]
            agg = dict(zip(self.grid_keys, key))
            agg["n_seeds"] = len(ok)
            agg["failed"] = len(runs) - len(ok)
            for mname in self.metrics:
                vals = [float(r[mname]) for r in ok if r.get(mname) is not None]
                agg[f"{mname}_mean"] = float(np.mean(vals)) if vals else math.nan
                agg[f"{mname}_std"] = float(np.std(vals)) if vals else math.nan
            out.append(agg)
        return out

    def mean(self, metric: str, **cell) -> float:
        for agg in self.aggregate():
            if all(agg[k] == v for k, v in cell.items()):
                return agg[f"{metric}_mean"]
        raise KeyError(f"no cell matching {cell}")

    def best_over(self, metric: str, param: str = "weight_decay") -> list[dict]:
        """Max over ``param`` of the seed-mean ``metric``, for each setting of the other grid keys."""
        if param not in self.grid_keys:
            raise KeyError(f"{param!r} is not a grid axis")
        others = [k for k in self.grid_keys if k != param]
        groups: dict[tuple, list[dict]] = {}
        for agg in self.aggregate():
            groups.setdefault(tuple(agg[k] for k in others), []).append(agg)
        out = []
        for key, cells in groups.items():
            vals = [c[f"{metric}_mean"] for c in cells if not math.isnan(c[f"{metric}_mean"])]
            best = max(vals) if vals else math.nan
            arg = next((c[param] for c in cells if c[f"{metric}_mean"] == best), None)
            out.append({**dict(zip(others, key)), metric: best, f"argmax_{param}": arg})
        return out

    def to_csv(self, aggregated: bool = True) -> str:
        data = self.aggregate() if aggregated else self.rows
        cols = []
        for r in data:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in data:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"schema": TABLE_SCHEMA, "grid_keys": list(self.grid_keys), "rows": self.rows}

    @classmethod
    def from_dict(cls, d: dict) -> "ReportTable":
        extra = set(d) - {"schema", "grid_keys", "rows"}
        if extra:
            raise ValueError(f"unknown table fields {sorted(extra)}")
        if d.get("schema") != TABLE_SCHEMA:
            raise ValueError(f"unsupported table schema {d.get('schema')!r}")
        return cls(list(d["grid_keys"]), list(d["rows"]))


def summary_row(cell: dict, seed: int, cfg: TrainConfig, record=None, status: str = "ok") -> dict:
    row = {**cell, "seed": seed, "config_hash": cfg.config_hash(), "status": status}
    if record is None:
        return row
    row.update(train_acc=record.train_acc, test_acc=record.test_acc, loss=record.loss)
    for k in MARGIN_KEYS:
        if k in record.margins:
            row[k] = record.margins[k]
    for m, acc in sorted(record.ood.items()):
        row[f"ood_{m}"] = acc
    return row


def _run_cell(args):
    base_dict, cell, seed, out_dir = args
    cfg = TrainConfig.from_dict(base_dict).with_overrides(**cell, seeds=(seed,))
    try:
        res = train(cfg, seed)
        rec, status, records = res.final, "ok", res.records
    except TrainingDiverged as exc:
        rec, status, records = None, "diverged", exc.records
    if out_dir is not None:
        write_run_jsonl(Path(out_dir) / "runs" / f"{cfg.config_hash()}_{seed}.jsonl", cfg, seed, records, status)
    return summary_row(cell, seed, cfg, rec, status)


def run_sweep(spec: SweepSpec, parallelism: int = 1, out_dir=None, seeds=None) -> ReportTable:
    """Run every (cell, seed); a diverged run marks its row failed and the sweep continues."""
    seeds = tuple(seeds) if seeds is not None else spec.base.seeds
    jobs = [(spec.base.to_dict(), cell, s, None if out_dir is None else str(out_dir))
            for cell in spec.cells() for s in seeds]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    table = ReportTable(list(spec.grid), rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=1), encoding="utf-8")
        (out / "runs.csv").write_text(table.to_csv(aggregated=False), encoding="utf-8")
        (out / "table.csv").write_text(table.to_csv(), encoding="utf-8")
        (out / "table.json").write_text(json.dumps(table.to_dict()), encoding="utf-8")  # row key order sets column order
    return table


# --- SVG heatmap ---------------------------------------------------------------------------

def heatmap_grid(table: ReportTable, axes: tuple[str, str], metric: str = "test_acc",
                 fixed: dict | None = None) -> tuple[list, list, np.ndarray]:
    """Values for a two-axis heatmap.

    An axis named ``"length"`` indexes the ``ood_<m>`` metrics. Cells that share
    both axis values (they differ in weight decay) are combined best-over-WD.
    """
    if not table.rows:
        raise ValueError("empty table")
    fixed = fixed or {}
    for ax in axes:
        if ax != "length" and ax not in table.grid_keys:
            raise KeyError(f"axis {ax!r} not in table (grid axes: {table.grid_keys})")
    cells = [c for c in table.aggregate() if all(c.get(k) == v for k, v in fixed.items())]
    free = [k for k in table.grid_keys if k not in axes and k not in fixed]
    if any(k != "weight_decay" for k in free):
        raise ValueError(f"fix the remaining grid axes {free} to draw a heatmap")
    lengths = sorted({int(k[4:-5]) for k in cells[0] if k.startswith("ood_") and k.endswith("_mean")}) if cells else []

    def axis_values(ax):
        if ax == "length":
            return lengths
        vals = []
        for c in cells:
            if c[ax] not in vals:
                vals.append(c[ax])
        return vals

    rv, cv = axis_values(axes[0]), axis_values(axes[1])
    if not rv or not cv:
        raise ValueError("nothing to draw")
    Z = np.full((len(rv), len(cv)), np.nan)
    for c in cells:
        for i, a in enumerate(rv):
            for j, b in enumerate(cv):
                coords = {axes[0]: a, axes[1]: b}
                if any(k != "length" and c[k] != v for k, v in coords.items()):
                    continue
                name = f"ood_{coords['length']}_mean" if "length" in coords else f"{metric}_mean"
                val = c.get(name, math.nan)
                if not math.isnan(val) and (math.isnan(Z[i, j]) or val > Z[i, j]):
                    Z[i, j] = val
    return rv, cv, Z


def _color(v: float, lo: float, hi: float) -> str:
    if math.isnan(v):
        return "#dddddd"
    t = 0.0 if hi <= lo else (v - lo) / (hi - lo)
    stops = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]
    x = t * (len(stops) - 1)
    i = min(int(x), len(stops) - 2)
    f = x - i
    rgb = [round(a + (b - a) * f) for a, b in zip(stops[i], stops[i + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def emit_heatmap(table: ReportTable, axes: tuple[str, str], out, metric: str = "test_acc",
                 fixed: dict | None = None, title: str | None = None, vmin: float = 0.0, vmax: float = 1.0) -> Path:
    rv, cv, Z = heatmap_grid(table, axes, metric, fixed)
    cw, ch, left, top = 64, 28, 90, 50
    width, height = left + cw * len(cv) + 20, top + ch * len(rv) + 40
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">']
    parts.append(f'<text x="{left}" y="18" font-size="13">{escape(title or metric)}</text>')
    parts.append(f'<text x="{left}" y="{height - 8}">{escape(axes[1])}</text>')
    parts.append(f'<text x="6" y="{top - 8}">{escape(axes[0])}</text>')
    for j, b in enumerate(cv):
        parts.append(f'<text x="{left + j * cw + cw / 2}" y="{top - 8}" text-anchor="middle">{escape(_fmt(b))}</text>')
    for i, a in enumerate(rv):
        y = top + i * ch
        parts.append(f'<text x="{left - 6}" y="{y + ch / 2 + 4}" text-anchor="end">{escape(_fmt(a))}</text>')
        for j in range(len(cv)):
            v = Z[i, j]
            x = left + j * cw
            parts.append(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{_color(v, vmin, vmax)}" stroke="white"/>')
            fg = "black" if not math.isnan(v) and v > vmin + 0.6 * (vmax - vmin) else "white"
            label = "n/a" if math.isnan(v) else f"{v:.2f}"
            parts.append(f'<text x="{x + cw / 2}" y="{y + ch / 2 + 4}" text-anchor="middle" fill="{fg}">{label}</text>')
    parts.append("</svg>")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out


# --- presets ------------------------------------------------------------------------------

def preset(name: str) -> SweepSpec:
    """Desk-scale versions of the published sweeps (fewer epochs; OOD runs also narrower)."""
    muon = OptimConfig.muon(lr=1e-3)
    if name == "underparam":
        base = TrainConfig(p=31, lengths=(3,), d=64, n_train=3000, epochs=5000, optim=OptimConfig.adamw(lr=1e-3))
        return SweepSpec(base, {"act": ["sine", "relu"]}, "all")
    if name in ("overparam-sine", "overparam-relu"):
        act = Activation.SINE if name.endswith("sine") else Activation.RELU
        pol = WdPolicy.V_ONLY if act is Activation.SINE else WdPolicy.BOTH
        base = TrainConfig(p=23, lengths=(2,), d=1024, act=act, n_train=2000, epochs=1500,
                           optim=OptimConfig.muon(lr=1e-3, wd_policy=pol))
        return SweepSpec(base, {"weight_decay": [0.0, 0.003, 0.03, 0.3]}, "all")
    if name in ("ood-p97", "ood-p53", "ood-bias"):
        p = 97 if name == "ood-p97" else 53
        budgets = [4000, 8000, 16000, 32000, 64000] if p == 97 else [1000, 2000, 4000, 8000, 16000]
        base = TrainConfig(p=p, lengths=OOD_TRAIN_LENGTHS, d=256, n_train=budgets[0], epochs=300, optim=muon,
                           eval_lengths=OOD_EVAL_LENGTHS, test_n=2000, test_lengths=(3, 7, 13),
                           bias=(name == "ood-bias"), log_margins=False)
        grid = {"act": ["sine", "relu"], "n_train": budgets, "weight_decay": list(WD_GRID)}
        if name == "ood-bias":
            grid["act"] = ["sine"]
        return SweepSpec(base, grid, "best_over_wd")
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("underparam", "overparam-sine", "overparam-relu", "ood-p97", "ood-p53", "ood-bias")
