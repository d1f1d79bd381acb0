"""
A small sweep and its heatmap
=============================

Runs a tiny weight-decay by training-budget grid, aggregates over seeds, and
writes ``table.csv`` and ``heatmap.svg`` under ``demo_out/``.
"""

from pathlib import Path

from modadd import OptimConfig, TrainConfig
from modadd.sweep import SweepSpec, emit_heatmap, run_sweep

out = Path("demo_out")
base = TrainConfig(p=7, lengths=(2, 3), d=32, n_train=400, epochs=300, batch=64, optim=OptimConfig.muon(),
                   eval_lengths=(6, 12), test_n=1000, seeds=(1337, 1338), log_margins=False)
spec = SweepSpec(base, {"n_train": [200, 400], "weight_decay": [0.0, 0.1]})
table = run_sweep(spec, out_dir=out)

print(table.to_csv())
for row in table.best_over("test_acc"):
    print("best over weight decay:", row)
path = emit_heatmap(table, ("length", "n_train"), out / "heatmap.svg", title="accuracy at unseen lengths")
print("wrote", path)
