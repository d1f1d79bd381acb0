"""
Training sine and ReLU networks
===============================

One seed of the underparameterized comparison and of the length
generalization experiment at the acceptance settings. Expect a few minutes
on one core. ``--quick`` cuts the epochs tenfold, which is too short for the
sine nets to take off but shows the mechanics.
"""

import argparse
import time

from modadd import OptimConfig, TrainConfig, default_wd_policy, train

ap = argparse.ArgumentParser()
ap.add_argument("--quick", action="store_true")
args = ap.parse_args()
scale = 10 if args.quick else 1

# %%
# Few neurons, fixed length: sine should fit, ReLU should struggle.
for act in ("sine", "relu"):
    cfg = TrainConfig(p=31, lengths=(3,), d=64, act=act, n_train=3000, epochs=5000 // scale,
                      optim=OptimConfig.adamw(lr=1e-3), log_margins=False)
    t0 = time.perf_counter()
    rec = train(cfg, 1337).final
    print(f"{act:4s} d=64 p=31: train {rec.train_acc:.3f} test {rec.test_acc:.3f} ({time.perf_counter() - t0:.0f}s)")

# %%
# Several training lengths, evaluated at a much longer one.
for act in ("sine", "relu"):
    cfg = TrainConfig(p=11, lengths=(2, 3, 5), d=128, act=act, n_train=3000, epochs=5000 // scale,
                      optim=OptimConfig.muon(lr=1e-3, weight_decay=0.01, wd_policy=default_wd_policy(act)),
                      eval_lengths=(8, 50), log_margins=False)
    rec = train(cfg, 1337).final
    ood = ", ".join(f"m={m}: {a:.3f}" for m, a in rec.ood.items())
    print(f"{act:4s} lengths 2,3,5: in-domain {rec.test_acc:.3f}; unseen lengths {ood}")
