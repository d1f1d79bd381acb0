import json
import subprocess
import sys

import pytest

from modadd import verify as V
from modadd.cli import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from modadd.model import load_checkpoint
from modadd.optim import OptimConfig
from modadd.trainer import TrainConfig


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def tiny_config(path, **kw):
    cfg = TrainConfig(p=5, lengths=(2,), d=8, n_train=50, epochs=3, optim=OptimConfig.adamw(), test_n=40,
                      seeds=(1337,), **kw)
    path.write_text(json.dumps(cfg.to_dict()))
    return path


class TestConstructVerify:
    def test_construct_writes_files(self, tmp_path, capsys):
        code, out, _ = run(["construct", "sine_highmargin", "--p", "5", "--m", "3", "--out", str(tmp_path)], capsys)
        assert code == EXIT_OK
        cert = json.loads((tmp_path / "certificate.json").read_text())
        assert cert["width"] == 10 and cert["measured"]["min_margin"] == pytest.approx(5, abs=1e-9)
        assert load_checkpoint(tmp_path / "checkpoint.json").d == 10

    def test_verify_pass(self, capsys):
        code, out, _ = run(["verify", "sine_width2", "p=7", "m=3"], capsys)
        assert code == EXIT_OK and json.loads(out)["passed"] is True

    def test_verify_failure_exit_code(self, capsys, monkeypatch):
        failing = V.Certificate("stub", {}, False, {"why": "forced"})
        monkeypatch.setitem(V.CLAIMS, "stub", lambda params: failing)
        code, out, _ = run(["verify", "stub"], capsys)
        assert code == EXIT_VERIFY and json.loads(out)["witness"] == {"why": "forced"}

    def test_lemma_capacity(self, capsys):
        code, out, _ = run(["lemma", "capacity", "family=relu_width_lb", "p=5", "m=100"], capsys)
        assert code == EXIT_OK and json.loads(out)["value"] == pytest.approx(95 / 7)

    def test_lemma_q2(self, capsys):
        code, out, _ = run(["lemma", "q2", "p=53", "m=4", "n=20000"], capsys)
        assert code == EXIT_OK and json.loads(out)["inside"] is True


class TestUsage:
    def test_bad_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["paint"])
        assert info.value.code == EXIT_USAGE

    def test_bad_params(self, capsys):
        code, _, err = run(["verify", "gram", "p"], capsys)
        assert code == EXIT_USAGE and "key=value" in err

    def test_unknown_config_field(self, tmp_path, capsys):
        cfg = json.loads(tiny_config(tmp_path / "c.json").read_text())
        cfg["dropout"] = 0.5
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        code, _, err = run(["train", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_USAGE and "dropout" in err

    def test_sweep_needs_one_source(self, capsys):
        code, _, _ = run(["sweep"], capsys)
        assert code == EXIT_USAGE


class TestTrainSweepReport:
    def test_train(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path / "c.json")
        code, out, _ = run(["train", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seeds", "1,2"], capsys)
        assert code == EXIT_OK
        assert len(json.loads(out)["final"]) == 2
        assert len(list((tmp_path / "o" / "runs").glob("*.jsonl"))) == 2
        assert (tmp_path / "o" / "checkpoint_2.json").exists()

    def test_train_divergence(self, tmp_path, capsys):
        cfg = TrainConfig(p=5, lengths=(2,), d=8, n_train=50, epochs=20, optim=OptimConfig.sgd(lr=1e300),
                          act="relu", init_std=1.0, test_n=40, seeds=(1,))
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        with pytest.warns(RuntimeWarning):
            code, _, err = run(["train", "--config", str(path), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_DIVERGED and "non-finite" in err

    def test_sweep_and_report(self, tmp_path, capsys):
        spec = {"base": json.loads(tiny_config(tmp_path / "c.json").read_text()),
                "grid": {"weight_decay": [0.0, 0.1]}, "report": "best_over_wd"}
        (tmp_path / "s.json").write_text(json.dumps(spec))
        code, out, _ = run(["sweep", "--config", str(tmp_path / "s.json"), "--out", str(tmp_path / "o")], capsys)
        assert code == EXIT_OK and out.startswith("weight_decay,")
        table_csv = (tmp_path / "o" / "table.csv").read_text()
        code, out, _ = run(["report", "--table", str(tmp_path / "o" / "table.json"), "--out", str(tmp_path / "r"),
                            "--best-over", "weight_decay"], capsys)
        assert code == EXIT_OK
        assert (tmp_path / "r" / "table.csv").read_text() == table_csv
        assert "argmax_weight_decay" in out.splitlines()[-1]

    def test_report_heatmap(self, tmp_path, capsys):
        table = {"schema": "modadd.table/1", "grid_keys": ["act", "n_train"],
                 "rows": [{"act": "sine", "n_train": 10, "seed": 0, "status": "ok", "test_acc": 1.0}]}
        (tmp_path / "t.json").write_text(json.dumps(table))
        code, _, _ = run(["report", "--table", str(tmp_path / "t.json"), "--out", str(tmp_path),
                          "--heatmap", "act,n_train"], capsys)
        assert code == EXIT_OK and (tmp_path / "heatmap.svg").read_text().startswith("<svg")

    def test_report_schema_rejected(self, tmp_path, capsys):
        (tmp_path / "t.json").write_text(json.dumps({"schema": "nope", "grid_keys": [], "rows": []}))
        code, _, _ = run(["report", "--table", str(tmp_path / "t.json")], capsys)
        assert code == EXIT_USAGE

    def test_ood_construction(self, tmp_path, capsys):
        code, out, _ = run(["ood", "--kind", "sine_biased", "--p", "7", "--lengths", "9,40",
                            "--test-n", "500", "--out", str(tmp_path)], capsys)
        res = json.loads(out)["results"]["1337"]
        assert code == EXIT_OK and res["9"]["accuracy"] == 1.0 and res["40"]["accuracy"] == 1.0
        assert (tmp_path / "ood.json").exists()


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "modadd", "verify", "gram", "p=7"], capture_output=True, text=True)
    assert done.returncode == 0 and json.loads(done.stdout)["passed"]
