import itertools
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from attribkit.cli import main
from attribkit.core import SplitConfig, background_rows, load_csv, load_schema, split
from attribkit.explain import read_report
from attribkit.nnet import load_checkpoint


def run(*argv):
    return main([str(a) for a in argv])


def exit_code(*argv):
    with pytest.raises(SystemExit) as exc:
        run(*argv)
    return exc.value.code


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-data", "--kind", "regression", "--rows", 300, "--seed", 1, "--out", d / "reg.csv") == 0
    assert run("gen-data", "--kind", "classification", "--rows", 200, "--seed", 1, "--out", d / "clf.csv") == 0
    common = ("--epochs", 5, "--seed", 3)
    assert run("train", "--data", d / "reg.csv", "--schema", d / "reg.schema.json", "--task", "regression",
               "--model", "mlp", "--out", d / "mlp.json", *common) == 0
    assert run("train", "--data", d / "reg.csv", "--schema", d / "reg.schema.json", "--task", "regression",
               "--model", "attention", "--out", d / "att.json", *common) == 0
    return d


class TestGenData:
    def test_reproducible(self, tmp_path):
        for name in ("a", "b"):
            assert run("gen-data", "--kind", "linear", "--rows", 20, "--seed", 4, "--out", tmp_path / f"{name}.csv") == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert load_schema(tmp_path / "a.schema.json").features == ("x1", "x2")

    def test_bad_rows(self, tmp_path):
        assert run("gen-data", "--rows", 0, "--out", tmp_path / "x.csv") == 2


class TestTrain:
    def test_regression_output(self, work, capsys):
        out = work / "again.json"
        assert run("train", "--data", work / "reg.csv", "--schema", work / "reg.schema.json", "--task", "regression",
                   "--model", "mlp", "--epochs", 5, "--seed", 3, "--out", out) == 0
        text = capsys.readouterr().out
        assert "MAE" in text and "MSE" in text
        assert out.read_bytes() == (work / "mlp.json").read_bytes()

    def test_classification_metrics(self, work, capsys, tmp_path):
        assert run("train", "--data", work / "clf.csv", "--schema", work / "clf.schema.json", "--task",
                   "classification", "--model", "mlp", "--epochs", 3, "--out", tmp_path / "c.json") == 0
        text = capsys.readouterr().out
        for k in ("precision", "recall", "f1", "balanced_accuracy"):
            assert k in text
        _, obj = load_checkpoint(tmp_path / "c.json")
        assert obj["extra"]["task"] == "classification"

    def test_task_mismatch(self, work, tmp_path):
        assert run("train", "--data", work / "reg.csv", "--schema", work / "reg.schema.json", "--task",
                   "classification", "--model", "mlp", "--out", tmp_path / "x.json") == 2

    def test_missing_data(self, work, tmp_path):
        assert run("train", "--data", tmp_path / "nope.csv", "--schema", work / "reg.schema.json", "--task",
                   "regression", "--model", "mlp", "--out", tmp_path / "x.json") == 1

    def test_bad_hyperparameters(self, work, tmp_path):
        base = ("train", "--data", work / "reg.csv", "--schema", work / "reg.schema.json", "--task", "regression",
                "--model", "mlp", "--out", tmp_path / "x.json")
        assert run(*base, "--epochs", 0) == 2
        assert run(*base, "--split", 1.5) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, work, tmp_path):
        assert run("train", "--data", work / "reg.csv", "--schema", work / "reg.schema.json", "--task", "regression",
                   "--model", "mlp", "--epochs", 3, "--lr", 1e305, "--out", tmp_path / "x.json") == 3


def _brute_shapley(f, x, Z):
    n = len(x)
    base = f(Z).mean()

    def v(S):
        H = Z.copy()
        H[:, list(S)] = x[list(S)]
        return f(H).mean() - base

    phi = np.zeros(n)
    for j in range(n):
        others = [i for i in range(n) if i != j]
        for r in range(n):
            w = math.factorial(r) * math.factorial(n - r - 1) / math.factorial(n)
            for S in itertools.combinations(others, r):
                phi[j] += w * (v(S + (j,)) - v(S))
    return phi


class TestExplain:
    def test_exact_local_matches_brute_force(self, work, tmp_path):
        assert run("explain", "--checkpoint", work / "mlp.json", "--data", work / "reg.csv", "--method", "exact",
                   "--instance", 5, "--background", 32, "--out", tmp_path, "--format", "svg") == 0
        fd, meta = read_report(tmp_path / "local.json", with_meta=True)
        assert (tmp_path / "local.svg").exists() and (tmp_path / "global.svg").exists()
        model, obj = load_checkpoint(work / "mlp.json")
        data = load_csv(work / "reg.csv", load_schema(work / "reg.schema.json"))
        s = obj["extra"]["split"]
        train, _ = split(data, SplitConfig(s["train_fraction"], s["seed"], s["shuffle"]))
        Z = background_rows(train, 32, 0)
        want = _brute_shapley(lambda X: model.predict(X)[:, 0], data.rows[5], Z)
        np.testing.assert_allclose(fd.forces, want, atol=1e-9)
        gi = read_report(tmp_path / "global.json")
        assert gi.order == tuple(int(i) for i in np.lexsort((np.arange(6), -np.abs(want))))
        assert meta["instance"] == 5 and meta["background"] == 32 and meta["method"] == "exact"

    def test_mc_byte_identical(self, work, tmp_path):
        args = ("explain", "--checkpoint", work / "mlp.json", "--data", work / "reg.csv", "--method", "mc",
                "--instance", 2, "--samples", 2000, "--seed", 9, "--background", 16)
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        for name in ("local.json", "global.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        meta = json.loads((tmp_path / "a" / "local.json").read_text())["meta"]
        assert meta["samples"] == 2000 and meta["seed"] == 9

    def test_kernel_group(self, work, tmp_path):
        assert run("explain", "--checkpoint", work / "mlp.json", "--data", work / "reg.csv", "--method", "kernel",
                   "--group", "subject=1,activity=1", "--limit", 4, "--background", 16, "--out", tmp_path,
                   "--format", "html") == 0
        ge = read_report(tmp_path / "group.json")
        assert len(ge.members) <= 4 and ge.key == {"subject": "1", "activity": "1"}
        assert list(ge.instances) == sorted(ge.instances)
        assert "Members by prediction" in (tmp_path / "group.html").read_text()

    def test_attention(self, work, tmp_path):
        assert run("explain", "--checkpoint", work / "att.json", "--data", work / "reg.csv", "--method",
                   "attention", "--group", "subject=2", "--out", tmp_path) == 0
        summary = read_report(tmp_path / "attention.json")
        assert summary.mean_weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_config_errors(self, work, tmp_path):
        base = ("explain", "--data", work / "reg.csv", "--out", tmp_path)
        assert run(*base, "--checkpoint", work / "mlp.json", "--method", "attention", "--instance", 0) == 2
        assert run(*base, "--checkpoint", work / "mlp.json", "--method", "exact", "--instance", 10**6) == 2
        assert run(*base, "--checkpoint", work / "mlp.json", "--method", "exact", "--group", "session=1") == 2
        assert run(*base, "--checkpoint", work / "mlp.json", "--method", "exact", "--group", "subject=99") == 2
        assert run(*base, "--checkpoint", work / "mlp.json", "--method", "kernel", "--instance", 0, "--budget", 0) == 2
        assert run(*base, "--checkpoint", tmp_path / "none.json", "--method", "exact", "--instance", 0) == 1

    def test_argument_errors(self, work, tmp_path):
        assert exit_code("explain", "--checkpoint", work / "mlp.json", "--data", work / "reg.csv",
                         "--method", "exact", "--out", tmp_path) == 2
        assert exit_code("explain", "--checkpoint", work / "mlp.json", "--data", work / "reg.csv", "--method",
                         "exact", "--instance", 0, "--group", "subject=1", "--out", tmp_path) == 2
        assert exit_code("train", "--bogus") == 2
        assert exit_code() == 2


class TestVerifyAndHelp:
    def test_verify_axioms(self, capsys):
        assert run("verify", "--suite", "axioms") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert all(line.startswith("PASS") for line in lines[:-1])
        assert lines[-1] == "5/5 checks passed"

    def test_help_lists_flags(self):
        out = subprocess.run([sys.executable, "-m", "attribkit.cli", "explain", "--help"],
                             capture_output=True, text=True, check=True).stdout
        for flag in ("--checkpoint", "--method", "--instance", "--group", "--budget", "--samples", "--format"):
            assert flag in out
