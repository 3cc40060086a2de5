import numpy as np
import pytest
import scipy.sparse as sp

from xmcpw.cli import run
from xmcpw.data import SparseDataset, save_xmc
from xmcpw.sim import make_synthetic


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds, _ = make_synthetic(240, 15, 5, seed=4)
    save_xmc(ds.subset(range(160)), root / "train.txt")
    save_xmc(ds.subset(range(160, 240)), root / "test.txt")
    return root


def invoke(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def parse_lines(out):
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line and " " not in line)


class TestExitCodes:
    def test_no_command(self, capsys):
        assert invoke(capsys)[0] == 1

    def test_unknown_flag(self, capsys):
        code, _, err = invoke(capsys, "stats", "--data", "x", "--bogus")
        assert code == 1 and err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = invoke(capsys, "stats", "--data", tmp_path / "none.txt")
        assert code == 2 and "error" in err

    def test_malformed_data(self, capsys, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("1 3 3\n0 9:1\n")
        code, _, err = invoke(capsys, "stats", "--data", bad)
        assert code == 2 and "line 2" in err

    def test_corrupt_model(self, capsys, files, tmp_path):
        model = tmp_path / "m.txt"
        model.write_text("xmcpw 9 1 1 0.0\n")
        assert invoke(capsys, "predict", "--data", files / "test.txt", "--model", model)[0] == 2

    def test_propensity_flags_without_training_file(self, capsys, files, tmp_path):
        preds = tmp_path / "p.txt"
        preds.write_text("0:1\n" * 80)
        code, _, _ = invoke(capsys, "evaluate", "--truth", files / "test.txt", "--topk", preds, "--a", "0.5")
        assert code == 1

    def test_unknown_variant(self, capsys):
        assert invoke(capsys, "simulate", "--variants", "plain,other")[0] == 1


class TestEvaluate:
    def test_self_evaluation_reaches_maxima(self, capsys, tmp_path):
        truth = tmp_path / "truth.txt"
        labels = [np.array([0, 2]), np.array([1]), np.array([3, 0, 1])]
        save_xmc(SparseDataset(sp.csr_matrix((3, 2)), [np.sort(l) for l in labels], 4), truth)
        preds = tmp_path / "preds.txt"
        preds.write_text("".join(" ".join(f"{l}:1.0" for l in sorted(r)) + "\n" for r in labels))
        code, out, _ = invoke(capsys, "evaluate", "--truth", truth, "--scores", preds, "--k-list", "1,2")
        assert code == 0
        values = parse_lines(out)
        assert float(values["p@1"]) == 1.0
        for key in ("ndcg@1", "ndcg@2", "psndcg@1", "psndcg@2"):
            assert float(values[key]) == pytest.approx(1.0)
        assert float(values["norm_psp@2"]) == pytest.approx(100.0)

    def test_prediction_count_mismatch(self, capsys, files, tmp_path):
        preds = tmp_path / "p.txt"
        preds.write_text("0:1\n")
        assert invoke(capsys, "evaluate", "--truth", files / "test.txt", "--topk", preds)[0] == 2


class TestStats:
    def test_power_law_recovered(self, capsys, tmp_path):
        counts = [60 // r for r in (1, 2, 3, 4, 5, 6)]  # exact 1/r for divisors of 60
        labels = [np.array([l]) for l, c in enumerate(counts) for _ in range(c)]
        path = tmp_path / "pl.txt"
        save_xmc(SparseDataset(sp.csr_matrix((len(labels), 1)), labels, 6), path)
        code, out, _ = invoke(capsys, "stats", "--data", path)
        assert code == 0
        fit = out.splitlines()[-1]
        assert fit.startswith("power_law")
        beta = float(fit.split("beta=")[1].split()[0])
        assert beta == pytest.approx(1.0, abs=1e-6)
        assert "labels=6" in out


class TestPipeline:
    def test_train_predict_evaluate(self, capsys, files, tmp_path):
        model = tmp_path / "model.txt"
        preds = tmp_path / "preds.txt"
        code, _, _ = invoke(
            capsys, "train", "--data", files / "train.txt", "--model-out", model, "--normalize", "--threads", "2"
        )
        assert code == 0
        assert invoke(capsys, "predict", "--data", files / "test.txt", "--model", model, "--k", 3, "--out", preds)[0] == 0
        lines = preds.read_text().splitlines()
        assert len(lines) == 80 and all(len(l.split()) == 3 for l in lines)
        code, out, _ = invoke(
            capsys, "evaluate", "--truth", files / "test.txt", "--topk", preds, "--freq-from", files / "train.txt",
            "--k-list", "1,3",
        )
        assert code == 0
        values = parse_lines(out)
        assert 0.0 <= float(values["p@1"]) <= 1.0
        assert float(values["psp@1"]) >= float(values["p@1"])

    def test_reruns_are_byte_identical(self, capsys, files, tmp_path):
        outputs = []
        for run_id in range(2):
            model = tmp_path / f"model{run_id}.txt"
            preds = tmp_path / f"preds{run_id}.txt"
            invoke(capsys, "train", "--data", files / "train.txt", "--model-out", model, "--threads", 1 + run_id)
            invoke(capsys, "predict", "--data", files / "test.txt", "--model", model, "--out", preds)
            outputs.append((model.read_bytes(), preds.read_bytes()))
        assert outputs[0] == outputs[1]

    def test_propensities_command(self, capsys, files):
        code, out, _ = invoke(capsys, "propensities", "--data", files / "train.txt", "--dataset", "EURLex-4K")
        assert code == 0
        values = [float(v) for v in out.split()]
        assert len(values) == 5 and all(0 < v < 1 for v in values)

    def test_unknown_dataset_name(self, capsys, files):
        assert invoke(capsys, "propensities", "--data", files / "train.txt", "--dataset", "nope")[0] == 1


class TestSimulate:
    def test_exact(self, capsys):
        code, out, _ = invoke(capsys, "simulate", "--exact")
        assert code == 0
        assert float(parse_lines(out)["exact_check_max_abs_diff"]) <= 1e-10

    def test_small_experiment(self, capsys):
        code, out, _ = invoke(capsys, "simulate", "--grid", "0.5,1", "--points", 200, "--features", 10, "--labels", 3)
        assert code == 0
        assert len(out.splitlines()) == 4
        assert out.splitlines()[0].startswith("p=0.5, variant=plain")
