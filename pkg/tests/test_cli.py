import csv
import os
import re

import pytest

from gradsurgery import cli, surgery, verify

SMALL = """\
dataset.num_classes = 6
dataset.samples_per_class = 8
dataset.input_dim = 8
dataset.holdout_classes = 2
encoder.embed_dim = 4
train.epochs = 3
train.classes_per_batch = 2
train.samples_per_class = 4
eval.ks = 1,2
run.seeds = 0,1
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return path


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def read_bytes(directory, names=("recall.csv", "stats.csv", "diagram.csv")):
    return {n: (directory / n).read_bytes() for n in names}


class TestVerify:
    def test_all_pass(self, capsys):
        assert cli.main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "8/8 suites passed" in out
        for name in verify.SUITES:
            assert re.search(rf"PASS\s+{name}\s+max_error=\S+", out)

    def test_report_has_numeric_errors(self):
        res = verify.closed_form_values()
        assert isinstance(res.max_error, float) and res.max_error < res.tolerance

    def test_corrupted_cosine_weight_fails(self, monkeypatch, capsys):
        def flipped(s_ap, s_an, tau):
            return 1.0 / (1.0 + surgery._exp(-tau * (s_ap - s_an)))

        monkeypatch.setattr(surgery, "cosine_triplet_weight", flipped)
        assert not verify.cosine_triplet_weight().passed
        assert cli.main(["verify"]) == 1
        out = capsys.readouterr().out
        assert re.search(r"FAIL\s+cosine_triplet_weight", out)


class TestTrain:
    def test_writes_both_seeds(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["train", str(config_path), "--output-dir", str(out), "--threads", "1"]) == 0
        recall = read_csv(out / "recall.csv")
        assert recall[0] == ["seed", "epoch", "split", "k", "recall"]
        assert {r[0] for r in recall[1:]} == {"0", "1"}
        assert {r[2] for r in recall[1:]} == {"train", "holdout"}
        # 2 seeds x 3 epochs x 2 splits x 2 ks
        assert len(recall) - 1 == 24
        assert read_csv(out / "stats.csv")[0] == ["seed", "epoch", "mean_s_ap", "mean_s_an", "lr"]
        diagram = read_csv(out / "diagram.csv")
        assert diagram[0] == ["seed", "split", "anchor_id", "s_np", "s_nn"]
        assert len(diagram) - 1 == 2 * 48
        assert (out / "config.resolved.txt").exists()

    def test_byte_identical_reruns_and_threads(self, config_path, tmp_path):
        outs = []
        for i, threads in enumerate(["1", "1", "2"]):
            out = tmp_path / f"out{i}"
            assert cli.main(["train", str(config_path), "--output-dir", str(out),
                             "--threads", threads]) == 0
            outs.append(read_bytes(out))
        assert outs[0] == outs[1] == outs[2]

    def test_round_trip_precision(self, config_path, tmp_path):
        out = tmp_path / "out"
        cli.main(["train", str(config_path), "--output-dir", str(out), "--threads", "1"])
        for row in read_csv(out / "stats.csv")[1:]:
            for cell in row[2:]:
                assert format(float(cell), ".17g") == cell

    def test_unwritable_output(self, config_path, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("not a directory")
        code = cli.main(["train", str(config_path), "--output-dir", str(blocker / "sub")])
        assert code != 0
        assert "error" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("train.base_lr = -1\n")
        assert cli.main(["train", str(path)]) == 2
        assert "base_lr" in capsys.readouterr().err

    def test_diagram_only(self, config_path, tmp_path):
        out = tmp_path / "diag"
        assert cli.main(["diagram", str(config_path), "--output-dir", str(out), "--threads", "1"]) == 0
        assert (out / "diagram.csv").exists()
        assert not (out / "recall.csv").exists()


class TestSweep:
    def test_direction_axis(self, config_path, tmp_path):
        out = tmp_path / "sweep"
        values = "euclidean,cosine,euclidean_orthogonal,cosine_orthogonal"
        assert cli.main(["sweep", str(config_path), "--axis", "direction", "--values", values,
                         "--output-dir", str(out), "--threads", "1"]) == 0
        summary = read_csv(out / "summary.csv")
        assert summary[0] == ["axis", "value", "runs", "mean_recall_at_1", "std_recall_at_1"]
        assert [r[1] for r in summary[1:]] == values.split(",")
        assert all(r[2] == "2" for r in summary[1:])

    def test_lr_axis_five_seeds(self, config_path, tmp_path):
        config_path.write_text(SMALL.replace("run.seeds = 0,1", "run.seeds = 0,1,2,3,4")
                               .replace("train.epochs = 3", "train.epochs = 1"))
        out = tmp_path / "sweep"
        assert cli.main(["sweep", str(config_path), "--axis", "lr", "--values", "0.1,0.01",
                         "--output-dir", str(out), "--threads", "2"]) == 0
        summary = read_csv(out / "summary.csv")
        assert len(summary) == 3
        runs = 0
        for value in ("0.1", "0.01"):
            seeds = {r[0] for r in read_csv(out / f"lr={value}" / "stats.csv")[1:]}
            runs += len(seeds)
        assert runs == 10
        for row in summary[1:]:
            assert 0 <= float(row[3]) <= 1 and float(row[4]) >= 0

    def test_invalid_value_before_any_run(self, config_path, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = cli.main(["sweep", str(config_path), "--axis", "pair_weight",
                         "--values", "linear,bogus", "--output-dir", str(out)])
        assert code == 2
        assert not out.exists()
        assert "bogus" in capsys.readouterr().err
