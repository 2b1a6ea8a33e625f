"""End-to-end command behavior: prepare, train, evaluate, stats, recommend."""

import numpy as np
import pytest

from aesrec.cli import main
from aesrec.data import read_split
from aesrec.features import FeatureMatrix, save_features
from aesrec.model import ModelParams, save_checkpoint

WEEK = 7 * 24 * 3600


def _interactions_file(tmp_path, n_users=12, n_items=14, seed=0,
                       per_user=6, name="inter.csv"):
    rng = np.random.default_rng(seed)
    lines = []
    for p in range(n_users):
        items = rng.choice(n_items, size=per_user, replace=False)
        for q in items:
            ts = int(rng.integers(0, 20)) * WEEK + int(rng.integers(0, WEEK))
            lines.append(f"user{p},item{q},{ts}")
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _prepare(tmp_path, out_name="data", k_core="2", seed="5"):
    inter = _interactions_file(tmp_path)
    out = tmp_path / out_name
    code = main([
        "prepare",
        "--interactions", str(inter),
        "--out-dir", str(out),
        "--min-timestamp", "0",
        "--k-core", k_core,
        "--granularity", str(WEEK),
        "--seed", seed,
    ])
    assert code == 0
    return out


def _feature_file(tmp_path, data_dir, dim_cnn=3, dim_aes=3, seed=1):
    bundle = read_split(data_dir)
    rng = np.random.default_rng(seed)
    fm = FeatureMatrix(dim_cnn, dim_aes,
                       rng.normal(size=(bundle.train.n_items, dim_cnn + dim_aes)))
    path = tmp_path / "features.bin"
    save_features(fm, path)
    return path


class TestPrepare:
    def test_writes_manifest_and_stats(self, tmp_path, capsys):
        out = _prepare(tmp_path)
        for name in ("train.txt", "validation.txt", "test.txt",
                     "split_meta.json", "users.txt", "items.txt",
                     "config_resolved.cfg"):
            assert (out / name).exists()
        printed = capsys.readouterr().out
        assert "users (P)" in printed and "sparsity" in printed

    def test_deterministic_outputs(self, tmp_path):
        out1 = _prepare(tmp_path, out_name="d1")
        out2 = _prepare(tmp_path, out_name="d2")
        for name in ("train.txt", "validation.txt", "test.txt"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_sparsity_toy(self, tmp_path, capsys):
        # 2 users x 2 items, one interaction: matrix sparsity 75%
        path = tmp_path / "toy.csv"
        path.write_text("a,x,0\n", encoding="utf-8")
        # pad the id space through extra users/items with k_core=1
        path.write_text("a,x,0\na,y,0\nb,x,0\n", encoding="utf-8")
        code = main(["prepare", "--interactions", str(path),
                     "--out-dir", str(tmp_path / "toy_out"),
                     "--min-timestamp", "0", "--k-core", "1",
                     "--granularity", str(WEEK), "--seed", "0"])
        assert code == 0
        printed = capsys.readouterr().out
        # 3 of 4 user-item cells filled
        assert "matrix sparsity    25.0000%" in printed

    def test_missing_interactions_key(self, tmp_path):
        assert main(["prepare", "--out-dir", str(tmp_path / "x")]) == 2

    def test_unreadable_file_is_data_error(self, tmp_path):
        assert main(["prepare", "--interactions", str(tmp_path / "nope.csv"),
                     "--out-dir", str(tmp_path / "x")]) == 3

    def test_unknown_model_kind_is_config_error(self, tmp_path):
        inter = _interactions_file(tmp_path)
        assert main(["prepare", "--interactions", str(inter),
                     "--model-kind", "bogus"]) == 2


class TestTrainEvaluateRecommend:
    def _train(self, tmp_path, data_dir, kind, extra=()):
        run = tmp_path / f"run_{kind}"
        args = [
            "train",
            "--data-dir", str(data_dir),
            "--out-dir", str(run),
            "--model-kind", kind,
            "--k1", "3", "--k2", "3",
            "--rho", "1", "--batch-size", "16",
            "--learn-rate", "0.05", "--max-iters", "2",
            "--lambda-r", "0.05",
            "--eval-every", "1", "--eval-subsample", "50",
            "--k-cnn", "2", "--k-aes", "2",
            "--seed", "3",
        ]
        args.extend(extra)
        assert main(args) == 0
        assert (run / "checkpoint.bin").exists()
        assert (run / "history.csv").exists()
        return run

    def test_full_tensor_flow(self, tmp_path, capsys):
        data = _prepare(tmp_path)
        feats = _feature_file(tmp_path, data)
        run = self._train(tmp_path, data, "vra-aplr",
                          ("--features", str(feats)))
        history = (run / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,mean_L,f1@10,ndcg@10,wallclock_ms"
        assert len(history) == 3

        out = tmp_path / "eval_out"
        code = main([
            "evaluate", "--config", str(run / "config_resolved.cfg"),
            "--checkpoint", str(run / "checkpoint.bin"),
            "--out-dir", str(out),
        ])
        assert code == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0] == "model,n,f1,ndcg,groups,skipped"
        assert len(lines) == 6  # n in {5,10,20,50,100}
        capsys.readouterr()

        code = main([
            "recommend", "--config", str(run / "config_resolved.cfg"),
            "--checkpoint", str(run / "checkpoint.bin"),
            "--user", "0", "--time", "0", "--n", "5",
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "top-5 for user 0" in printed

    def test_vra_basic_ignores_feature_file(self, tmp_path):
        data = _prepare(tmp_path)
        # no feature file at all: basic kind must train with clusters disabled
        self._train(tmp_path, data, "vra-basic", ("--k-cnn", "0", "--k-aes", "0"))

    def test_ablation_blocks(self, tmp_path):
        data = _prepare(tmp_path)
        feats = _feature_file(tmp_path, data)
        self._train(tmp_path, data, "vrco", ("--features", str(feats)))
        self._train(tmp_path, data, "vrao", ("--features", str(feats)))

    def test_vrh_uses_hsv_table(self, tmp_path):
        data = _prepare(tmp_path)
        bundle = read_split(data)
        rng = np.random.default_rng(2)
        rows = []
        for ident in bundle.train.items:
            hist = rng.random((3, 4))
            hist /= hist.sum(axis=1, keepdims=True)
            cells = "\t".join(",".join(repr(float(x)) for x in channel)
                              for channel in hist)
            rows.append(f"{ident}\t{cells}")
        table = tmp_path / "hsv.tsv"
        table.write_text("\n".join(rows) + "\n", encoding="utf-8")
        self._train(tmp_path, data, "vrh", ("--hsv-table", str(table)))

    @pytest.mark.parametrize("kind", ["bpr", "wbpr", "cplr"])
    def test_baseline_kinds(self, tmp_path, kind):
        data = _prepare(tmp_path)
        self._train(tmp_path, data, kind)

    def test_vbpr(self, tmp_path):
        data = _prepare(tmp_path)
        feats = _feature_file(tmp_path, data)
        self._train(tmp_path, data, "vbpr", ("--features", str(feats)))

    def test_mse_opt(self, tmp_path):
        data = _prepare(tmp_path)
        self._train(tmp_path, data, "mse-opt")

    def test_train_twice_identical_history(self, tmp_path):
        data = _prepare(tmp_path)
        run1 = self._train(tmp_path, data, "bpr")
        history1 = (run1 / "history.csv").read_text()
        run2_dir = tmp_path / "again"
        args = [
            "train", "--data-dir", str(data), "--out-dir", str(run2_dir),
            "--model-kind", "bpr", "--k1", "3", "--k2", "3", "--rho", "1",
            "--batch-size", "16", "--learn-rate", "0.05", "--max-iters", "2",
            "--lambda-r", "0.05", "--eval-every", "1", "--eval-subsample", "50",
            "--k-cnn", "2", "--k-aes", "2", "--seed", "3",
        ]
        assert main(args) == 0
        history2 = (run2_dir / "history.csv").read_text()
        # wallclock differs; the metric columns must not
        strip = lambda text: [",".join(line.split(",")[:4])
                              for line in text.splitlines()]
        assert strip(history1) == strip(history2)

    def test_zero_checkpoint_recommends_index_order(self, tmp_path, capsys):
        data = _prepare(tmp_path)
        bundle = read_split(data)
        ds = bundle.train
        params = ModelParams(
            np.zeros((2, ds.n_users)), np.zeros((2, ds.n_items)),
            np.zeros((2, ds.n_intervals)), np.zeros((2, ds.n_items)),
        )
        ck = tmp_path / "zero.bin"
        save_checkpoint(ck, params, 0, "vra-basic")
        code = main([
            "recommend", "--data-dir", str(data), "--checkpoint", str(ck),
            "--user", "0", "--time", "0", "--n", "4",
        ])
        assert code == 0
        printed = capsys.readouterr().out
        shown = [int(line.split()[1]) for line in printed.splitlines()[1:]
                 if line.strip() and line.split()[0].isdigit()]
        excluded = set(ds.items_of_user(0).tolist())
        expect = [q for q in range(ds.n_items) if q not in excluded][:4]
        assert shown == expect

    def test_resume_continues_epoch_numbering(self, tmp_path):
        data = _prepare(tmp_path)
        run1 = self._train(tmp_path, data, "vra-basic",
                           ("--k-cnn", "0", "--k-aes", "0"))
        run2 = tmp_path / "resumed"
        args = [
            "train", "--data-dir", str(data), "--out-dir", str(run2),
            "--model-kind", "vra-basic", "--k1", "3", "--k2", "3",
            "--rho", "1", "--batch-size", "16", "--learn-rate", "0.05",
            "--max-iters", "2", "--lambda-r", "0.05", "--eval-every", "1",
            "--eval-subsample", "50", "--k-cnn", "0", "--k-aes", "0",
            "--seed", "3", "--resume", str(run1 / "checkpoint.bin"),
        ]
        assert main(args) == 0
        history = (run2 / "history.csv").read_text().splitlines()[1:]
        epochs = [int(line.split(",")[0]) for line in history]
        first = epochs[0]
        assert first > 1  # continued past the saved iteration
        assert epochs == [first, first + 1]

    def test_resume_kind_mismatch(self, tmp_path, capsys):
        data = _prepare(tmp_path)
        bundle = read_split(data)
        ds = bundle.train
        params = ModelParams(
            np.zeros((2, ds.n_users)), np.zeros((2, ds.n_items)),
            np.zeros((2, ds.n_intervals)), np.zeros((2, ds.n_items)),
        )
        ck = tmp_path / "other_kind.bin"
        save_checkpoint(ck, params, 3, "vrh")
        code = main([
            "train", "--data-dir", str(data),
            "--out-dir", str(tmp_path / "bad"), "--model-kind", "vra-basic",
            "--k-cnn", "0", "--k-aes", "0", "--k1", "2", "--k2", "2",
            "--max-iters", "1", "--resume", str(ck),
        ])
        assert code == 2
        assert "resume checkpoint" in capsys.readouterr().err

    def test_recommend_unknown_user(self, tmp_path):
        data = _prepare(tmp_path)
        bundle = read_split(data)
        ds = bundle.train
        params = ModelParams(
            np.zeros((2, ds.n_users)), np.zeros((2, ds.n_items)),
            np.zeros((2, ds.n_intervals)), np.zeros((2, ds.n_items)),
        )
        ck = tmp_path / "zero.bin"
        save_checkpoint(ck, params, 0, "vra-basic")
        code = main([
            "recommend", "--data-dir", str(data), "--checkpoint", str(ck),
            "--user", "9999", "--time", "0",
        ])
        assert code == 3

    def test_checkpoint_shape_mismatch(self, tmp_path):
        data = _prepare(tmp_path)
        params = ModelParams(np.zeros((2, 3)), np.zeros((2, 3)),
                             np.zeros((2, 3)), np.zeros((2, 3)))
        ck = tmp_path / "bad.bin"
        save_checkpoint(ck, params, 0, "vra-basic")
        code = main([
            "evaluate", "--data-dir", str(data), "--checkpoint", str(ck),
        ])
        assert code == 3


class TestStats:
    def _hsv_table(self, tmp_path, n_items=4, bins=4):
        rows = []
        for i in range(n_items):
            if i == 0:
                channels = [[1.0, 0.0, 0.0, 0.0]] * 3
            else:
                channels = [[0.25] * 4] * 3
            cells = "\t".join(",".join(str(x) for x in ch) for ch in channels)
            rows.append(f"{i}\t{cells}")
        path = tmp_path / "hsv.tsv"
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        return path

    def test_identical_segments_zero_table(self, tmp_path, capsys):
        table = self._hsv_table(tmp_path)
        seg = tmp_path / "seg.txt"
        seg.write_text("1\n2\n", encoding="utf-8")
        code = main([
            "stats", "--hsv-table", str(table), "--segment", str(seg),
            "--baseline-segment", str(seg),
            "--data-dir", str(tmp_path / "missing"),
            "--out-dir", str(tmp_path / "stats_out"),
        ])
        assert code == 0
        lines = (tmp_path / "stats_out" / "hsv_diff.csv").read_text().splitlines()
        assert lines[0].startswith("channel,")
        for line in lines[1:]:
            values = [float(x) for x in line.split(",")[1:]]
            assert all(abs(v) < 1e-12 for v in values)

    def test_two_item_hand_diff_and_zero_sum(self, tmp_path):
        table = self._hsv_table(tmp_path)
        seg_a = tmp_path / "a.txt"
        seg_a.write_text("0\n", encoding="utf-8")
        seg_b = tmp_path / "b.txt"
        seg_b.write_text("1\n", encoding="utf-8")
        out = tmp_path / "stats_out"
        code = main([
            "stats", "--hsv-table", str(table), "--segment", str(seg_a),
            "--baseline-segment", str(seg_b),
            "--data-dir", str(tmp_path / "missing"), "--out-dir", str(out),
        ])
        assert code == 0
        lines = (out / "hsv_diff.csv").read_text().splitlines()
        hue = [float(x) for x in lines[1].split(",")[1:]]
        assert hue == pytest.approx([0.75, -0.25, -0.25, -0.25])
        for line in lines[1:]:
            values = [float(x) for x in line.split(",")[1:]]
            assert abs(sum(values)) < 1e-9

    def test_unknown_segment_id(self, tmp_path):
        table = self._hsv_table(tmp_path)
        seg = tmp_path / "seg.txt"
        seg.write_text("zzz\n", encoding="utf-8")
        code = main([
            "stats", "--hsv-table", str(table), "--segment", str(seg),
            "--baseline-segment", str(seg),
            "--data-dir", str(tmp_path / "missing"),
            "--out-dir", str(tmp_path / "so"),
        ])
        assert code == 3


class TestConfigPlumbing:
    def test_config_file_and_override(self, tmp_path, capsys):
        inter = _interactions_file(tmp_path)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"interactions={inter}\nout_dir={tmp_path / 'from_file'}\n"
            "min_timestamp=0\nk_core=2\nseed=1\n",
            encoding="utf-8",
        )
        code = main(["prepare", "--config", str(cfg),
                     "--out-dir", str(tmp_path / "overridden")])
        assert code == 0
        assert (tmp_path / "overridden" / "train.txt").exists()
        echo = (tmp_path / "overridden" / "config_resolved.cfg").read_text()
        assert "k_core=2" in echo
        assert f"out_dir={tmp_path / 'overridden'}" in echo

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nonsense=1\n", encoding="utf-8")
        assert main(["prepare", "--config", str(cfg)]) == 2

    def test_threads_flag_validated(self, tmp_path):
        inter = _interactions_file(tmp_path)
        assert main(["prepare", "--interactions", str(inter),
                     "--out-dir", str(tmp_path / "t1"),
                     "--min-timestamp", "0", "--k-core", "2",
                     "--threads", "1"]) == 0
        assert main(["prepare", "--interactions", str(inter),
                     "--threads", "0"]) == 2

    def test_evaluate_twice_byte_identical(self, tmp_path, capsys):
        data = _prepare(tmp_path)
        bundle = read_split(data)
        ds = bundle.train
        params = ModelParams(
            np.full((2, ds.n_users), 0.01), np.full((2, ds.n_items), 0.02),
            np.full((2, ds.n_intervals), 0.01), np.full((2, ds.n_items), 0.02),
        )
        ck = tmp_path / "fixed.bin"
        save_checkpoint(ck, params, 1, "vra-basic")
        blobs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            assert main(["evaluate", "--data-dir", str(data),
                         "--checkpoint", str(ck), "--out-dir", str(out),
                         "--seed", "4"]) == 0
            blobs.append((out / "metrics.csv").read_bytes())
        capsys.readouterr()
        assert blobs[0] == blobs[1]

    def test_paper_protocol_values_accepted(self, tmp_path):
        inter = _interactions_file(tmp_path)
        cfg = tmp_path / "paper.cfg"
        cfg.write_text(
            f"interactions={inter}\nmax_iters=200\nrho=5\nk1=200\nk2=200\n"
            "lambda_c=0.01\nlambda_r=1.5\neta1=0.1\neta2=0.01\n"
            f"min_timestamp=0\nk_core=2\nout_dir={tmp_path / 'pp'}\n",
            encoding="utf-8",
        )
        # prepare only parses and splits; the hyperparameters must validate
        assert main(["prepare", "--config", str(cfg)]) == 0
