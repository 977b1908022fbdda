import json
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from translob.attention import read_pgm, to_gray, write_pgm
from translob.cli import build_parser, main
from translob.config import RunConfig
from translob.lob import LobSeries, load_archive, parse_lob_file, write_lob_csv
from translob.model import ConfigError
from translob.nn import load_checkpoint


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("synth", "--seed", 2, "--n", 1500, "--days", 4, "--out", d / "lob.csv") == 0
    common = ["--train-days", 3, "--test-days", 1, "--smoothing", "mean_k_plus_1"]
    assert run("prepare", d / "lob.csv", "--out", d / "train", "--split", "train", *common) == 0
    assert run("prepare", d / "lob.csv", "--out", d / "test", "--split", "test", *common) == 0
    assert run("train", d / "train", "--val", d / "test", "--epochs", 1, "--out-dir", d / "run") == 0
    return d


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.batch_size, cfg.learning_rate, cfg.num_heads, cfg.num_blocks) == (32, 1e-4, 3, 2)
        assert (cfg.horizon_k, cfg.alpha, cfg.epochs, cfg.window) == (10, 0.002, 150, 100)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig.from_dict({"learning_rat": 0.1})

    def test_round_trip(self, tmp_path):
        path = tmp_path / "c.json"
        cfg = RunConfig(seed=3, horizon_k=50, dilations=(1, 2))
        path.write_text(json.dumps(cfg.to_dict()))
        assert RunConfig.load(path) == cfg

    def test_heads_conflict(self):
        with pytest.raises(ConfigError):
            RunConfig(num_heads=4)

    def test_merge_ignores_none(self):
        assert RunConfig().merged({"epochs": 3, "seed": None}).epochs == 3


class TestSynth:
    def test_round_trip_and_determinism(self, workdir):
        assert run("synth", "--seed", 1, "--n", 5000, "--regime", "mixed", "--out", "a.csv") == 0
        assert run("synth", "--seed", 1, "--n", 5000, "--regime", "mixed", "--out", "b.csv") == 0
        assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
        assert len(parse_lob_file(workdir / "a.csv")) == 5000

    def test_zero_events(self, workdir):
        with pytest.raises(SystemExit) as exc:
            run("synth", "--n", 0, "--out", "x.csv")
        assert exc.value.code == 2

    def test_unwritable(self, workdir):
        assert run("synth", "--n", 10, "--out", workdir / "missing" / "x.csv") == 1


class TestPrepare:
    def test_window_count(self, workdir):
        run("synth", "--seed", 0, "--n", 3000, "--days", 10, "--out", "s.csv")
        assert run("prepare", "s.csv", "--out", "arc", "--k", 20) == 0
        ws = load_archive(workdir / "arc")
        # 300 events per day, first day only supplies statistics
        assert len(ws) == 9 * (300 - 99 - 20)
        meta = json.loads((workdir / "arc.json").read_text())
        assert meta["horizon_k"] == 20 and meta["n_windows"] == len(ws) and meta["seed"] == 0

    def test_missing_input(self, workdir):
        assert run("prepare", "nope.csv", "--out", "arc") == 2

    def test_alpha_zero_neutral_only_exact_zero(self, workdir):
        # a tick-grid path with long flat stretches, so exact zero moves occur
        rng = np.random.default_rng(0)
        steps = np.concatenate([np.r_[np.zeros(int(rng.integers(15, 40))), rng.integers(-3, 4, 5)]
                                for _ in range(40)])[:900]
        mids = (10_000 + np.cumsum(steps)) / 100
        feats = np.empty((900, 40))
        for lvl in range(10):
            feats[:, 4 * lvl] = mids + 0.01 * (lvl + 1)
            feats[:, 4 * lvl + 1] = rng.uniform(1, 10, 900)
            feats[:, 4 * lvl + 2] = mids - 0.01 * (lvl + 1)
            feats[:, 4 * lvl + 3] = rng.uniform(1, 10, 900)
        write_lob_csv(LobSeries(feats, np.repeat([0, 1, 2], 300)), workdir / "s.csv")
        assert run("prepare", "s.csv", "--out", "arc", "--alpha", 0, "--smoothing", "mean_k_plus_1") == 0
        ws = load_archive(workdir / "arc")
        mids = parse_lob_file(workdir / "s.csv").mid_prices()
        for t, label in zip(ws.anchors, ws.labels):
            exact = [Fraction(m) for m in mids[t : t + 11]]
            r = (sum(exact) / 11 - exact[0]) / exact[0]
            assert (label == 1) == (r == 0)
        assert set(ws.labels.tolist()) == {0, 1, 2}

    def test_multiple_fi2010_files(self, workdir):
        rng = np.random.default_rng(0)
        for day in range(2):
            n = 150
            mid = 10 + np.cumsum(rng.normal(0, 0.001, n))
            rows = []
            for lvl in range(10):
                rows += [mid + 0.01 * (lvl + 1), rng.uniform(1, 5, n), mid - 0.01 * (lvl + 1), rng.uniform(1, 5, n)]
            rows += [rng.normal(size=n) for _ in range(104)]
            np.savetxt(workdir / f"day{day}.txt", np.array(rows))
        assert run("prepare", "day0.txt", "day1.txt", "--layout", "fi2010", "--out", "fi") == 0
        assert len(load_archive(workdir / "fi")) == 150 - 99 - 10

    def test_config_file_and_flag_precedence(self, workdir):
        run("synth", "--seed", 0, "--n", 900, "--days", 3, "--out", "s.csv")
        (workdir / "c.json").write_text(json.dumps({"horizon_k": 50, "alpha": 0.001}))
        assert run("prepare", "s.csv", "--out", "arc", "--config", "c.json", "--k", 20) == 0
        meta = json.loads((workdir / "arc.json").read_text())
        assert meta["horizon_k"] == 20 and meta["alpha"] == 0.001

    def test_bad_config_key(self, workdir):
        run("synth", "--n", 900, "--days", 3, "--out", "s.csv")
        (workdir / "c.json").write_text(json.dumps({"k": 50}))
        assert run("prepare", "s.csv", "--out", "arc", "--config", "c.json") == 2


class TestTrain:
    def test_outputs_and_log(self, pipeline):
        run_dir = pipeline / "run"
        assert {"best.json", "final.json", "history.json", "run.log"} <= {p.name for p in run_dir.iterdir()}
        log = (run_dir / "run.log").read_text()
        assert "batch=32" in log and "lr=0.0001" in log and "heads=3" in log and "blocks=2" in log
        assert "seed=0" in log

    def test_resume_continues_step_counter(self, pipeline):
        first = load_checkpoint(pipeline / "run" / "final.json")
        assert run("train", pipeline / "train", "--resume", pipeline / "run" / "final.json", "--epochs", 1,
                   "--out-dir", pipeline / "resumed") == 0
        second = load_checkpoint(pipeline / "resumed" / "final.json")
        assert second["adam"]["t"] == 2 * first["adam"]["t"]
        assert second["meta"]["epoch"] == 2

    def test_conflicting_heads(self, pipeline, capsys):
        assert run("train", pipeline / "train", "--heads", 4, "--out-dir", pipeline / "bad") == 2
        assert "num_heads" in capsys.readouterr().err
        assert not (pipeline / "bad" / "final.json").exists()

    def test_empty_archive(self, pipeline, workdir):
        run("synth", "--n", 150, "--days", 1, "--out", "s.csv")
        run("prepare", "s.csv", "--out", "empty")
        assert run("train", "empty", "--out-dir", "r") == 2


class TestEval:
    def test_metrics_json(self, pipeline, capsys):
        capsys.readouterr()
        assert run("eval", pipeline / "test", pipeline / "run" / "final.json") == 0
        metrics = json.loads(capsys.readouterr().out)
        assert set(metrics) >= {"confusion", "accuracy", "precision", "recall", "f1", "macro_f1"}
        assert sum(map(sum, metrics["confusion"])) == len(load_archive(pipeline / "test"))

    def test_training_archive_is_learned(self, workdir, capsys):
        run("synth", "--seed", 3, "--n", 620, "--days", 2, "--out", "s.csv")
        assert run("prepare", "s.csv", "--out", "arc", "--smoothing", "mean_k_plus_1") == 0
        assert len(load_archive(workdir / "arc")) == 310 - 99 - 10
        assert run("train", "arc", "--epochs", 30, "--seed", 1, "--out-dir", "run") == 0
        capsys.readouterr()
        assert run("eval", "arc", workdir / "run" / "final.json") == 0
        assert json.loads(capsys.readouterr().out)["accuracy"] > 90.0

    def test_wrong_d_names_tensor(self, pipeline, workdir, capsys):
        (workdir / "c.json").write_text(json.dumps({"conv_filters": 11, "d_model": 12, "mlp_dim": 48}))
        assert run("eval", pipeline / "test", pipeline / "run" / "final.json", "--config", "c.json") == 2
        err = capsys.readouterr().err
        assert "shape mismatch for tensor 'conv0.w'" in err

    def test_empty_archive(self, pipeline, workdir):
        run("synth", "--n", 150, "--days", 1, "--out", "s.csv")
        run("prepare", "s.csv", "--out", "empty")
        assert run("eval", "empty", pipeline / "run" / "final.json") == 2


class TestAttention:
    def test_exports(self, pipeline, workdir):
        assert run("attention", pipeline / "test", pipeline / "run" / "final.json", "--index", 2, "--out-dir", "att") == 0
        csvs = sorted((workdir / "att").glob("*.csv"))
        assert len(csvs) == 6
        for path in csvs:
            a = np.loadtxt(path, delimiter=",")
            assert a.shape == (100, 100)
            np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
            assert (np.triu(a, 1) < 1e-30).all()
            gray = read_pgm(path.with_suffix(".pgm"))
            assert gray.shape == (100, 100) and gray.max() == 255

    def test_out_of_range(self, pipeline, workdir):
        assert run("attention", pipeline / "test", pipeline / "run" / "final.json", "--index", 10**6) == 2

    def test_pgm_scaling(self, tmp_path):
        m = np.array([[0.0, 0.5], [0.25, 1.0]])
        np.testing.assert_array_equal(to_gray(m), [[0, 128], [64, 255]])
        write_pgm(tmp_path / "m.pgm", m)
        assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n2 2\n255\n")
        np.testing.assert_array_equal(read_pgm(tmp_path / "m.pgm"), to_gray(m))


class TestHelp:
    @pytest.mark.parametrize("command", ["synth", "prepare", "train", "eval", "attention"])
    def test_help_exits_zero(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([command, "--help"])
        assert exc.value.code == 0

    def test_defaults_visible(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--help"])
        out = capsys.readouterr().out
        for text in ("(default: 32)", "(default: 0.0001)", "(default: 3)", "(default: 2)", "(default: 150)",
                     "(default: 1,2,4,8,16)", "(default: 0.1)"):
            assert text in out
        with pytest.raises(SystemExit):
            build_parser().parse_args(["prepare", "--help"])
        out = capsys.readouterr().out
        assert "(default: 10)" in out and "(default: 0.002)" in out and "(default: literal)" in out

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "translob", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "synth" in proc.stdout

    def test_thread_env(self, workdir, monkeypatch):
        monkeypatch.setenv("TRANSLOB_THREADS", "1")
        assert run("synth", "--n", 10, "--out", "s.csv") == 0
        monkeypatch.setenv("TRANSLOB_THREADS", "zero")
        assert run("synth", "--n", 10, "--out", "s.csv") == 2
