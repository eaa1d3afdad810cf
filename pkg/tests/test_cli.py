import json

import pytest

from fgcf import cli
from fgcf.bound import BoundParams, generalization_bound
from fgcf.errors import DataError


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sampled(tmp_path_factory):
    out = tmp_path_factory.mktemp("sample")
    assert run("sample", "--preset", "reference", "--users", 80, "--movies", 60, "--density", 6,
               "--seed", 1, "--out", out) == 0
    return out


def write_config(path, **extra):
    body = dict(mode="sweep", preset="reference", n_users=100, n_movies=100, densities=[2, 4],
                seeds=[0, 1, 2], validation=40, imp_max_iters=10, em_max_iters=10, imp_refits=1, sweeps=5)
    body.update(extra)
    lines = [f"{k} = {json.dumps(v)}" for k, v in body.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestIngest:
    def test_round_trip(self, tmp_path):
        raw = tmp_path / "raw.csv"
        raw.write_text("user,movie,rating\nalice,m9,4\nbob,m9,2\nalice,m3,5\n")
        assert run("ingest", raw, "--out", tmp_path / "o") == 0
        data = (tmp_path / "o" / "data.csv").read_text().splitlines()
        assert data[1:] == ["0,0,4", "1,0,2", "0,1,5"]
        users = cli.read_id_map(tmp_path / "o" / "user_ids.csv")
        movies = cli.read_id_map(tmp_path / "o" / "movie_ids.csv")
        obs, _, _ = cli.ingest_file(raw)
        assert cli.restore_ids(obs, users, movies) == [("alice", "m9", 4), ("bob", "m9", 2),
                                                       ("alice", "m3", 5)]

    def test_duplicate_pair(self, tmp_path, capsys):
        raw = tmp_path / "raw.csv"
        raw.write_text("user,movie,rating\na,b,4\nc,b,1\na,b,2\n")
        assert run("ingest", raw, "--out", tmp_path) == 3
        assert "line 4" in capsys.readouterr().err

    @pytest.mark.parametrize("body", ["user,movie\n", "user,movie,rating\na,b,6\n", "user,movie,rating\na,b,x\n"])
    def test_bad_input(self, tmp_path, body):
        raw = tmp_path / "raw.csv"
        raw.write_text(body)
        with pytest.raises(DataError):
            cli.ingest_file(raw)

    def test_missing_file(self, tmp_path):
        assert run("ingest", tmp_path / "nope.csv", "--out", tmp_path) == 3


class TestPipeline:
    def test_sample_outputs(self, sampled):
        for name in ("data.csv", "user_groups.csv", "movie_groups.csv"):
            assert b"\r" not in (sampled / name).read_bytes()
        assert len((sampled / "user_groups.csv").read_text().splitlines()) == 81

    @pytest.mark.parametrize("alg,extra", [("imp", ["--refits", 2]), ("em", ["--max-iters", 20])])
    def test_init_train_predict(self, sampled, tmp_path, alg, extra):
        data = sampled / "data.csv"
        assert run("init", "--data", data, "--groups", 4, "--users", 80, "--movies", 60,
                   "--out", tmp_path / "init") == 0
        beliefs = ["--beliefs", tmp_path / "init" / "beliefs.npz"] if alg == "em" else []
        assert run("train", "--data", data, "--model", tmp_path / "init" / "model.json", "--alg", alg,
                   "--users", 80, "--movies", 60, "--out", tmp_path / "tr", *beliefs, *extra) == 0
        trace = (tmp_path / "tr" / "trace.csv").read_text().splitlines()
        assert len(trace) >= 2
        pairs = tmp_path / "pairs.csv"
        pairs.write_text("user,movie\n0,0\n79,59\n5,7\n")
        for est in ("r1", "r2", "map"):
            out = tmp_path / f"pred_{est}.csv"
            assert run("predict", "--data", data, "--model", tmp_path / "tr" / "model.json",
                       "--state", tmp_path / "tr" / "state.npz", "--pairs", pairs, "--estimator", est,
                       "--users", 80, "--movies", 60, "--out", out) == 0
            vals = [float(line.split(",")[2]) for line in out.read_text().splitlines()[1:]]
            assert len(vals) == 3 and all(1.0 <= v <= 5.0 for v in vals)

    def test_uniform_init(self, sampled, tmp_path):
        assert run("init", "--data", sampled / "data.csv", "--groups", 2, "--method", "uniform",
                   "--out", tmp_path) == 0
        model = json.loads((tmp_path / "model.json").read_text())
        assert model["p_u"] == [0.5, 0.5]

    def test_bound_single_and_grid(self, tmp_path, capsys):
        assert run("bound", "--g-u", 2, "--g-v", 2, "--users", 100, "--movies", 100, "--obs", 1000,
                   "--delta", 0.1) == 0
        assert float(capsys.readouterr().out) == generalization_bound(BoundParams(2, 2, 100, 100, 1000, 0.1))
        assert run("bound", "--g-u", "2,3", "--g-v", 2, "--users", 100, "--movies", 100,
                   "--obs", "100,1000", "--out", tmp_path / "b.csv") == 0
        assert len((tmp_path / "b.csv").read_text().splitlines()) == 5

    def test_bound_invalid(self):
        assert run("bound", "--g-u", 2, "--g-v", 2, "--users", 2, "--movies", 100, "--obs", 10) == 2

    def test_tree(self, capsys):
        assert run("tree", "--users", 10000, "--movies", 10000, "--d-max", 2, "--depth", 0,
                   "--delta", 0.5) == 0
        assert "holds=True" in capsys.readouterr().out

    def test_de(self, sampled, tmp_path):
        deg = tmp_path / "deg.json"
        deg.write_text(json.dumps({"user": {"2": 0.5, "4": 0.5}, "movie": {"3": 1.0}}))
        cli.save_model(cli.ev.reference_model(), tmp_path / "m.json")
        for args in (["--degrees", deg], ["--data", sampled / "data.csv"], ["--degrees", deg, "--literal"]):
            out = tmp_path / "de.csv"
            assert run("de", "--model", tmp_path / "m.json", *args, "--iters", 2, "--pop", 500,
                       "--out", out) == 0
            assert len(out.read_text().splitlines()) == 1 + 3 * 4

    def test_de_bad_degrees(self, tmp_path):
        deg = tmp_path / "deg.json"
        deg.write_text("{}")
        cli.save_model(cli.ev.reference_model(), tmp_path / "m.json")
        assert run("de", "--model", tmp_path / "m.json", "--degrees", deg) == 3


class TestRuns:
    def test_run_replay_thread_independent(self, tmp_path):
        cfg = write_config(tmp_path / "exp.toml")
        assert run("run", cfg, "--threads", 2, "--out", tmp_path / "a") == 0
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert set(manifest["outputs"]) == {"sweep.csv", "pivot.csv", "cells.csv", "model.json"}
        assert run("replay", tmp_path / "a" / "manifest.json", "--threads", 1, "--out", tmp_path / "b") == 0
        for name in manifest["outputs"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_replay_detects_change(self, tmp_path):
        cfg = write_config(tmp_path / "exp.toml", densities=[2], seeds=[0], algorithms=["baseline"])
        assert run("run", cfg, "--out", tmp_path / "a") == 0
        path = tmp_path / "a" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["outputs"]["sweep.csv"] = "0" * 64
        path.write_text(json.dumps(manifest))
        assert run("replay", path, "--out", tmp_path / "b") == 1

    def test_train_mode(self, sampled, tmp_path):
        cfg = write_config(tmp_path / "exp.toml", mode="train", preset="", data=str(sampled / "data.csv"),
                           alg="em", validation=30)
        assert run("run", cfg, "--set", "em_max_iters=15", "--out", tmp_path / "a") == 0
        assert run("replay", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == 0
        metrics = (tmp_path / "a" / "metrics.csv").read_text().splitlines()
        assert metrics[1].startswith("em,")

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_config(tmp_path / "exp.toml", densities=[2], seeds=[0], algorithms=["baseline"])
        run("run", cfg, "--out", tmp_path / "a")
        run("run", cfg, "--seed", 5, "--out", tmp_path / "b")
        assert (tmp_path / "a" / "sweep.csv").read_bytes() != (tmp_path / "b" / "sweep.csv").read_bytes()

    def test_exit_codes(self, tmp_path):
        assert run("run", tmp_path / "missing.toml") == 2
        assert run("run", write_config(tmp_path / "x.toml", colour="red")) == 2
        assert run("run", write_config(tmp_path / "y.toml", data="nope.csv")) == 3
        assert run("sweep", "--threads", 0) == 2

    def test_override_parsing(self):
        assert cli.parse_override("densities=[1, 2]") == ("densities", [1, 2])
        assert cli.parse_override("alg=em") == ("alg", "em")

    def test_output_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert run("tree", "--users", 100, "--movies", 100, "--d-max", 3, "--depth", 1, "--delta", 0.1) == 0
        cfg = write_config(tmp_path / "exp.toml", densities=[2], seeds=[0], algorithms=["baseline"])
        assert run("run", cfg) == 0
        assert (tmp_path / "env" / "manifest.json").exists()


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "fgcf", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == cli.__version__
