import csv
import json
import time

import numpy as np
import pytest
import yaml

from minichess_ppo.cli import main
from minichess_ppo.config import PRESETS, RunConfig, from_dict, load_config, parse_override
from minichess_ppo.net import init_params, load_checkpoint


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_perft(capsys):
    code, out, _ = run(capsys, "perft", 3)
    assert code == 0 and out.split() == ["7", "53", "510"]
    assert run(capsys, "perft", 0)[1].split() == ["1"]
    assert run(capsys, "perft", 1)[1].split() == ["7"]


def test_dump_actions(capsys):
    _, out, _ = run(capsys, "dump-actions")
    lines = out.splitlines()
    assert len(lines) == 664 and lines[5] == "5 a1 a2 -"


def test_presets():
    cfg = load_config("single-best")
    assert (cfg.ppo.gamma, cfg.ppo.lam) == (0.3, 1.0)
    assert (cfg.ppo.learning_rate, cfg.ppo.train_batch, cfg.ppo.minibatch, cfg.ppo.entropy_coef) == (1e-5, 1000, 100, 0.0)
    assert cfg.ppo.iteration_steps == 50_000
    sp = load_config("selfplay-league")
    assert (sp.selfplay.epsilon, sp.selfplay.iteration_steps) == (0.5, 25_000)
    assert set(PRESETS) >= {"single-best", "selfplay-league"}


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"ppo": {"gama": 0.3}},
    {"ppo": {"gamma": 2.0}},
    {"ppo": {"train_batch": 1000, "minibatch": 300}},
    {"selfplay": {"epsilon": -0.1}},
    {"arena": {"games": 0}},
    {"workers": 0},
    {"network": {"dropout": 1.0}},
    {"ppo": {"gamma": "high"}},
])
def test_invalid_config_rejected(bad):
    with pytest.raises(ValueError):
        from_dict(bad)


def test_config_round_trip(tmp_path):
    cfg = load_config("selfplay-league", parse_override("ppo.learning_rate=0.001"))
    assert cfg.ppo.learning_rate == 0.001
    path = cfg.dump(tmp_path / "c.yaml")
    assert load_config(str(path)) == cfg
    assert from_dict(yaml.safe_load(path.read_text())) == cfg
    assert load_config() == RunConfig()


def test_bad_override_and_unknown_key_exit_nonzero(capsys):
    code, _, err = run(capsys, "--set", "ppo.bogus=1", "perft", 1)
    assert code != 0 and "bogus" in err
    with pytest.raises(ValueError):
        parse_override("no-equals-sign")


def test_flags_before_or_after_subcommand(tmp_path, capsys):
    for argv in (["--workdir", tmp_path / "a", "evaluate", "--games", 10],
                 ["evaluate", "--workdir", tmp_path / "b", "--games", 10]):
        assert run(capsys, *argv)[0] == 0
    assert (tmp_path / "a" / "results.csv").exists() and (tmp_path / "b" / "results.csv").exists()


def test_evaluate(tmp_path, capsys):
    t = time.time()
    code, out, _ = run(capsys, "--workdir", tmp_path, "evaluate", "--games", 1000)
    assert time.time() - t < 60
    assert code == 0
    wr = float(out.split()[1])
    assert 0 <= wr <= 1
    assert len(rows(tmp_path / "results.csv")) == 1
    run(capsys, "--workdir", tmp_path, "evaluate", "--games", 10)
    assert len(rows(tmp_path / "results.csv")) == 2


def test_evaluate_missing_checkpoint(tmp_path, capsys):
    code, _, err = run(capsys, "--workdir", tmp_path, "evaluate", "--white", tmp_path / "nope.ckpt")
    assert code != 0 and "not found" in err


TINY = ["--set", "network.channels=8", "--set", "network.hidden=16", "--set", "ppo.train_batch=100",
        "--set", "ppo.minibatch=50", "--set", "ppo.iteration_steps=300", "--set", "train.eval_games=20"]


def test_train_single_lr_zero(tmp_path, capsys):
    code, out, _ = run(capsys, "--workdir", tmp_path, "--seed", 4, *TINY, "--set", "ppo.learning_rate=0",
                       "train-single")
    assert code == 0
    ck = load_checkpoint(tmp_path / "checkpoints" / "single_white.ckpt")
    init = init_params(ck.net.config, 4)
    assert all(np.array_equal(ck.net.params[k], init.params[k]) for k in init.params)
    assert len(rows(tmp_path / "metrics.csv")) == 300 // 100
    assert ck.metadata["phase"] == "single" and ck.metadata["seed"] == 4
    assert (tmp_path / "config.yaml").exists()
    assert len(rows(tmp_path / "results.csv")) == 1


def test_train_single_black_and_warm_start(tmp_path, capsys):
    assert run(capsys, "--workdir", tmp_path, *TINY, "--set", "pretrain.games=10", "--set", "pretrain.epochs=1",
               "collect")[0] == 0
    assert run(capsys, "--workdir", tmp_path, *TINY, "--set", "pretrain.games=10", "--set", "pretrain.epochs=1",
               "pretrain")[0] == 0
    pre = tmp_path / "checkpoints" / "pretrained.ckpt"
    code, out, _ = run(capsys, "--workdir", tmp_path, *TINY, "train-single", "--color", "black", "--init", pre)
    assert code == 0 and "winrate" in out
    ck = load_checkpoint(tmp_path / "checkpoints" / "single_black.ckpt")
    assert ck.metadata["color"] == "black"


def test_collect_and_pretrain(tmp_path, capsys):
    args = ["--workdir", tmp_path, *TINY, "--set", "pretrain.games=100", "--set", "pretrain.epochs=2",
            "--set", "pretrain.max_positions=300"]
    assert run(capsys, *args, "collect")[0] == 0
    games = (tmp_path / "logs" / "games.jsonl").read_text().splitlines()
    assert len(games) == 100
    assert sum(len(json.loads(g)["moves"]) for g in games) >= 100
    code, out, _ = run(capsys, *args, "pretrain")
    assert code == 0
    ck = load_checkpoint(tmp_path / "checkpoints" / "pretrained.ckpt")
    assert ck.metadata["phase"] == "pretrain"
    phases = [r["phase"] for r in rows(tmp_path / "metrics.csv")]
    assert phases == ["pretrain", "pretrain"]
    assert len((tmp_path / "logs" / "dataset.jsonl").read_text().splitlines()) == 300


def test_pretrain_errors(tmp_path, capsys):
    code, _, err = run(capsys, "--workdir", tmp_path, "pretrain")
    assert code != 0 and "collect" in err
    (tmp_path / "logs").mkdir(parents=True, exist_ok=True)
    (tmp_path / "logs" / "games.jsonl").write_text("")
    code, _, err = run(capsys, "--workdir", tmp_path, "pretrain")
    assert code != 0 and "empty" in err


SP = [*TINY, "--set", "selfplay.iteration_steps=200", "--set", "selfplay.eval_games=16"]


def test_selfplay_zero_iterations(tmp_path, capsys):
    code, _, _ = run(capsys, "--workdir", tmp_path, *SP, "--set", "selfplay.iterations=0", "selfplay")
    assert code == 0
    assert len((tmp_path / "league.manifest").read_text().splitlines()) == 1


def test_selfplay_resume(tmp_path, capsys):
    full, part = tmp_path / "full", tmp_path / "part"
    assert run(capsys, "--workdir", full, *SP, "--set", "selfplay.iterations=2", "selfplay")[0] == 0
    assert run(capsys, "--workdir", part, *SP, "--set", "selfplay.iterations=1", "selfplay")[0] == 0
    code, out, _ = run(capsys, "--workdir", part, *SP, "--set", "selfplay.iterations=2", "selfplay")
    assert code == 0
    manifest = (full / "league.manifest").read_text()
    assert manifest == (part / "league.manifest").read_text()
    assert len(manifest.splitlines()) == 2 * 2 + 1
    for name in ("champion_white.ckpt", "champion_black.ckpt", "white_002.ckpt", "black_002.ckpt"):
        assert (full / "checkpoints" / name).read_bytes() == (part / "checkpoints" / name).read_bytes()
