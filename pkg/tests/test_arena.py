import csv
import math

import numpy as np
import pytest

from minichess_ppo.arena import REPORT_COLUMNS, append_report, ci95_halfwidth, run_match, winrate_from_reward
from minichess_ppo.env import Game, NetAgent, episode_rng, play_games
from minichess_ppo.net import Checkpoint, NetConfig, init_params

SMALL = NetConfig(channels=8, hidden=16, dropout=0.0)


def test_winrate_from_reward():
    assert winrate_from_reward(60) == 1.0
    assert winrate_from_reward(0) == 0.5
    assert winrate_from_reward(-60) == 0.0
    assert winrate_from_reward(500) == 1.0 and winrate_from_reward(-500) == 0.0


def test_random_match_counts_and_consistency():
    res = run_match("random", "random", 300, seed=1)
    assert res.white_wins + res.black_wins + res.draws == 300
    assert res.white_winrate == res.white_wins / 300
    assert 0 <= res.white_winrate <= 1
    assert res.ci95 == pytest.approx(1.96 * math.sqrt(res.white_winrate * (1 - res.white_winrate) / 300))
    assert res.draws / res.games < 0.05
    assert abs(winrate_from_reward(res.mean_episode_reward) - res.white_winrate) < 0.05


def test_ci_formula():
    assert ci95_halfwidth(0.5, 100) == pytest.approx(0.098)
    assert ci95_halfwidth(1.0, 10) == 0.0


def test_same_seed_same_result_any_worker_count():
    ck = Checkpoint(init_params(SMALL, 0), {})
    a = run_match(ck, "random", 150, seed=3, workers=1)
    b = run_match(ck, "random", 150, seed=3, workers=2)
    c = run_match(ck, "random", 150, seed=3, workers=1)
    assert a == b == c


def test_deterministic_self_match_repeats_one_game():
    net = init_params(SMALL, 2)
    games = [Game(episode_rng(0, i)) for i in range(5)]
    records = play_games(games, NetAgent(net, True), NetAgent(net, True))
    assert all(r.actions == records[0].actions for r in records)
    ck = Checkpoint(net, {})
    res = run_match(ck, ck, 5, seed=9)
    assert max(res.white_wins, res.black_wins, res.draws) == 5


def test_invalid_n():
    with pytest.raises(ValueError):
        run_match("random", "random", 0, seed=0)


def test_report_rows(tmp_path):
    res = run_match("random", "random", 20, seed=0)
    path = tmp_path / "results.csv"
    for k in range(3):
        append_report(path, res.report_row("random", "random", 0))
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == k + 1
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert int(rows[0]["wins"]) + int(rows[0]["draws"]) + int(rows[0]["losses"]) == 20
