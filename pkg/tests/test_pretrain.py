import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minichess_ppo.engine import Board, Color, initial_board, mirror
from minichess_ppo.net import NetConfig, init_params
from minichess_ppo.pretrain import (
    LabeledPosition, PositionDataset, build_dataset, collect_games, evaluate_white, label_positions,
    negamax, pretrain_value, read_dataset, read_game_log, replay_positions, split_by_game,
    unique_positions, warm_start, write_dataset, write_game_log,
)
from conftest import random_positions
from oracles import minimax_white

SMALL = NetConfig(channels=8, hidden=16, dropout=0.0)


@pytest.fixture(scope="module")
def games():
    return collect_games(40, seed=2)


def test_collect_games(games, tmp_path):
    assert len(games) == 40
    assert all(g["status"] != "ongoing" for g in games)
    assert [g["game_id"] for g in games] == list(range(40))
    assert collect_games(40, seed=2) == games
    assert collect_games(40, seed=3) != games
    path = write_game_log(games, tmp_path / "g.jsonl")
    assert read_game_log(path) == games
    with pytest.raises(ValueError):
        collect_games(0, seed=0)


def test_replay_positions(games):
    for g in games[:5]:
        pos = replay_positions(g)
        assert len(pos) == g["length"] == len(g["moves"])
        assert pos[0][0] == initial_board()


def test_depth_zero_initial_is_zero():
    assert evaluate_white(initial_board(), 0) == 0.0


def test_hanging_queen():
    # material is level; the knight on b1 takes the queen on c3
    b = Board.from_text("k...p\nr....\n..Q..\n.....\n.n..K\nb 4")
    assert evaluate_white(b, 0) == 0.0
    assert evaluate_white(b, 1) <= -0.9


def test_king_capture_scores_sixty():
    b = Board.from_text("....k\n....Q\n.....\n.....\nK....\nw 0")
    assert evaluate_white(b, 1) == 60.0
    assert evaluate_white(mirror(b), 1) == -60.0


def test_negamax_matches_exhaustive_minimax():
    for b in random_positions(100, seed=11):
        for depth in (0, 1, 2):
            assert evaluate_white(b, depth) == pytest.approx(
                minimax_white(b.grid, int(b.side_to_move), depth, b.half_move_count), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5000), st.integers(0, 40), st.integers(0, 2))
def test_negamax_antisymmetry(seed, ply, depth):
    b = random_positions(ply + 1, seed)[-1]
    assert negamax(b, depth) == negamax(mirror(b), depth)
    assert evaluate_white(b, depth) == -evaluate_white(mirror(b), depth)


def test_labels_bounded_and_round_trip(games, tmp_path):
    pos = label_positions(games[:5], depth=1)
    assert len(pos) == sum(g["length"] for g in games[:5])
    assert all(abs(p.eval) <= 60 for p in pos)
    path = write_dataset(pos, tmp_path / "d.jsonl")
    back = read_dataset(path)
    assert [(p.board, p.eval, p.game_id, p.ply) for p in back] == [(p.board, p.eval, p.game_id, p.ply) for p in pos]


def test_build_dataset_dedup_filter_cap(games):
    items = unique_positions(games)
    assert len({b for b, _, _ in items}) == len(items)
    pos = build_dataset(games, depth=1, max_positions=50, seed=0)
    assert len(pos) == 50
    assert all(p.board.side_to_move == Color.WHITE for p in pos)
    assert [p.board for p in build_dataset(games, 1, 50, seed=0, workers=2)] == [p.board for p in pos]
    with pytest.raises(ValueError):
        build_dataset(games, depth=-1)


def test_split_by_game(games):
    pos = label_positions(games[:20], depth=0)
    ds = split_by_game(pos, 0.1, seed=4)
    assert {p.game_id for p in ds.train}.isdisjoint({p.game_id for p in ds.validation})
    assert len(ds.train) + len(ds.validation) == len(pos)
    assert len({p.game_id for p in ds.validation}) == 2
    again = split_by_game(pos, 0.1, seed=4)
    assert [p.ply for p in again.validation] == [p.ply for p in ds.validation]


def _toy(n=64, seed=0, label=None):
    boards = random_positions(n, seed)
    evals = [0.0] * n if label == 0 else [float(np.tanh(i / 10)) for i in range(n)]
    pos = [LabeledPosition(b, e, i // 8, i % 8) for i, (b, e) in enumerate(zip(boards, evals))]
    return split_by_game(pos, 0.25, seed)


def test_zero_labels_loss_decreases():
    ds = _toy(label=0)
    net, curves = pretrain_value(init_params(SMALL, 0), ds, epochs=4, lr=1e-3, batch_size=16, seed=0)
    losses = [c["value_loss"] for c in curves]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_policy_head_frozen():
    ds = _toy()
    net0 = init_params(SMALL, 1)
    net, _ = pretrain_value(net0.copy(), ds, epochs=2, lr=1e-3, batch_size=16, seed=0)
    assert np.array_equal(net.params["policy.w"], net0.params["policy.w"])
    assert not np.array_equal(net.params["value.w"], net0.params["value.w"])
    net, _ = pretrain_value(net0.copy(), ds, epochs=1, lr=1e-3, batch_size=16, seed=0, freeze_policy_head=False)
    assert not np.array_equal(net.params["conv1.w"], net0.params["conv1.w"])


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        pretrain_value(init_params(SMALL, 0), PositionDataset([], [], 0.1, 0))


def test_warm_start():
    net = init_params(SMALL, 0)
    ws = warm_start(net, seed=7)
    assert np.array_equal(ws.params["value.w"], net.params["value.w"])
    assert np.array_equal(ws.params["conv2.w"], net.params["conv2.w"])
    assert not np.array_equal(ws.params["policy.w"], net.params["policy.w"])


@pytest.mark.slow
def test_memorizes_100_positions():
    # capacity sanity run: full batch, no dropout, cosine-annealed Adam
    positions = build_dataset(collect_games(20, seed=1), depth=2, max_positions=100, seed=0)
    assert len(positions) == 100
    ds = split_by_game(positions, 0.0, seed=0)
    net = init_params(NetConfig(dropout=0.0), 0)
    _, curves = pretrain_value(net, ds, epochs=5000, lr=3e-3, batch_size=100, seed=0, schedule="cosine")
    assert curves[-1]["value_loss"] < 1e-3
