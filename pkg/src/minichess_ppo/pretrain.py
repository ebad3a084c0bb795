"""Offline value pretraining: collect games, label positions, fit the value head.

Labels come from a fixed-depth negamax over material (scaled by 1/1000);
terminal nodes score +-60 for a king capture and 0 for a draw.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .encoding import ACTION_TABLE, PLANE_SCALE, board_plane
from .engine import (
    Board,
    Cause,
    Color,
    apply_move_unchecked,
    initial_board,
    legal_moves,
    material_score,
)
from .env import Game, agent_from_spec, episode_rng, play_games
from .net import NetworkParams, backward, forward, init_params
from .ppo import Adam

log = logging.getLogger(__name__)

WIN_SCORE = 60.0
LABEL_CLAMP = 60.0


@dataclass
class LabeledPosition:
    board: Board
    eval: float  # white's perspective, scaled points
    game_id: int
    ply: int

    def to_json(self) -> str:
        return json.dumps({"board": self.board.to_text(), "eval": self.eval,
                           "game_id": self.game_id, "ply": self.ply})

    @classmethod
    def from_json(cls, line: str) -> "LabeledPosition":
        d = json.loads(line)
        return cls(Board.from_text(d["board"]), float(d["eval"]), int(d["game_id"]), int(d["ply"]))


@dataclass
class PositionDataset:
    train: list
    validation: list
    split_ratio: float
    seed: int


# -- game collection ---------------------------------------------------------


def collect_games(count: int, seed: int, white_spec=None, black_spec=None, block: int = 64) -> list[dict]:
    """Play ``count`` complete games; returns episode-log dicts with a ``game_id``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    white = agent_from_spec(white_spec, deterministic=False)
    black = agent_from_spec(black_spec, deterministic=False)
    logs = []
    for start in range(0, count, block):
        ids = range(start, min(start + block, count))
        games = [Game(episode_rng(seed, i)) for i in ids]
        for gid, rec in zip(ids, play_games(games, white, black)):
            logs.append(json.loads(rec.to_log_line(gid)))
    return logs


def write_game_log(logs: Iterable[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in logs:
            fh.write(json.dumps(rec) + "\n")
    return path


def read_game_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay_positions(game: dict) -> list[tuple[Board, int]]:
    """Every position in which a move was made, with its ply."""
    b = initial_board()
    out = []
    for ply, action in enumerate(game["moves"]):
        out.append((b, ply))
        b, _, _ = apply_move_unchecked(b, ACTION_TABLE.decode(action, b))
    return out


# -- labelling ---------------------------------------------------------------


def _capture_first(moves, grid):
    return sorted(moves, key=lambda m: -abs(grid[m.to_sq]))


def negamax(b: Board, depth: int, alpha: float = -math.inf, beta: float = math.inf) -> float:
    """Score of ``b`` for the side to move, searched ``depth`` plies with alpha-beta."""
    side = b.side_to_move
    if depth == 0:
        return material_score(b, side) / PLANE_SCALE
    moves = legal_moves(b)
    if not moves:
        return 0.0
    best = -math.inf
    for m in _capture_first(moves, b.grid):
        nb, status, _ = apply_move_unchecked(b, m)
        if status.is_terminal:
            score = WIN_SCORE if status.cause is Cause.KING_CAPTURED else 0.0
        else:
            score = -negamax(nb, depth - 1, -beta, -alpha)
        if score > best:
            best = score
            if best > alpha:
                alpha = best
                if alpha >= beta:
                    break
    return best


def evaluate_white(b: Board, depth: int) -> float:
    score = negamax(b, depth)
    return score if b.side_to_move == Color.WHITE else -score


def unique_positions(games: Iterable[dict]) -> list[tuple[Board, int, int]]:
    """(board, game_id, ply) for the first occurrence of every distinct position."""
    seen = set()
    out = []
    for game in games:
        gid = int(game["game_id"])
        for board, ply in replay_positions(game):
            if board not in seen:
                seen.add(board)
                out.append((board, gid, ply))
    return out


def _label_chunk(args):
    items, depth = args
    return [
        LabeledPosition(b, max(-LABEL_CLAMP, min(LABEL_CLAMP, evaluate_white(b, depth))), gid, ply)
        for b, gid, ply in items
    ]


def label_boards(items: list, depth: int = 2, workers: int = 1, chunk: int = 2048) -> list[LabeledPosition]:
    """Label ``(board, game_id, ply)`` triples; output order does not depend on ``workers``."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    jobs = [(items[s:s + chunk], depth) for s in range(0, len(items), chunk)]
    if workers > 1 and len(jobs) > 1:
        with get_context("fork").Pool(workers) as pool:
            parts = pool.map(_label_chunk, jobs)
    else:
        parts = [_label_chunk(j) for j in jobs]
    return [p for part in parts for p in part]


def label_positions(games: Iterable[dict], depth: int = 2) -> list[LabeledPosition]:
    """Label every position of every game (duplicates kept)."""
    items = [(b, int(g["game_id"]), ply) for g in games for b, ply in replay_positions(g)]
    return label_boards(items, depth)


def build_dataset(games: list[dict], depth: int = 2, max_positions: Optional[int] = None,
                  seed: int = 0, workers: int = 1, side_to_move: Optional[Color] = Color.WHITE
                  ) -> list[LabeledPosition]:
    """Distinct positions, subsampled to ``max_positions`` (kept in game order), then labelled.

    The observation plane carries no side-to-move channel, so by default only
    positions where ``side_to_move`` is on move are kept: those are the states
    a value head of that colour is asked about during RL.
    """
    items = unique_positions(games)
    if side_to_move is not None:
        items = [it for it in items if it[0].side_to_move == side_to_move]
    if max_positions is not None and len(items) > max_positions:
        keep = np.sort(np.random.default_rng(seed).choice(len(items), max_positions, replace=False))
        items = [items[i] for i in keep]
    return label_boards(items, depth, workers)


def write_dataset(positions: Iterable[LabeledPosition], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for p in positions:
            fh.write(p.to_json() + "\n")
    return path


def read_dataset(path) -> list[LabeledPosition]:
    with open(path) as fh:
        return [LabeledPosition.from_json(line) for line in fh if line.strip()]


def split_by_game(positions: list[LabeledPosition], validation_fraction: float = 0.1,
                  seed: int = 0) -> PositionDataset:
    """Split so that no game contributes to both sides."""
    ids = sorted({p.game_id for p in positions})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_val = int(round(validation_fraction * len(ids)))
    if len(ids) > 1:
        n_val = min(max(n_val, 1), len(ids) - 1)
    val_ids = {ids[i] for i in order[:n_val]}
    train = [p for p in positions if p.game_id not in val_ids]
    val = [p for p in positions if p.game_id in val_ids]
    return PositionDataset(train, val, validation_fraction, seed)


# -- value fitting -----------------------------------------------------------


def _arrays(positions, color: Color):
    planes = np.stack([board_plane(p.board) for p in positions]) if positions else np.zeros((0, 5, 5))
    sign = 1.0 if color == Color.WHITE else -1.0
    targets = np.array([sign * p.eval for p in positions])
    return planes, targets


def value_mse(net: NetworkParams, planes: np.ndarray, targets: np.ndarray, batch: int = 1024) -> float:
    if len(targets) == 0:
        return float("nan")
    total = 0.0
    for s in range(0, len(targets), batch):
        v = forward(net, planes[s:s + batch], mode="eval").value
        total += float(np.sum((v - targets[s:s + batch]) ** 2))
    return total / len(targets)


def pretrain_value(
    net: NetworkParams,
    dataset: PositionDataset,
    epochs: int = 10,
    lr: float = 1e-3,
    batch_size: int = 256,
    seed: int = 0,
    color: Color = Color.WHITE,
    freeze_policy_head: bool = True,
    schedule: str = "constant",
) -> tuple[NetworkParams, list[dict]]:
    """Fit the value head (and shared trunk) to the labels by mean squared error.

    Returns the parameters with the best validation loss (train loss when
    there is no validation split) and one row per epoch with eval-mode train
    and validation MSE.  ``schedule="cosine"`` anneals the rate to 0.
    """
    if not dataset.train:
        raise ValueError("empty training split")
    if schedule not in ("constant", "cosine"):
        raise ValueError(f"unknown schedule {schedule!r}")
    rng = np.random.default_rng(seed)
    train_x, train_y = _arrays(dataset.train, color)
    val_x, val_y = _arrays(dataset.validation, color)
    opt = Adam(lr)
    best, best_loss = net.copy(), math.inf
    curves = []
    n = len(train_y)
    for epoch in range(1, epochs + 1):
        if schedule == "cosine":
            opt.lr = 0.5 * lr * (1.0 + math.cos(math.pi * (epoch - 1) / epochs))
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            if len(idx) < 2:
                continue  # batch statistics need two samples
            out = forward(net, train_x[idx], mode="train", rng=rng)
            dvalue = 2.0 * (out.value - train_y[idx]) / len(idx)
            grads = backward(net, out.cache, dvalue=dvalue)
            if freeze_policy_head:
                grads.pop("policy.w")
                grads.pop("policy.b")
            opt.step(net.params, grads)
        train_loss = value_mse(net, train_x, train_y)
        val_loss = value_mse(net, val_x, val_y)
        if not math.isfinite(train_loss):
            raise FloatingPointError(f"pretraining diverged at epoch {epoch}")
        curves.append({"iteration": epoch, "value_loss": train_loss, "val_loss": val_loss})
        log.info("pretrain epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        score = val_loss if math.isfinite(val_loss) else train_loss
        if score < best_loss:
            best, best_loss = net.copy(), score
    return best, curves


def warm_start(pretrained: NetworkParams, seed: int) -> NetworkParams:
    """Pretrained trunk and value head with a freshly initialized policy head."""
    net = pretrained.copy()
    fresh = init_params(net.config, seed)
    net.params["policy.w"] = fresh.params["policy.w"]
    net.params["policy.b"] = fresh.params["policy.b"]
    return net
