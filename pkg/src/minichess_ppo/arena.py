"""Head-to-head matches and win-rate statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .engine import Color, Status
from .env import Game, agent_from_spec, episode_rng, play_games

BLOCK = 64
REPORT_COLUMNS = (
    "white_id", "black_id", "n", "wins", "draws", "losses",
    "winrate", "ci95", "mean_reward", "mean_length", "seed",
)


@dataclass
class ArenaResult:
    games: int
    white_wins: int
    black_wins: int
    draws: int
    white_winrate: float
    mean_episode_reward: float  # white's shaped reward per game
    mean_length: float
    ci95: float

    @property
    def black_winrate(self) -> float:
        return self.black_wins / self.games

    def report_row(self, white_id: str, black_id: str, seed: int) -> dict:
        return {
            "white_id": white_id,
            "black_id": black_id,
            "n": self.games,
            "wins": self.white_wins,
            "draws": self.draws,
            "losses": self.black_wins,
            "winrate": self.white_winrate,
            "ci95": self.ci95,
            "mean_reward": self.mean_episode_reward,
            "mean_length": self.mean_length,
            "seed": seed,
        }


def winrate_from_reward(mean_reward: float) -> float:
    """Win-rate implied by a mean episode reward when king captures dominate."""
    return min(1.0, max(0.0, (mean_reward + 60.0) / 120.0))


def ci95_halfwidth(p: float, n: int) -> float:
    return 1.96 * math.sqrt(p * (1.0 - p) / n)


def _play_block(args):
    white_spec, black_spec, seed, start, stop, deterministic = args
    white = agent_from_spec(white_spec, deterministic)
    black = agent_from_spec(black_spec, deterministic)
    games = [Game(episode_rng(seed, i)) for i in range(start, stop)]
    records = play_games(games, white, black)
    outcome = np.array([{Status.WHITE_WIN: 1, Status.BLACK_WIN: -1}.get(r.status.status, 0) for r in records])
    reward = np.array([r.total_reward(Color.WHITE) for r in records])
    length = np.array([r.length for r in records])
    return outcome, reward, length


def run_match(white_spec, black_spec, n: int, seed: int, workers: int = 1,
              deterministic: bool = True) -> ArenaResult:
    """Play ``n`` independent games; game ``i`` uses ``episode_rng(seed, i)``.

    Specs are ``"random"``/``None``, a Checkpoint, NetworkParams or an agent.
    Network policies act by masked argmax unless ``deterministic`` is false.
    Games run in fixed blocks so results do not depend on ``workers``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    jobs = [(white_spec, black_spec, seed, s, min(s + BLOCK, n), deterministic) for s in range(0, n, BLOCK)]
    if workers > 1:
        with get_context("fork").Pool(workers) as pool:
            parts = pool.map(_play_block, jobs)
    else:
        parts = [_play_block(j) for j in jobs]
    outcome = np.concatenate([p[0] for p in parts])
    reward = np.concatenate([p[1] for p in parts])
    length = np.concatenate([p[2] for p in parts])
    white_wins = int(np.sum(outcome == 1))
    black_wins = int(np.sum(outcome == -1))
    p = white_wins / n
    return ArenaResult(
        games=n,
        white_wins=white_wins,
        black_wins=black_wins,
        draws=n - white_wins - black_wins,
        white_winrate=p,
        mean_episode_reward=float(np.mean(reward)),
        mean_length=float(np.mean(length)),
        ci95=ci95_halfwidth(p, n),
    )


def append_report(path, row: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        if new:
            w.writeheader()
        w.writerow(row)
    return path
