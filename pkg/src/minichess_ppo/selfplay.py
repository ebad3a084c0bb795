"""Iterative policy improvement between a white and a black network.

Iteration k trains white k from white k-1 against the frozen, epsilon-mixed
black k-1, then black k from black k-1 against the frozen white k-1.  Every
finished training is persisted and appended to the manifest, so an
interrupted league resumes where it stopped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .arena import run_match
from .engine import Color
from .env import OpponentSpec
from .net import Checkpoint, NetConfig, init_params, load_checkpoint, save_checkpoint
from .ppo import PpoConfig, train_iteration, write_metrics

log = logging.getLogger(__name__)

MANIFEST = "league.manifest"


@dataclass
class LeagueEntry:
    iteration: int
    color: str
    checkpoint: str
    opponent: Optional[str]
    epsilon: Optional[float]
    winrate: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class LeagueState:
    workdir: Path
    entries: list = field(default_factory=list)

    @property
    def manifest_path(self) -> Path:
        return self.workdir / MANIFEST

    def checkpoint_path(self, color: Color, iteration: int) -> Path:
        return self.workdir / "checkpoints" / f"{color.name.lower()}_{iteration:03d}.ckpt"

    def entry(self, color: Color, iteration: int) -> Optional[LeagueEntry]:
        for e in self.entries:
            if e.color == color.name.lower() and e.iteration == iteration:
                return e
        return None

    @property
    def iteration(self) -> int:
        """Highest iteration finished by both colours."""
        k = 0
        while self.entry(Color.WHITE, k + 1) and self.entry(Color.BLACK, k + 1):
            k += 1
        return k

    def winrates(self, color: Color) -> list[tuple[int, float]]:
        name = color.name.lower()
        return sorted((e.iteration, e.winrate) for e in self.entries if e.color == name and e.iteration > 0)

    def append(self, entry: LeagueEntry):
        self.entries.append(entry)
        with open(self.manifest_path, "a") as fh:
            fh.write(entry.to_json() + "\n")


def load_league(workdir) -> LeagueState:
    workdir = Path(workdir)
    state = LeagueState(workdir)
    if state.manifest_path.exists():
        with open(state.manifest_path) as fh:
            state.entries = [LeagueEntry(**json.loads(line)) for line in fh if line.strip()]
    return state


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _evaluate(path: Path, color: Color, games: int, seed: int, workers: int) -> float:
    ckpt = load_checkpoint(path)
    if color == Color.WHITE:
        return run_match(ckpt, "random", games, seed, workers).white_winrate
    return run_match("random", ckpt, games, seed, workers).black_winrate


def init_league(workdir, net_config: NetConfig, seed: int, arena_games: int, arena_seed: int,
                workers: int = 1) -> LeagueState:
    """Create random-weight white/black 0 and record the baseline evaluation (idempotent)."""
    state = load_league(workdir)
    (state.workdir / "checkpoints").mkdir(parents=True, exist_ok=True)
    if state.entry(Color.WHITE, 0) is not None:
        return state
    for color in (Color.WHITE, Color.BLACK):
        net = init_params(net_config, _derived_seed(seed, 0, int(color == Color.BLACK)))
        meta = {"color": color.name.lower(), "iteration": 0, "phase": "init", "seed": seed}
        save_checkpoint(Checkpoint(net, meta), state.checkpoint_path(color, 0))
    path = state.checkpoint_path(Color.WHITE, 0)
    wr = _evaluate(path, Color.WHITE, arena_games, arena_seed, workers)
    state.append(LeagueEntry(0, "white", str(path.relative_to(state.workdir)), None, None, wr, seed))
    return state


def improve(state: LeagueState, config: PpoConfig, n_iterations: int, epsilon: float, seed: int,
            arena_games: int, arena_seed: int, workers: int = 1) -> LeagueState:
    """Run iterations 1..n, skipping any colour/iteration already in the manifest."""
    for k in range(1, n_iterations + 1):
        for color in (Color.WHITE, Color.BLACK):
            if state.entry(color, k) is not None:
                continue
            own_prev = state.checkpoint_path(color, k - 1)
            opp_prev = state.checkpoint_path(color.opponent, k - 1)
            opponent_ckpt = load_checkpoint(opp_prev)
            net = load_checkpoint(own_prev).net
            train_seed = _derived_seed(seed, k, int(color == Color.BLACK))
            net, rows = train_iteration(
                net, OpponentSpec(opponent_ckpt, epsilon), config, train_seed,
                learner_color=color, iteration=k,
            )
            write_metrics(rows, state.workdir / "metrics.csv", phase=f"selfplay-{color.name.lower()}")
            path = state.checkpoint_path(color, k)
            meta = {
                "color": color.name.lower(),
                "iteration": k,
                "phase": "selfplay",
                "seed": train_seed,
                "opponent": str(opp_prev.relative_to(state.workdir)),
                "epsilon": epsilon,
                "steps": config.iteration_steps,
            }
            save_checkpoint(Checkpoint(net, meta), path)
            wr = _evaluate(path, color, arena_games, arena_seed, workers)
            log.info("iteration %d %s win-rate vs random %.3f", k, color.name.lower(), wr)
            state.append(LeagueEntry(
                k, color.name.lower(), str(path.relative_to(state.workdir)),
                str(opp_prev.relative_to(state.workdir)), epsilon, wr, train_seed,
            ))
    return state


def _argmax_latest(series: list[tuple[int, float]]) -> int:
    if not series:
        raise ValueError("no completed iteration to choose from")
    best_iter, best = series[0]
    for it, wr in series:
        if wr >= best:
            best_iter, best = it, wr
    return best_iter


def select_champion(state: LeagueState) -> tuple[LeagueEntry, LeagueEntry]:
    """Highest arena win-rate per colour; ties go to the later iteration."""
    white = state.entry(Color.WHITE, _argmax_latest(state.winrates(Color.WHITE)))
    black = state.entry(Color.BLACK, _argmax_latest(state.winrates(Color.BLACK)))
    return white, black
