"""Episode mechanics: agents, shaped rewards and lockstep game stepping.

A side's transition opens when it moves and closes the next time it is to
move (or when the game ends).  Its reward is the change in that side's
material difference across the window, so the opponent's reply is folded in
and per-episode rewards telescope to the final material difference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .encoding import (
    ACTION_TABLE,
    PLANE_SCALE,
    Observation,
    mask_policy,
    masked_log_softmax,
    observe,
)
from .engine import (
    ONGOING,
    Board,
    Color,
    GameStatus,
    apply_move_unchecked,
    initial_board,
    material_score,
)
from .net import Checkpoint, NetworkParams, forward


def shaped_reward(prev: Board, nxt: Board, mover: Color) -> float:
    return (material_score(nxt, mover) - material_score(prev, mover)) / PLANE_SCALE


def episode_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


# -- agents ------------------------------------------------------------------


@dataclass
class ActOutput:
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray


class Agent(Protocol):
    def act(self, observations: Sequence[Observation], rngs: Sequence[np.random.Generator]) -> ActOutput:
        ...


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    # guard against landing on a trailing zero-probability slot
    while probs[a] == 0.0:
        a -= 1
    return a


def uniform_legal(mask: np.ndarray, rng: np.random.Generator) -> int:
    legal = np.flatnonzero(mask)
    return int(legal[rng.integers(len(legal))])


class RandomAgent:
    """Uniform over legal moves."""

    def act(self, observations, rngs) -> ActOutput:
        actions = np.array([uniform_legal(o.mask, r) for o, r in zip(observations, rngs)], dtype=np.int64)
        log_probs = np.array([-np.log(np.count_nonzero(o.mask)) for o in observations])
        return ActOutput(actions, log_probs, np.zeros(len(observations)))

    def __repr__(self) -> str:
        return "RandomAgent()"


class NetAgent:
    """Masked policy from a network; samples when ``deterministic`` is false."""

    def __init__(self, net: NetworkParams, deterministic: bool = False):
        self.net = net
        self.deterministic = deterministic

    def act(self, observations, rngs) -> ActOutput:
        planes = np.stack([o.plane for o in observations])
        masks = np.stack([o.mask for o in observations])
        out = forward(self.net, planes, mode="eval")
        logits = out.policy_logits.astype(np.float64)
        logp = masked_log_softmax(logits, masks)
        if self.deterministic:
            actions = np.argmax(np.where(masks, logits, -np.inf), axis=1)
        else:
            probs = mask_policy(logits, masks)
            actions = np.array([_sample(p, r) for p, r in zip(probs, rngs)], dtype=np.int64)
        idx = np.arange(len(observations))
        return ActOutput(actions, logp[idx, actions], out.value.astype(np.float64))


def epsilon_mix_action(policy_output: np.ndarray, mask: np.ndarray, epsilon: float,
                       rng: np.random.Generator) -> int:
    """With probability ``epsilon`` a uniform legal move, else the masked argmax."""
    if not mask.any():
        raise ValueError("no legal action")
    if rng.random() < epsilon:
        return uniform_legal(mask, rng)
    return int(np.argmax(np.where(mask, policy_output, -np.inf)))


class EpsilonAgent:
    """Frozen network playing argmax, replaced by a random legal move with probability epsilon."""

    def __init__(self, net: NetworkParams, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        self.net = net
        self.epsilon = epsilon

    def act(self, observations, rngs) -> ActOutput:
        planes = np.stack([o.plane for o in observations])
        masks = np.stack([o.mask for o in observations])
        out = forward(self.net, planes, mode="eval")
        logits = out.policy_logits.astype(np.float64)
        actions = np.array(
            [epsilon_mix_action(lg, m, self.epsilon, r) for lg, m, r in zip(logits, masks, rngs)],
            dtype=np.int64,
        )
        logp = masked_log_softmax(logits, masks)[np.arange(len(actions)), actions]
        return ActOutput(actions, logp, out.value.astype(np.float64))


@dataclass
class OpponentSpec:
    """A frozen checkpoint mixed with random moves, or the random agent (``policy=None``)."""

    policy: Optional[Checkpoint] = None
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")

    def make_agent(self) -> Agent:
        if self.policy is None or self.epsilon >= 1.0:
            return RandomAgent()
        return EpsilonAgent(self.policy.net, self.epsilon)


# -- episodes ----------------------------------------------------------------


@dataclass
class Transition:
    obs: Observation
    action: int
    log_prob: float
    value_est: float
    reward: float = 0.0
    done: bool = False


@dataclass
class EpisodeRecord:
    transitions: dict = field(default_factory=lambda: {Color.WHITE: [], Color.BLACK: []})
    status: GameStatus = ONGOING
    length: int = 0
    actions: list = field(default_factory=list)
    final_board: Optional[Board] = None

    def total_reward(self, color: Color) -> float:
        return sum(t.reward for t in self.transitions[color])

    def to_log_line(self, game_id: Optional[int] = None) -> str:
        rec = {
            "moves": [int(a) for a in self.actions],
            "rewards": {
                "white": [t.reward for t in self.transitions[Color.WHITE]],
                "black": [t.reward for t in self.transitions[Color.BLACK]],
            },
            "status": self.status.status.value,
            "cause": self.status.cause.value if self.status.cause else None,
            "length": self.length,
        }
        if game_id is not None:
            rec = {"game_id": game_id, **rec}
        return json.dumps(rec)


class Game:
    """One game in progress plus the transitions of the recorded colours."""

    def __init__(self, rng: np.random.Generator, record: Sequence[Color] = (Color.WHITE, Color.BLACK),
                 board: Optional[Board] = None):
        self.board = board or initial_board()
        self.rng = rng
        self.record = tuple(record)
        self.status = ONGOING
        self.episode = EpisodeRecord()
        self._open: dict = {}

    @property
    def done(self) -> bool:
        return self.status.is_terminal

    def observation(self) -> Observation:
        return observe(self.board, self.board.side_to_move)

    def play(self, obs: Observation, action: int, log_prob: float = 0.0, value: float = 0.0) -> list:
        """Apply ``action`` for the side to move; return transitions closed by it."""
        mover = self.board.side_to_move
        if not obs.mask[action]:
            raise ValueError(f"action {action} is not legal here")
        move = ACTION_TABLE.decode(int(action), self.board)
        if mover in self.record:
            t = Transition(obs, int(action), float(log_prob), float(value))
            self.episode.transitions[mover].append(t)
            self._open[mover] = (t, material_score(self.board, mover))
        self.board, self.status, _ = apply_move_unchecked(self.board, move)
        self.episode.actions.append(int(action))
        closed = []
        if self.status.is_terminal:
            for color in list(self._open):
                closed.append(self._close(color, done=True))
            self.episode.status = self.status
            self.episode.length = self.board.half_move_count
            self.episode.final_board = self.board
        elif self.board.side_to_move in self._open:
            closed.append(self._close(self.board.side_to_move, done=False))
        return closed

    def _close(self, color: Color, done: bool) -> Transition:
        t, before = self._open.pop(color)
        t.reward = (material_score(self.board, color) - before) / PLANE_SCALE
        t.done = done
        return t


def step_games(games: Sequence[Game], agent: Agent) -> list:
    """Play one half-move in every game with ``agent``; all must share the side to move."""
    if not games:
        return []
    obs = [g.observation() for g in games]
    out = agent.act(obs, [g.rng for g in games])
    closed = []
    for g, o, a, lp, v in zip(games, obs, out.actions, out.log_probs, out.values):
        closed.extend(g.play(o, int(a), lp, v))
    return closed


def play_games(games: Sequence[Game], white: Agent, black: Agent) -> list[EpisodeRecord]:
    """Run all games to completion, batching each side's moves across games."""
    agents = {Color.WHITE: white, Color.BLACK: black}
    active = [g for g in games if not g.done]
    while active:
        for color in (Color.WHITE, Color.BLACK):
            step_games([g for g in active if g.board.side_to_move == color and not g.done], agents[color])
        active = [g for g in active if not g.done]
    return [g.episode for g in games]


def play_episode_single(learner: Agent, opponent: OpponentSpec | Agent, learner_color: Color,
                        rng: np.random.Generator) -> EpisodeRecord:
    """Learner against a fixed opponent; only the learner's transitions are recorded."""
    opp = opponent.make_agent() if isinstance(opponent, OpponentSpec) else opponent
    game = Game(rng, record=(learner_color,))
    agents = {learner_color: learner, learner_color.opponent: opp}
    (record,) = play_games([game], agents[Color.WHITE], agents[Color.BLACK])
    return record


def play_episode_multi(white: Agent, black: Agent, rng: np.random.Generator) -> EpisodeRecord:
    """Both sides record transitions; per-episode rewards are zero-sum."""
    (record,) = play_games([Game(rng)], white, black)
    return record


def agent_from_spec(spec, deterministic: bool = True) -> Agent:
    """``None``/"random" -> RandomAgent, Checkpoint/NetworkParams -> NetAgent, agents pass through."""
    if spec is None or (isinstance(spec, str) and spec == "random"):
        return RandomAgent()
    if isinstance(spec, Checkpoint):
        return NetAgent(spec.net, deterministic)
    if isinstance(spec, NetworkParams):
        return NetAgent(spec, deterministic)
    if isinstance(spec, OpponentSpec):
        return spec.make_agent()
    return spec
