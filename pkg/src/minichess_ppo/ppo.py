"""Rollout collection, GAE and clipped-surrogate PPO updates."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .encoding import masked_log_softmax
from .engine import Color
from .env import EpisodeRecord, Game, NetAgent, OpponentSpec, episode_rng, step_games
from .net import NetworkParams, backward, forward

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "phase", "iteration", "steps", "mean_episode_reward", "mean_episode_length",
    "policy_loss", "value_loss", "entropy", "kl_estimate", "val_loss",
)


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 1e-5
    train_batch: int = 1000
    minibatch: int = 100
    epochs_per_batch: int = 4
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    iteration_steps: int = 50_000
    optimizer: str = "sgd"
    max_grad_norm: Optional[float] = None
    rollout_envs: int = 16

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lam must be in [0, 1]")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be positive")
        if min(self.train_batch, self.minibatch, self.epochs_per_batch, self.iteration_steps,
               self.rollout_envs) < 1:
            raise ValueError("batch sizes, epochs and step counts must be >= 1")
        if self.train_batch % self.minibatch:
            raise ValueError("minibatch must divide train_batch")
        if self.iteration_steps % self.train_batch:
            raise ValueError("train_batch must divide iteration_steps")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        for name in ("learning_rate", "entropy_coef", "value_coef"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def gae_advantages(rewards, values, dones, gamma: float, lam: float, bootstrap_value: float = 0.0):
    """GAE(gamma, lambda) over one time-ordered segment.

    ``values[t]`` estimates the state before step t.  The state after the
    last step is worth ``bootstrap_value`` unless that step is terminal; no
    value flows back across a ``done``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    if not len(values) == len(dones) == n:
        raise ValueError("rewards, values and dones must have equal length")
    adv = np.zeros(n)
    next_value = bootstrap_value
    running = 0.0
    for t in range(n - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


# -- optimizers --------------------------------------------------------------


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict):
        for k, g in grads.items():
            params[k] -= (self.lr * g).astype(params[k].dtype)


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[k] -= update.astype(params[k].dtype)


def make_optimizer(name: str, lr: float):
    return Adam(lr) if name == "adam" else SGD(lr)


def clip_gradients(grads: dict, max_norm: Optional[float]) -> float:
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


# -- rollouts ----------------------------------------------------------------


@dataclass
class RolloutBatch:
    planes: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    episodes: list

    def __len__(self) -> int:
        return len(self.actions)


class RolloutCollector:
    """Steps ``num_envs`` learner-vs-opponent games in lockstep.

    Games persist across calls, so a batch may cut an episode; the cut is
    bootstrapped with the learner's value of the position it faces next.
    Episode ``i`` (in start order) draws from ``episode_rng(seed, i)``.
    """

    def __init__(self, opponent: OpponentSpec, learner_color: Color, seed: int, num_envs: int = 16):
        self.opponent = opponent.make_agent()
        self.learner_color = learner_color
        self.seed = seed
        self.num_envs = num_envs
        self.next_episode = 0
        self.games: list = []
        self._segments: list = []

    def _new_game(self) -> Game:
        g = Game(episode_rng(self.seed, self.next_episode), record=(self.learner_color,))
        self.next_episode += 1
        return g

    def collect(self, net: NetworkParams, n_steps: int, gamma: float, lam: float) -> RolloutBatch:
        learner = NetAgent(net, deterministic=False)
        while len(self.games) < self.num_envs:
            self.games.append(self._new_game())
            self._segments.append([])
        finished_segments = []
        episodes: list[EpisodeRecord] = []
        steps = 0
        while steps < n_steps:
            # only freshly started games can have the opponent to move here
            step_games([g for g in self.games if g.board.side_to_move != self.learner_color], self.opponent)
            chosen = list(range(min(self.num_envs, n_steps - steps)))
            movers = [self.games[i] for i in chosen]
            step_games(movers, learner)
            step_games([g for g in movers if not g.done], self.opponent)
            steps += len(chosen)
            for i in chosen:
                g = self.games[i]
                self._segments[i].append(g.episode.transitions[self.learner_color][-1])
                if g.done:
                    finished_segments.append((self._segments[i], 0.0))
                    episodes.append(g.episode)
                    self.games[i] = self._new_game()
                    self._segments[i] = []

        pending = [(i, seg) for i, seg in enumerate(self._segments) if seg]
        if pending:
            obs = [self.games[i].observation() for i, _ in pending]
            boot = forward(net, np.stack([o.plane for o in obs]), mode="eval").value.astype(np.float64)
            for (i, seg), v in zip(pending, boot):
                finished_segments.append((seg, float(v)))
                self._segments[i] = []

        transitions = []
        adv_parts, ret_parts = [], []
        for seg, boot_v in finished_segments:
            adv, ret = gae_advantages(
                [t.reward for t in seg], [t.value_est for t in seg], [t.done for t in seg],
                gamma, lam, boot_v,
            )
            transitions.extend(seg)
            adv_parts.append(adv)
            ret_parts.append(ret)
        return RolloutBatch(
            planes=np.stack([t.obs.plane for t in transitions]),
            masks=np.stack([t.obs.mask for t in transitions]),
            actions=np.array([t.action for t in transitions], dtype=np.int64),
            log_probs=np.array([t.log_prob for t in transitions]),
            values=np.array([t.value_est for t in transitions]),
            rewards=np.array([t.reward for t in transitions]),
            dones=np.array([t.done for t in transitions]),
            advantages=np.concatenate(adv_parts),
            returns=np.concatenate(ret_parts),
            episodes=episodes,
        )


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean()
    std = adv.std()
    return (adv - adv.mean()) / (std if std > 1e-12 else 1.0)


# -- loss --------------------------------------------------------------------


@dataclass
class LossInfo:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    kl_estimate: float
    ratios: np.ndarray
    surrogate: np.ndarray


def ppo_loss(net: NetworkParams, planes, masks, actions, old_log_probs, advantages, returns,
             config: PpoConfig):
    """Clipped-surrogate PPO loss and its parameter gradients.

    loss = -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) + value_coef*mean((V-R)^2)
           - entropy_coef*mean(H), with r = exp(logp_new - logp_old) under the mask.
    The network runs in eval mode so the ratio is exactly 1 before any update.
    """
    n = len(actions)
    out = forward(net, planes, mode="eval")
    logits = out.policy_logits.astype(np.float64)
    value = out.value.astype(np.float64)
    logp_all = masked_log_softmax(logits, masks)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_log_probs)
    eps = config.clip_ratio
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    surrogate = np.minimum(unclipped, clipped)
    lo = np.minimum.reduce([unclipped, (1 - eps) * advantages, (1 + eps) * advantages])
    hi = np.maximum.reduce([unclipped, (1 - eps) * advantages, (1 + eps) * advantages])
    assert np.all((surrogate >= lo) & (surrogate <= hi)), "surrogate escaped its clip bounds"

    plogp = probs * np.where(masks, logp_all, 0.0)
    entropy = -plogp.sum(axis=1)
    policy_loss = -surrogate.mean()
    value_loss = np.mean((value - returns) ** 2)
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy.mean()
    if not math.isfinite(loss):
        raise FloatingPointError(
            f"non-finite PPO loss: policy={policy_loss} value={value_loss} "
            f"max|logit|={np.abs(logits).max()} max ratio={ratio.max()}"
        )

    # d(-surrogate)/dlogp is -A*r where the unclipped branch is active
    active = unclipped <= clipped
    dlogp = np.where(active, -advantages * ratio, 0.0) / n
    onehot = np.zeros_like(probs)
    onehot[idx, actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - probs)
    if config.entropy_coef:
        # dH/dz_j = -p_j (log p_j + H) on legal actions
        dH = -np.where(masks, probs * (np.where(masks, logp_all, 0.0) + entropy[:, None]), 0.0)
        dlogits -= config.entropy_coef * dH / n
    dvalue = config.value_coef * 2.0 * (value - returns) / n
    grads = backward(net, out.cache, dlogits, dvalue)
    info = LossInfo(
        loss=float(loss),
        policy_loss=float(policy_loss),
        value_loss=float(value_loss),
        entropy=float(entropy.mean()),
        kl_estimate=float(np.mean(old_log_probs - logp)),
        ratios=ratio,
        surrogate=surrogate,
    )
    return loss, grads, info


# -- training ----------------------------------------------------------------


def ppo_update(net: NetworkParams, batch: RolloutBatch, config: PpoConfig, optimizer,
               rng: np.random.Generator) -> dict:
    """Run ``epochs_per_batch`` shuffled minibatch passes over ``batch``."""
    adv = normalize_advantages(batch.advantages)
    n = len(batch)
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    count = 0
    for _ in range(config.epochs_per_batch):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            mb = order[start:start + config.minibatch]
            _, grads, info = ppo_loss(
                net, batch.planes[mb], batch.masks[mb], batch.actions[mb],
                batch.log_probs[mb], adv[mb], batch.returns[mb], config,
            )
            clip_gradients(grads, config.max_grad_norm)
            optimizer.step(net.params, grads)
            totals["policy_loss"] += info.policy_loss
            totals["value_loss"] += info.value_loss
            totals["entropy"] += info.entropy
            count += 1
    stats = {k: v / count for k, v in totals.items()}
    # approximate KL between the collection policy and the updated one
    out = forward(net, batch.planes, mode="eval")
    logp = masked_log_softmax(out.policy_logits.astype(np.float64), batch.masks)[np.arange(n), batch.actions]
    stats["kl_estimate"] = float(np.mean(batch.log_probs - logp))
    return stats


def train_iteration(
    net: NetworkParams,
    opponent: OpponentSpec,
    config: PpoConfig,
    seed: int,
    learner_color: Color = Color.WHITE,
    iteration: int = 0,
    optimizer=None,
    on_batch: Optional[Callable[[dict], None]] = None,
) -> tuple[NetworkParams, list[dict]]:
    """Train ``net`` in place against ``opponent`` for ``config.iteration_steps`` learner steps.

    Returns the network and one metrics row per train batch.
    """
    optimizer = optimizer or make_optimizer(config.optimizer, config.learning_rate)
    seeds = np.random.SeedSequence([seed, iteration])
    collect_seed, shuffle_seed = (int(s.generate_state(1)[0]) for s in seeds.spawn(2))
    collector = RolloutCollector(opponent, learner_color, collect_seed, config.rollout_envs)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    rows = []
    steps = 0
    while steps < config.iteration_steps:
        batch = collector.collect(net, config.train_batch, config.gamma, config.lam)
        stats = ppo_update(net, batch, config, optimizer, shuffle_rng)
        steps += len(batch)
        eps = batch.episodes
        row = {
            "iteration": iteration,
            "steps": steps,
            "mean_episode_reward": float(np.mean([e.total_reward(learner_color) for e in eps])) if eps else float("nan"),
            "mean_episode_length": float(np.mean([e.length for e in eps])) if eps else float("nan"),
            **stats,
        }
        rows.append(row)
        log.info("iter %d steps %d reward %.3f len %.1f vloss %.3f", iteration, steps,
                 row["mean_episode_reward"], row["mean_episode_length"], row["value_loss"])
        if on_batch:
            on_batch(row)
    return net, rows


def write_metrics(rows: list[dict], path, phase: str = "rl", append: bool = True) -> Path:
    """Append rows to the metrics CSV, writing the header for a new file."""
    path = Path(path)
    new = not append or not path.exists()
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        if new:
            w.writeheader()
        for row in rows:
            w.writerow({"phase": phase, **row})
    return path
