"""Command line entry point.

Workdir layout::

    config.yaml        effective configuration snapshot
    checkpoints/       *.ckpt
    logs/              games.jsonl, dataset.jsonl
    metrics.csv        one row per train batch / pretraining epoch
    league.manifest    self-play lineage (JSON lines)
    results.csv        arena match reports
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from pathlib import Path

from . import arena, pretrain, selfplay
from .config import PRESETS, RunConfig, load_config, parse_override, _merge
from .encoding import ACTION_TABLE
from .engine import Color, initial_board, perft
from .env import OpponentSpec
from .net import Checkpoint, CheckpointError, init_params, load_checkpoint, save_checkpoint
from .ppo import make_optimizer, train_iteration, write_metrics

log = logging.getLogger("minichess_ppo")


class CliError(RuntimeError):
    pass


def _config(args) -> RunConfig:
    overrides: dict = {}
    for text in getattr(args, "set", []):
        overrides = _merge(overrides, parse_override(text))
    if hasattr(args, "seed"):
        overrides = _merge(overrides, {"seed": args.seed})
    if hasattr(args, "workers"):
        overrides = _merge(overrides, {"workers": args.workers})
    if hasattr(args, "workdir"):
        overrides = _merge(overrides, {"paths": {"workdir": args.workdir}})
    return load_config(getattr(args, "config", None), overrides)


def _prepare(cfg: RunConfig) -> None:
    cfg.checkpoint_dir.mkdir(parents=True, exist_ok=True)
    cfg.log_dir.mkdir(parents=True, exist_ok=True)
    cfg.dump(cfg.workdir / "config.yaml")


def _spec(text: str):
    if text == "random":
        return "random", "random"
    path = Path(text)
    if not path.exists():
        raise CliError(f"checkpoint not found: {text}")
    return load_checkpoint(path), str(path)


def cmd_perft(args, cfg: RunConfig) -> int:
    if args.depth < 0:
        raise CliError("depth must be >= 0")
    board = initial_board()
    if args.depth == 0:
        print(perft(board, 0))
    for d in range(1, args.depth + 1):
        print(perft(board, d))
    return 0


def cmd_train_single(args, cfg: RunConfig) -> int:
    _prepare(cfg)
    color = Color.WHITE if args.color == "white" else Color.BLACK
    if args.init:
        ckpt = load_checkpoint(args.init)
        net = ckpt.net
        if ckpt.metadata.get("phase") == "pretrain":
            net = pretrain.warm_start(net, cfg.seed)
    else:
        net = init_params(cfg.network.net_config(), cfg.seed)
    opt = make_optimizer(cfg.ppo.optimizer, cfg.ppo.learning_rate)
    name = f"single_{color.name.lower()}"
    out = cfg.checkpoint_dir / f"{name}.ckpt"
    for it in range(cfg.train.iterations):
        net, rows = train_iteration(net, OpponentSpec(), cfg.ppo, cfg.seed, color, it, opt)
        write_metrics(rows, cfg.workdir / "metrics.csv", phase=f"single-{color.name.lower()}")
        meta = {"phase": "single", "color": color.name.lower(), "iteration": it, "seed": cfg.seed,
                "opponent": "random", "steps": (it + 1) * cfg.ppo.iteration_steps}
        save_checkpoint(Checkpoint(net, meta), cfg.checkpoint_dir / f"{name}_{it:03d}.ckpt")
    save_checkpoint(Checkpoint(net, meta), out)
    print(f"checkpoint {out}")
    if cfg.train.eval_games > 0:
        ckpt = load_checkpoint(out)
        white, black = (ckpt, "random") if color == Color.WHITE else ("random", ckpt)
        res = arena.run_match(white, black, cfg.train.eval_games, cfg.arena.seed, cfg.workers)
        ids = (str(out), "random") if color == Color.WHITE else ("random", str(out))
        arena.append_report(cfg.workdir / "results.csv", res.report_row(*ids, cfg.arena.seed))
        wr = res.white_winrate if color == Color.WHITE else res.black_winrate
        print(f"winrate {wr:.4f}")
    return 0


def cmd_selfplay(args, cfg: RunConfig) -> int:
    _prepare(cfg)
    sp = cfg.selfplay
    ppo_cfg = dataclasses.replace(cfg.ppo, iteration_steps=sp.iteration_steps)
    state = selfplay.init_league(cfg.workdir, cfg.network.net_config(), cfg.seed, sp.eval_games,
                                 cfg.arena.seed, cfg.workers)
    done = state.iteration
    if done:
        log.info("resuming league after iteration %d", done)
    state = selfplay.improve(state, ppo_cfg, sp.iterations, sp.epsilon, cfg.seed, sp.eval_games,
                             cfg.arena.seed, cfg.workers)
    for it, wr in state.winrates(Color.WHITE):
        print(f"iteration {it} white winrate {wr:.4f}")
    if sp.iterations >= 1:
        white, black = selfplay.select_champion(state)
        for entry in (white, black):
            src = state.workdir / entry.checkpoint
            shutil.copyfile(src, cfg.checkpoint_dir / f"champion_{entry.color}.ckpt")
            print(f"champion {entry.color} iteration {entry.iteration} winrate {entry.winrate:.4f}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    white, white_id = _spec(args.white)
    black, black_id = _spec(args.black)
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    n = args.games or cfg.arena.games
    seed = cfg.arena.seed if args.arena_seed is None else args.arena_seed
    res = arena.run_match(white, black, n, seed, cfg.workers, deterministic=not args.sample)
    arena.append_report(cfg.workdir / "results.csv", res.report_row(white_id, black_id, seed))
    print(f"winrate {res.white_winrate:.4f} +- {res.ci95:.4f} (wins {res.white_wins}, "
          f"draws {res.draws}, losses {res.black_wins}, n {res.games})")
    return 0


def cmd_collect(args, cfg: RunConfig) -> int:
    _prepare(cfg)
    logs = pretrain.collect_games(cfg.pretrain.games, cfg.seed)
    path = pretrain.write_game_log(logs, cfg.log_dir / "games.jsonl")
    n_pos = sum(len(g["moves"]) for g in logs)
    print(f"games {len(logs)} positions {n_pos} -> {path}")
    return 0


def cmd_pretrain(args, cfg: RunConfig) -> int:
    _prepare(cfg)
    pc = cfg.pretrain
    games_path = cfg.log_dir / "games.jsonl"
    if not games_path.exists():
        raise CliError(f"{games_path} not found; run collect first")
    games = pretrain.read_game_log(games_path)
    positions = pretrain.build_dataset(games, pc.depth, pc.max_positions, cfg.seed, cfg.workers, Color.WHITE)
    if not positions:
        raise CliError("empty dataset")
    pretrain.write_dataset(positions, cfg.log_dir / "dataset.jsonl")
    dataset = pretrain.split_by_game(positions, pc.validation_fraction, cfg.seed)
    net = init_params(cfg.network.net_config(), cfg.seed)
    net, curves = pretrain.pretrain_value(net, dataset, pc.epochs, pc.learning_rate, pc.batch_size, cfg.seed)
    write_metrics(curves, cfg.workdir / "metrics.csv", phase="pretrain")
    out = cfg.checkpoint_dir / "pretrained.ckpt"
    meta = {"phase": "pretrain", "seed": cfg.seed, "positions": len(positions), "depth": pc.depth,
            "epochs": pc.epochs}
    save_checkpoint(Checkpoint(net, meta), out)
    for row in curves:
        print(f"epoch {row['iteration']} train {row['value_loss']:.5f} val {row['val_loss']:.5f}")
    print(f"checkpoint {out}")
    return 0


def cmd_dump_actions(args, cfg: RunConfig) -> int:
    for line in ACTION_TABLE.dump_lines():
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help=f"preset ({', '.join(PRESETS)}) or YAML file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--workdir")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config value, e.g. ppo.learning_rate=0")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="minichess-ppo", parents=[common],
                                     description="Gardner minichess PPO training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perft", parents=[common], help="count move paths from the initial position")
    p.add_argument("depth", type=int)
    p.set_defaults(func=cmd_perft)

    p = sub.add_parser("train-single", parents=[common], help="train one colour against Random")
    p.add_argument("--color", choices=("white", "black"), default="white")
    p.add_argument("--init", help="start from this checkpoint (a pretrained one gets a fresh policy head)")
    p.set_defaults(func=cmd_train_single)

    p = sub.add_parser("selfplay", parents=[common], help="iterative policy improvement (resumable)")
    p.set_defaults(func=cmd_selfplay)

    p = sub.add_parser("evaluate", parents=[common], help="play an arena match")
    p.add_argument("--white", default="random", help='"random" or a checkpoint path')
    p.add_argument("--black", default="random", help='"random" or a checkpoint path')
    p.add_argument("--games", type=int)
    p.add_argument("--arena-seed", type=int)
    p.add_argument("--sample", action="store_true", help="sample network moves instead of argmax")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("collect", parents=[common], help="play Random vs Random games for pretraining")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("pretrain", parents=[common], help="label collected positions and fit the value head")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("dump-actions", parents=[common], help="print the action index table")
    p.set_defaults(func=cmd_dump_actions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except (CliError, CheckpointError, ValueError, FileNotFoundError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
