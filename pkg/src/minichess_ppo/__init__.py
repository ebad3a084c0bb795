"""PPO self-play for Gardner 5x5 minichess, implemented with numpy."""

from .engine import Board, Color, Move, PieceKind, initial_board, legal_moves, perft
from .encoding import ACTION_TABLE, NUM_ACTIONS, observe
from .net import NetConfig, init_params, load_checkpoint, save_checkpoint
from .ppo import PpoConfig, train_iteration
from .arena import run_match

__version__ = "0.1.0"

__all__ = [
    "ACTION_TABLE", "Board", "Color", "Move", "NUM_ACTIONS", "NetConfig", "PieceKind", "PpoConfig",
    "init_params", "initial_board", "legal_moves", "load_checkpoint", "observe", "perft", "run_match",
    "save_checkpoint", "train_iteration",
]
