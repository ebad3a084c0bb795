"""Dense action indices, legal-action masks and network observations.

Non-promotion moves and queen promotions use ``from * 25 + to``.  The three
underpromotions get extra slots keyed by the white-oriented (from, to) pair,
so a black underpromotion shares its slot with the rank-mirrored white one.
Every network serves a single colour, which makes the colour part of the
decoding context rather than of the index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .engine import (
    NUM_SQUARES,
    PIECE_VALUES,
    SIZE,
    Board,
    Color,
    Move,
    PieceKind,
    legal_moves,
    square_name,
)

_UNDERPROMOTIONS = (PieceKind.KNIGHT, PieceKind.BISHOP, PieceKind.ROOK)
PLANE_SCALE = 1000.0


def _mirror_sq(sq: int) -> int:
    return (SIZE - 1 - sq // SIZE) * SIZE + sq % SIZE


def _white_promotion_pairs() -> list[tuple[int, int]]:
    pairs = []
    for f in range(SIZE):
        frm = (SIZE - 2) * SIZE + f
        for df in (-1, 0, 1):
            if 0 <= f + df < SIZE:
                pairs.append((frm, (SIZE - 1) * SIZE + f + df))
    return sorted(pairs)


class ActionTable:
    """Bijection between moves of one colour and action ids in ``[0, size)``."""

    def __init__(self):
        base = NUM_SQUARES * NUM_SQUARES
        self._under_index: dict[tuple[int, int, PieceKind], int] = {}
        self._under_slots: list[tuple[int, int, PieceKind]] = []
        for frm, to in _white_promotion_pairs():
            for kind in _UNDERPROMOTIONS:
                self._under_index[(frm, to, kind)] = base + len(self._under_slots)
                self._under_slots.append((frm, to, kind))
        self.size = base + len(self._under_slots)

    def __len__(self) -> int:
        return self.size

    def encode(self, move: Move, color: Color) -> int:
        if move.promotion is None or move.promotion is PieceKind.QUEEN:
            return move.from_sq * NUM_SQUARES + move.to_sq
        frm, to = move.from_sq, move.to_sq
        if color == Color.BLACK:
            frm, to = _mirror_sq(frm), _mirror_sq(to)
        try:
            return self._under_index[(frm, to, move.promotion)]
        except KeyError:
            raise ValueError(f"{move.uci()} is not a promotion for {color.name}") from None

    def decode(self, action: int, board: Board) -> Move:
        """Inverse of :meth:`encode` for the side to move in ``board``.

        Queen promotions share the plain from-to slot, so the board is needed
        to tell them apart (a pawn reaching the last rank always promotes).
        """
        if not 0 <= action < self.size:
            raise ValueError(f"action {action} out of range [0, {self.size})")
        color = board.side_to_move
        base = NUM_SQUARES * NUM_SQUARES
        if action >= base:
            frm, to, kind = self._under_slots[action - base]
            if color == Color.BLACK:
                frm, to = _mirror_sq(frm), _mirror_sq(to)
            return Move(frm, to, kind)
        frm, to = divmod(action, NUM_SQUARES)
        promotion = None
        if abs(board.grid[frm]) == PieceKind.PAWN:
            last = SIZE - 1 if color == Color.WHITE else 0
            if to // SIZE == last:
                promotion = PieceKind.QUEEN
        return Move(frm, to, promotion)

    def dump_lines(self) -> Iterable[str]:
        """``index from to promo`` per slot; underpromotions listed in white orientation."""
        base = NUM_SQUARES * NUM_SQUARES
        for a in range(base):
            frm, to = divmod(a, NUM_SQUARES)
            yield f"{a} {square_name(frm)} {square_name(to)} -"
        for i, (frm, to, kind) in enumerate(self._under_slots):
            yield f"{base + i} {square_name(frm)} {square_name(to)} {kind.symbol}"


@lru_cache(maxsize=None)
def build_action_table() -> ActionTable:
    return ActionTable()


ACTION_TABLE = build_action_table()
NUM_ACTIONS = ACTION_TABLE.size

# plane value per signed piece code, offset by 6 so index 0 is a black king
_PLANE_VALUES = np.array(
    [np.sign(code) * PIECE_VALUES[PieceKind(abs(code))] / PLANE_SCALE if code else 0.0
     for code in range(-6, 7)]
)


@dataclass
class Observation:
    plane: np.ndarray  # (5, 5) indexed [rank, file], white-positive
    mask: np.ndarray  # (NUM_ACTIONS,) bool


def board_plane(b: Board) -> np.ndarray:
    return _PLANE_VALUES[np.asarray(b.grid) + 6].reshape(SIZE, SIZE)


def legal_action_ids(b: Board, color: Color | None = None) -> tuple[list[int], list[Move]]:
    """Action ids of the side-to-move's legal moves plus the moves themselves."""
    color = b.side_to_move if color is None else color
    moves = legal_moves(b)
    return [ACTION_TABLE.encode(m, color) for m in moves], moves


def observe(b: Board, for_color: Color) -> Observation:
    """Observation for ``for_color``; the plane is never flipped for black."""
    mask = np.zeros(NUM_ACTIONS, dtype=bool)
    if for_color == b.side_to_move:
        ids, _ = legal_action_ids(b, for_color)
        mask[ids] = True
    return Observation(board_plane(b), mask)


def mask_policy(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax restricted to legal actions; illegal entries are exactly zero."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("mask has no legal action (terminal position reached the policy)")
    logits = np.asarray(logits, dtype=np.float64)
    masked = np.where(mask, logits, -np.inf)
    masked = masked - masked.max(axis=-1, keepdims=True)
    e = np.exp(masked)
    return e / e.sum(axis=-1, keepdims=True)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log of :func:`mask_policy`; illegal entries are ``-inf``."""
    masked = np.where(mask, logits, -np.inf)
    shifted = masked - masked.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
