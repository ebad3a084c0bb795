"""Gardner 5x5 minichess rules.

Squares are dense indices ``rank * 5 + file`` with rank 0 being white's back
rank.  The grid is a tuple of 25 signed ints: ``+kind`` for a white piece,
``-kind`` for a black one, 0 for empty.  Games end when a king is captured;
there is no check, so every pseudo-legal move is legal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

SIZE = 5
NUM_SQUARES = SIZE * SIZE
MOVE_CAP = 150


class Color(enum.IntEnum):
    WHITE = 1
    BLACK = -1

    @property
    def opponent(self) -> "Color":
        return Color(-self)


class PieceKind(enum.IntEnum):
    PAWN = 1
    KNIGHT = 2
    BISHOP = 3
    ROOK = 4
    QUEEN = 5
    KING = 6

    @property
    def points(self) -> int:
        return PIECE_VALUES[self]

    @property
    def symbol(self) -> str:
        return "pnbrqk"[self - 1]


PIECE_VALUES = {
    PieceKind.PAWN: 100,
    PieceKind.KNIGHT: 300,
    PieceKind.BISHOP: 300,
    PieceKind.ROOK: 500,
    PieceKind.QUEEN: 900,
    PieceKind.KING: 60000,
}
# indexed by abs(signed piece); slot 0 is the empty square
_VALUE_BY_CODE = (0, 100, 300, 300, 500, 900, 60000)

PROMOTION_KINDS = (PieceKind.QUEEN, PieceKind.ROOK, PieceKind.BISHOP, PieceKind.KNIGHT)


def square(file: int, rank: int) -> int:
    if not (0 <= file < SIZE and 0 <= rank < SIZE):
        raise ValueError(f"square out of range: file={file} rank={rank}")
    return rank * SIZE + file


def file_of(sq: int) -> int:
    return sq % SIZE


def rank_of(sq: int) -> int:
    return sq // SIZE


def square_name(sq: int) -> str:
    return "abcde"[file_of(sq)] + str(rank_of(sq) + 1)


def parse_square(name: str) -> int:
    return square("abcde".index(name[0]), int(name[1]) - 1)


class Move(NamedTuple):
    from_sq: int
    to_sq: int
    promotion: Optional[PieceKind] = None

    def uci(self) -> str:
        promo = self.promotion.symbol if self.promotion else ""
        return square_name(self.from_sq) + square_name(self.to_sq) + promo


class Status(enum.Enum):
    ONGOING = "ongoing"
    WHITE_WIN = "white_win"
    BLACK_WIN = "black_win"
    DRAW = "draw"


class Cause(enum.Enum):
    KING_CAPTURED = "king_captured"
    STALEMATE = "stalemate"
    MOVE_CAP_REACHED = "move_cap_reached"


@dataclass(frozen=True)
class GameStatus:
    status: Status = Status.ONGOING
    cause: Optional[Cause] = None

    def __post_init__(self):
        if (self.status is Status.ONGOING) != (self.cause is None):
            raise ValueError("a terminal status needs a cause and vice versa")

    @property
    def is_terminal(self) -> bool:
        return self.status is not Status.ONGOING

    def winner(self) -> Optional[Color]:
        if self.status is Status.WHITE_WIN:
            return Color.WHITE
        if self.status is Status.BLACK_WIN:
            return Color.BLACK
        return None


ONGOING = GameStatus()


def _build_leaper_table(offsets):
    table = []
    for sq in range(NUM_SQUARES):
        f, r = file_of(sq), rank_of(sq)
        targets = []
        for df, dr in offsets:
            nf, nr = f + df, r + dr
            if 0 <= nf < SIZE and 0 <= nr < SIZE:
                targets.append(nr * SIZE + nf)
        table.append(tuple(targets))
    return tuple(table)


def _build_ray_table(directions):
    table = []
    for sq in range(NUM_SQUARES):
        f, r = file_of(sq), rank_of(sq)
        rays = []
        for df, dr in directions:
            ray = []
            nf, nr = f + df, r + dr
            while 0 <= nf < SIZE and 0 <= nr < SIZE:
                ray.append(nr * SIZE + nf)
                nf += df
                nr += dr
            if ray:
                rays.append(tuple(ray))
        table.append(tuple(rays))
    return tuple(table)


_KNIGHT_OFFSETS = ((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2))
_KING_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_ROOK_DIRS = ((0, 1), (1, 0), (0, -1), (-1, 0))
_BISHOP_DIRS = ((1, 1), (1, -1), (-1, -1), (-1, 1))

KNIGHT_TARGETS = _build_leaper_table(_KNIGHT_OFFSETS)
KING_TARGETS = _build_leaper_table(_KING_OFFSETS)
ROOK_RAYS = _build_ray_table(_ROOK_DIRS)
BISHOP_RAYS = _build_ray_table(_BISHOP_DIRS)
QUEEN_RAYS = tuple(r + b for r, b in zip(ROOK_RAYS, BISHOP_RAYS))
_SLIDER_RAYS = {PieceKind.BISHOP: BISHOP_RAYS, PieceKind.ROOK: ROOK_RAYS, PieceKind.QUEEN: QUEEN_RAYS}


@dataclass(frozen=True)
class Board:
    grid: tuple
    side_to_move: Color = Color.WHITE
    half_move_count: int = 0

    def __post_init__(self):
        if len(self.grid) != NUM_SQUARES:
            raise ValueError(f"grid must have {NUM_SQUARES} squares")
        if self.half_move_count < 0:
            raise ValueError("half_move_count must be non-negative")

    def piece_at(self, sq: int) -> Optional[tuple[Color, PieceKind]]:
        p = self.grid[sq]
        if p == 0:
            return None
        return (Color.WHITE if p > 0 else Color.BLACK), PieceKind(abs(p))

    def piece_count(self) -> int:
        return NUM_SQUARES - self.grid.count(0)

    def to_text(self) -> str:
        lines = []
        for rank in range(SIZE - 1, -1, -1):
            row = []
            for f in range(SIZE):
                p = self.grid[rank * SIZE + f]
                if p == 0:
                    row.append(".")
                else:
                    c = PieceKind(abs(p)).symbol
                    row.append(c.upper() if p > 0 else c)
            lines.append("".join(row))
        side = "w" if self.side_to_move is Color.WHITE else "b"
        lines.append(f"{side} {self.half_move_count}")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "Board":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if len(lines) != SIZE + 1:
            raise ValueError(f"expected {SIZE + 1} lines, got {len(lines)}")
        grid = [0] * NUM_SQUARES
        for i, row in enumerate(lines[:SIZE]):
            if len(row) != SIZE:
                raise ValueError(f"bad rank line {row!r}")
            rank = SIZE - 1 - i
            for f, ch in enumerate(row):
                if ch == ".":
                    continue
                kind = "pnbrqk".find(ch.lower())
                if kind < 0:
                    raise ValueError(f"unknown piece {ch!r}")
                grid[rank * SIZE + f] = (kind + 1) * (1 if ch.isupper() else -1)
        side, count = lines[SIZE].split()
        if side not in ("w", "b"):
            raise ValueError(f"bad side to move {side!r}")
        return cls(tuple(grid), Color.WHITE if side == "w" else Color.BLACK, int(count))

    def __str__(self) -> str:
        return self.to_text()


def initial_board() -> Board:
    back = (PieceKind.ROOK, PieceKind.KNIGHT, PieceKind.BISHOP, PieceKind.QUEEN, PieceKind.KING)
    grid = [0] * NUM_SQUARES
    for f, kind in enumerate(back):
        grid[square(f, 0)] = int(kind)
        grid[square(f, 1)] = int(PieceKind.PAWN)
        grid[square(f, 3)] = -int(PieceKind.PAWN)
        grid[square(f, 4)] = -int(kind)
    return Board(tuple(grid), Color.WHITE, 0)


def is_terminal_position(b: Board) -> bool:
    """True when the position can never be asked for a move (king gone or cap hit)."""
    g = b.grid
    return 6 not in g or -6 not in g or b.half_move_count >= MOVE_CAP


def _pawn_moves(grid, sq, side, out):
    r = sq // SIZE
    f = sq % SIZE
    nr = r + side
    if not 0 <= nr < SIZE:
        return
    promo = nr == (SIZE - 1 if side > 0 else 0)
    base = nr * SIZE
    targets = []
    if grid[base + f] == 0:
        targets.append(base + f)
    if f > 0 and grid[base + f - 1] * side < 0:
        targets.append(base + f - 1)
    if f < SIZE - 1 and grid[base + f + 1] * side < 0:
        targets.append(base + f + 1)
    for to in targets:
        if promo:
            for kind in PROMOTION_KINDS:
                out.append(Move(sq, to, kind))
        else:
            out.append(Move(sq, to))


def _generate(grid, side):
    out = []
    for sq in range(NUM_SQUARES):
        p = grid[sq] * side
        if p <= 0:
            continue
        if p == 1:
            _pawn_moves(grid, sq, side, out)
        elif p == 2 or p == 6:
            for to in (KNIGHT_TARGETS if p == 2 else KING_TARGETS)[sq]:
                if grid[to] * side <= 0:
                    out.append(Move(sq, to))
        else:
            for ray in _SLIDER_RAYS[p][sq]:
                for to in ray:
                    q = grid[to] * side
                    if q > 0:
                        break
                    out.append(Move(sq, to))
                    if q < 0:
                        break
    return out


def _has_move(grid, side) -> bool:
    for sq in range(NUM_SQUARES):
        p = grid[sq] * side
        if p <= 0:
            continue
        if p == 1:
            nr = sq // SIZE + side
            if not 0 <= nr < SIZE:
                continue
            f = sq % SIZE
            base = nr * SIZE
            if grid[base + f] == 0:
                return True
            if f > 0 and grid[base + f - 1] * side < 0:
                return True
            if f < SIZE - 1 and grid[base + f + 1] * side < 0:
                return True
        elif p == 2 or p == 6:
            for to in (KNIGHT_TARGETS if p == 2 else KING_TARGETS)[sq]:
                if grid[to] * side <= 0:
                    return True
        else:
            for ray in _SLIDER_RAYS[p][sq]:
                if grid[ray[0]] * side <= 0:
                    return True
    return False


def legal_moves(b: Board) -> list[Move]:
    """All moves for the side to move.  Empty list means stalemate."""
    if is_terminal_position(b):
        raise ValueError("legal_moves called on a finished game")
    return _generate(b.grid, int(b.side_to_move))


def has_legal_move(b: Board) -> bool:
    return _has_move(b.grid, int(b.side_to_move))


def apply_move_unchecked(b: Board, m: Move) -> tuple[Board, GameStatus, Optional[PieceKind]]:
    side = int(b.side_to_move)
    grid = list(b.grid)
    moving = grid[m.from_sq]
    target = grid[m.to_sq]
    grid[m.from_sq] = 0
    grid[m.to_sq] = int(m.promotion) * side if m.promotion else moving
    grid = tuple(grid)
    ply = b.half_move_count + 1
    nb = Board(grid, Color(-side), ply)
    captured = PieceKind(abs(target)) if target else None
    if captured is PieceKind.KING:
        status = GameStatus(Status.WHITE_WIN if side > 0 else Status.BLACK_WIN, Cause.KING_CAPTURED)
    elif ply >= MOVE_CAP:
        status = GameStatus(Status.DRAW, Cause.MOVE_CAP_REACHED)
    elif not _has_move(grid, -side):
        status = GameStatus(Status.DRAW, Cause.STALEMATE)
    else:
        status = ONGOING
    return nb, status, captured


def apply_move(b: Board, m: Move) -> tuple[Board, GameStatus, Optional[PieceKind]]:
    """Play ``m`` and report the resulting status and any captured piece.

    Raises ValueError when ``m`` is not legal in ``b``.
    """
    if m not in legal_moves(b):
        raise ValueError(f"illegal move {m.uci()} in\n{b.to_text()}")
    return apply_move_unchecked(b, m)


def material_score(b: Board, color: Color) -> int:
    total = 0
    for p in b.grid:
        if p > 0:
            total += _VALUE_BY_CODE[p]
        elif p < 0:
            total -= _VALUE_BY_CODE[-p]
    return total if color == Color.WHITE else -total


def game_status(b: Board) -> GameStatus:
    """Status of a position judged on its own (no move history needed)."""
    g = b.grid
    if -6 not in g:
        return GameStatus(Status.WHITE_WIN, Cause.KING_CAPTURED)
    if 6 not in g:
        return GameStatus(Status.BLACK_WIN, Cause.KING_CAPTURED)
    if b.half_move_count >= MOVE_CAP:
        return GameStatus(Status.DRAW, Cause.MOVE_CAP_REACHED)
    if not _has_move(g, int(b.side_to_move)):
        return GameStatus(Status.DRAW, Cause.STALEMATE)
    return ONGOING


def perft(b: Board, depth: int) -> int:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return 1
    if game_status(b).is_terminal:
        return 0
    return _perft(b, depth)


def _perft(b: Board, depth: int) -> int:
    moves = _generate(b.grid, int(b.side_to_move))
    if depth == 1:
        return len(moves)
    total = 0
    for m in moves:
        nb, status, _ = apply_move_unchecked(b, m)
        if not status.is_terminal:
            total += _perft(nb, depth - 1)
    return total


def mirror(b: Board) -> Board:
    """Flip ranks and swap colours, including the side to move."""
    grid = [0] * NUM_SQUARES
    for sq, p in enumerate(b.grid):
        grid[(SIZE - 1 - sq // SIZE) * SIZE + sq % SIZE] = -p
    return Board(tuple(grid), b.side_to_move.opponent, b.half_move_count)
