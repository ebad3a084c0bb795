import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from minichess_ppo.engine import apply_move_unchecked, initial_board, legal_moves  # noqa: E402


def random_positions(n: int, seed: int = 0):
    """Non-terminal positions visited by uniform random playouts, in visit order."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        b = initial_board()
        while len(out) < n:
            moves = legal_moves(b)
            if not moves:
                break
            out.append(b)
            b, status, _ = apply_move_unchecked(b, moves[rng.integers(len(moves))])
            if status.is_terminal:
                break
    return out


@pytest.fixture(scope="session")
def positions_2k():
    return random_positions(2000, seed=7)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
