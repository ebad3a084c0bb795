"""Independent reference implementations used to cross-check the package.

Nothing here imports the engine's move tables or search code: moves are found
by trying every (from, to) pair against plain piece geometry.
"""

from __future__ import annotations

import numpy as np

N = 5
VALUES = {1: 100, 2: 300, 3: 300, 4: 500, 5: 900, 6: 60000}
CAP = 150


def _fr(sq):
    return sq % N, sq // N


def _path_clear(grid, a, b):
    fa, ra = _fr(a)
    fb, rb = _fr(b)
    df = (fb > fa) - (fb < fa)
    dr = (rb > ra) - (rb < ra)
    f, r = fa + df, ra + dr
    while (f, r) != (fb, rb):
        if grid[r * N + f] != 0:
            return False
        f, r = f + df, r + dr
    return True


def _reaches(grid, side, a, b):
    piece = grid[a]
    kind = abs(piece)
    target = grid[b]
    if a == b or (target != 0 and (target > 0) == (side > 0)):
        return False
    fa, ra = _fr(a)
    fb, rb = _fr(b)
    df, dr = fb - fa, rb - ra
    adf, adr = abs(df), abs(dr)
    if kind == 1:
        if dr != side:
            return False
        if df == 0:
            return target == 0
        return adf == 1 and target != 0
    if kind == 2:
        return {adf, adr} == {1, 2}
    if kind == 6:
        return max(adf, adr) == 1
    straight = (df == 0) != (dr == 0)
    diagonal = adf == adr and adf > 0
    if kind == 4 and not straight:
        return False
    if kind == 3 and not diagonal:
        return False
    if kind == 5 and not (straight or diagonal):
        return False
    return _path_clear(grid, a, b)


def oracle_moves(grid, side, half_moves=0):
    """Set of (from, to, promo) with promo an int kind or None."""
    if 6 not in grid or -6 not in grid or half_moves >= CAP:
        return set()
    out = set()
    last = N - 1 if side > 0 else 0
    for a in range(N * N):
        if grid[a] == 0 or (grid[a] > 0) != (side > 0):
            continue
        for b in range(N * N):
            if _reaches(grid, side, a, b):
                if abs(grid[a]) == 1 and b // N == last:
                    for promo in (5, 4, 3, 2):
                        out.add((a, b, promo))
                else:
                    out.add((a, b, None))
    return out


def oracle_apply(grid, side, move):
    a, b, promo = move
    g = list(grid)
    g[b] = promo * side if promo else g[a]
    g[a] = 0
    return tuple(g)


def oracle_perft(grid, side, depth, half_moves=0):
    """Leaf count at exactly ``depth``; finished games are not extended."""
    if depth == 0:
        return 1
    total = 0
    for m in oracle_moves(grid, side, half_moves):
        g = oracle_apply(grid, side, m)
        if depth == 1:
            total += 1
        else:
            total += oracle_perft(g, -side, depth - 1, half_moves + 1)
    return total


def material_white(grid):
    return sum(VALUES[abs(p)] * (1 if p > 0 else -1) for p in grid if p)


def minimax_white(grid, side, depth, half_moves=0):
    """Full-width minimax from white's point of view, no pruning.

    Leaves score material/1000, a king capture scores +-60, a draw 0.
    """
    if depth == 0:
        return material_white(grid) / 1000.0
    moves = oracle_moves(grid, side, half_moves)
    if not moves:
        return 0.0
    scores = []
    for m in moves:
        g = oracle_apply(grid, side, m)
        if -6 not in g:
            scores.append(60.0)
        elif 6 not in g:
            scores.append(-60.0)
        elif half_moves + 1 >= CAP:
            scores.append(0.0)
        elif not oracle_moves(g, -side, half_moves + 1):
            scores.append(0.0)
        else:
            scores.append(minimax_white(g, -side, depth - 1, half_moves + 1))
    return max(scores) if side > 0 else min(scores)


def gae_double_loop(rewards, values, dones, gamma, lam, bootstrap):
    """A_t = sum_l (gamma*lam)^l delta_{t+l}, truncated after the first done."""
    T = len(rewards)
    nxt = np.append(np.asarray(values, dtype=float)[1:], bootstrap)
    delta = [rewards[t] + gamma * nxt[t] * (0.0 if dones[t] else 1.0) - values[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        acc = 0.0
        for l in range(T - t):
            acc += (gamma * lam) ** l * delta[t + l]
            if dones[t + l]:
                break
        adv[t] = acc
    return adv, adv + np.asarray(values, dtype=float)


def central_difference(f, x: np.ndarray, idx, h=1e-6):
    old = x[idx]
    x[idx] = old + h
    up = f()
    x[idx] = old - h
    down = f()
    x[idx] = old
    return (up - down) / (2 * h)
