"""Pure numpy twins of the compiled kernels.

Same signatures, same semantics, bit-identical outputs: every floating-point
operation happens in the same order per walker (vectorization runs walkers in
lockstep, which cannot change any single walker's arithmetic), and the tree
decoders use plain Python loops. Keep in sync with `_kernels.pyx`.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def dyck_parents(steps: np.ndarray) -> np.ndarray:
    steps = np.asarray(steps)
    n_nodes = 1 + int((steps == 1).sum())
    parents = np.empty(n_nodes, dtype=np.int64)
    parents[0] = -1
    stack = [0]
    nxt = 1
    for s in steps:
        if s == 1:
            parents[nxt] = stack[-1]
            stack.append(nxt)
            nxt += 1
            if len(stack) > n_nodes:
                raise ValueError("contour ascends above its own node budget")
        else:
            stack.pop()
            if not stack:
                raise ValueError("contour descends below the root")
    if len(stack) != 1:
        raise ValueError("contour does not return to the root")
    return parents


def propagate_labels(parents: np.ndarray, inc: np.ndarray) -> np.ndarray:
    parents = np.asarray(parents, dtype=np.int64)
    inc = np.asarray(inc, dtype=np.float64)
    n = parents.size
    if inc.size != n:
        raise ValueError("one increment per node required")
    out = np.empty(n, dtype=np.float64)
    for v in range(n):
        p = parents[v]
        if p < 0:
            out[v] = inc[v]
        elif p >= v:
            raise ValueError("parents must precede children")
        else:
            out[v] = out[p] + inc[v]
    return out


def _move(pos: np.ndarray, d: np.ndarray, n_side: int) -> np.ndarray:
    x = pos % n_side
    y = pos // n_side
    x = np.where(d == 0, (x + 1) % n_side, x)
    x = np.where(d == 1, (x - 1) % n_side, x)
    y = np.where(d == 2, (y + 1) % n_side, y)
    y = np.where(d == 3, (y - 1) % n_side, y)
    return y * n_side + x


def ctrw_exit_chunk(weights, n_side, pos, t, alive, exit_t, cx, cy, r2, dirs, eholds):
    n_side = int(n_side)
    half = n_side // 2
    chunk = dirs.shape[1]
    for k in range(chunk):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        p = pos[act]
        dt = weights[p] * eholds[act, k]
        t[act] = t[act] + dt
        p = _move(p, dirs[act, k], n_side)
        pos[act] = p
        dx = p % n_side - cx
        dx = np.where(dx > half, dx - n_side, dx)
        dx = np.where(dx < -half, dx + n_side, dx)
        dy = p // n_side - cy
        dy = np.where(dy > half, dy - n_side, dy)
        dy = np.where(dy < -half, dy + n_side, dy)
        gone = (dx * dx + dy * dy).astype(np.float64) >= r2
        if gone.any():
            rows = act[gone]
            alive[rows] = 0
            exit_t[rows] = t[rows]
    return int(alive.sum())


def ctrw_mask_exit_chunk(weights, n_side, pos, t, alive, exit_t, inside, dirs, eholds):
    n_side = int(n_side)
    chunk = dirs.shape[1]
    for k in range(chunk):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        p = pos[act]
        dt = weights[p] * eholds[act, k]
        t[act] = t[act] + dt
        p = _move(p, dirs[act, k], n_side)
        pos[act] = p
        gone = inside[p] == 0
        if gone.any():
            rows = act[gone]
            alive[rows] = 0
            exit_t[rows] = t[rows]
    return int(alive.sum())


def ctrw_record_chunk(weights, n_side, pos, t, mark_idx, marks, rec, dirs, eholds):
    n_side = int(n_side)
    n_m = marks.size
    chunk = dirs.shape[1]
    for k in range(chunk):
        act = np.flatnonzero(mark_idx < n_m)
        if act.size == 0:
            break
        p = pos[act]
        dt = weights[p] * eholds[act, k]
        tn = t[act] + dt
        # record every mark that falls inside this holding interval
        while True:
            j = mark_idx[act]
            due = (j < n_m) & (marks[np.minimum(j, n_m - 1)] < tn)
            if not due.any():
                break
            rows = act[due]
            rec[rows, mark_idx[rows]] = pos[rows]
            mark_idx[rows] += 1
        t[act] = tn
        move = act[mark_idx[act] < n_m]
        if move.size:
            pos[move] = _move(pos[move], dirs[move, k], n_side)
    return int((mark_idx < n_m).sum())
