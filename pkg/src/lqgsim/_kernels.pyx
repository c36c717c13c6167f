# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled hot loops: contour-to-tree decoding, label propagation, and the
chunked continuous-time random walk advancers.

Every function here has a pure twin in `_kernels_py` with the same signature
and bit-identical output. Randomness is always drawn by the caller and passed
in as arrays, so backend choice never changes a result. Keep the arithmetic
order in both files in sync; the extension is compiled with contraction off
for the same reason.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def dyck_parents(const cnp.int8_t[::1] steps):
    """Decode a +1/-1 contour sequence into preorder parent pointers.

    Node 0 is the root; each +1 step visits a new node whose parent is the top
    of the ancestor stack; each -1 step ascends. Returns int64 parents with
    parents[0] = -1.
    """
    cdef Py_ssize_t n_steps = steps.shape[0]
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t k
    for k in range(n_steps):
        if steps[k] == 1:
            n_nodes += 1
    parents_arr = np.empty(n_nodes, dtype=np.int64)
    stack_arr = np.empty(n_nodes, dtype=np.int64)
    cdef cnp.int64_t[::1] parents = parents_arr
    cdef cnp.int64_t[::1] stack = stack_arr
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t nxt = 1
    parents[0] = -1
    stack[0] = 0
    for k in range(n_steps):
        if steps[k] == 1:
            parents[nxt] = stack[top]
            top += 1
            if top >= n_nodes:
                raise ValueError("contour ascends above its own node budget")
            stack[top] = nxt
            nxt += 1
        else:
            if top == 0:
                raise ValueError("contour descends below the root")
            top -= 1
    if top != 0:
        raise ValueError("contour does not return to the root")
    return parents_arr


def propagate_labels(const cnp.int64_t[::1] parents, const cnp.float64_t[::1] inc):
    """Cumulative sums of per-node increments along root paths.

    labels[v] = labels[parents[v]] + inc[v], labels[root] = inc[root]. Parents
    must come before children (preorder ids do).
    """
    cdef Py_ssize_t n = parents.shape[0]
    if inc.shape[0] != n:
        raise ValueError("one increment per node required")
    out_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    cdef Py_ssize_t v
    cdef cnp.int64_t p
    for v in range(n):
        p = parents[v]
        if p < 0:
            out[v] = inc[v]
        elif p >= v:
            raise ValueError("parents must precede children")
        else:
            out[v] = out[p] + inc[v]
    return out_arr


def ctrw_exit_chunk(
    const cnp.float64_t[::1] weights,
    Py_ssize_t n_side,
    cnp.int64_t[::1] pos,
    cnp.float64_t[::1] t,
    cnp.uint8_t[::1] alive,
    cnp.float64_t[::1] exit_t,
    cnp.int64_t cx,
    cnp.int64_t cy,
    double r2,
    const cnp.uint8_t[:, ::1] dirs,
    const cnp.float64_t[:, ::1] eholds,
):
    """Advance torus walkers through one chunk of pre-drawn moves, stopping
    each at its first jump landing outside the squared-radius-r2 ball around
    (cx, cy) in min-image metric. State arrays are updated in place; returns
    the number of walkers still alive.
    """
    cdef Py_ssize_t n_w = pos.shape[0]
    cdef Py_ssize_t chunk = dirs.shape[1]
    cdef Py_ssize_t i, k
    cdef cnp.int64_t p, x, y, dx, dy
    cdef cnp.int64_t half = n_side // 2
    cdef double ti, dt
    cdef Py_ssize_t n_alive = 0
    for i in range(n_w):
        if not alive[i]:
            continue
        p = pos[i]
        ti = t[i]
        for k in range(chunk):
            dt = weights[p] * eholds[i, k]
            ti = ti + dt
            x = p % n_side
            y = p // n_side
            if dirs[i, k] == 0:
                x = x + 1
                if x == n_side:
                    x = 0
            elif dirs[i, k] == 1:
                x = x - 1
                if x < 0:
                    x = n_side - 1
            elif dirs[i, k] == 2:
                y = y + 1
                if y == n_side:
                    y = 0
            else:
                y = y - 1
                if y < 0:
                    y = n_side - 1
            p = y * n_side + x
            dx = x - cx
            if dx > half:
                dx -= n_side
            elif dx < -half:
                dx += n_side
            dy = y - cy
            if dy > half:
                dy -= n_side
            elif dy < -half:
                dy += n_side
            if <double> (dx * dx + dy * dy) >= r2:
                alive[i] = 0
                exit_t[i] = ti
                break
        pos[i] = p
        t[i] = ti
        if alive[i]:
            n_alive += 1
    return n_alive


def ctrw_mask_exit_chunk(
    const cnp.float64_t[::1] weights,
    Py_ssize_t n_side,
    cnp.int64_t[::1] pos,
    cnp.float64_t[::1] t,
    cnp.uint8_t[::1] alive,
    cnp.float64_t[::1] exit_t,
    const cnp.uint8_t[::1] inside,
    const cnp.uint8_t[:, ::1] dirs,
    const cnp.float64_t[:, ::1] eholds,
):
    """Advance torus walkers through one chunk of pre-drawn moves, stopping
    each at its first jump onto a vertex where inside == 0. State arrays are
    updated in place; returns the number of walkers still alive.
    """
    cdef Py_ssize_t n_w = pos.shape[0]
    cdef Py_ssize_t chunk = dirs.shape[1]
    cdef Py_ssize_t i, k
    cdef cnp.int64_t p, x, y
    cdef double ti, dt
    cdef Py_ssize_t n_alive = 0
    for i in range(n_w):
        if not alive[i]:
            continue
        p = pos[i]
        ti = t[i]
        for k in range(chunk):
            dt = weights[p] * eholds[i, k]
            ti = ti + dt
            x = p % n_side
            y = p // n_side
            if dirs[i, k] == 0:
                x = x + 1
                if x == n_side:
                    x = 0
            elif dirs[i, k] == 1:
                x = x - 1
                if x < 0:
                    x = n_side - 1
            elif dirs[i, k] == 2:
                y = y + 1
                if y == n_side:
                    y = 0
            else:
                y = y - 1
                if y < 0:
                    y = n_side - 1
            p = y * n_side + x
            if not inside[p]:
                alive[i] = 0
                exit_t[i] = ti
                break
        pos[i] = p
        t[i] = ti
        if alive[i]:
            n_alive += 1
    return n_alive


def ctrw_record_chunk(
    const cnp.float64_t[::1] weights,
    Py_ssize_t n_side,
    cnp.int64_t[::1] pos,
    cnp.float64_t[::1] t,
    cnp.int64_t[::1] mark_idx,
    const cnp.float64_t[::1] marks,
    cnp.int64_t[:, ::1] rec,
    const cnp.uint8_t[:, ::1] dirs,
    const cnp.float64_t[:, ::1] eholds,
):
    """Advance torus walkers through one chunk of pre-drawn moves, recording
    the position occupied at each requested clock mark (sorted ascending).
    State arrays are updated in place; returns the number of walkers that
    still have marks pending.
    """
    cdef Py_ssize_t n_w = pos.shape[0]
    cdef Py_ssize_t chunk = dirs.shape[1]
    cdef Py_ssize_t n_m = marks.shape[0]
    cdef Py_ssize_t i, k
    cdef cnp.int64_t p, x, y, j
    cdef double ti, dt, tn
    cdef Py_ssize_t pending = 0
    for i in range(n_w):
        j = mark_idx[i]
        if j >= n_m:
            continue
        p = pos[i]
        ti = t[i]
        for k in range(chunk):
            dt = weights[p] * eholds[i, k]
            tn = ti + dt
            while j < n_m and marks[j] < tn:
                rec[i, j] = p
                j += 1
            ti = tn
            if j >= n_m:
                break
            x = p % n_side
            y = p // n_side
            if dirs[i, k] == 0:
                x = x + 1
                if x == n_side:
                    x = 0
            elif dirs[i, k] == 1:
                x = x - 1
                if x < 0:
                    x = n_side - 1
            elif dirs[i, k] == 2:
                y = y + 1
                if y == n_side:
                    y = 0
            else:
                y = y - 1
                if y < 0:
                    y = n_side - 1
            p = y * n_side + x
        pos[i] = p
        t[i] = ti
        mark_idx[i] = j
        if j < n_m:
            pending += 1
    return pending
