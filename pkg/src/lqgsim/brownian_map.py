"""Random-tree continuum maps: contour excursions, Gaussian label snakes, the
one-link and chain distances built from them, and ball-volume growth curves.

Grid convention: a contour with k steps lives on the k+1 point uniform grid
over [0,1]. The dyck variant scales a uniform 2n-step lattice excursion by
n^{-1/2}; label increments then carry variance n^{-1/2} per tree edge, so
Var(Y_s - Y_t) equals the contour pseudometric m_X(s, t) exactly and equal
tree points share one label.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, shortest_path

from . import _backend
from .reports import EstimateReport, fit_loglog_slope
from .rng import stream

__all__ = [
    "ContourExcursion",
    "ContourTree",
    "SnakeSample",
    "MapDistanceResult",
    "LandmarkDistances",
    "sample_contour",
    "contour_tree",
    "snake_labels",
    "sample_snake",
    "tree_pseudometric",
    "d_circ",
    "class_members",
    "root_index",
    "map_distance_matrix",
    "landmark_pair",
    "ball_volume_curve",
    "ball_volume_slope",
    "volume_growth_report",
    "distance_summary",
    "write_volume_curve",
    "save_snake",
    "load_snake",
]

log = logging.getLogger(__name__)

LANDMARK_BUDGET = 4096
REP_PAIR_BUDGET = 40_000_000


@dataclass
class ContourExcursion:
    """Nonnegative excursion on a uniform grid over [0,1], endpoints zero."""

    variant: str
    times: np.ndarray
    X: np.ndarray
    seed: int
    steps: np.ndarray | None = None  # +1/-1 contour steps, dyck variant only

    @property
    def n(self) -> int:
        """Number of contour steps (grid size minus one)."""
        return self.X.size - 1


@dataclass
class ContourTree:
    """Decoded tree structure of a contour.

    parents: preorder parent pointers, root -1; node_at: tree node occupied at
    each grid time; edge_var: label variance per tree edge.
    """

    parents: np.ndarray
    node_at: np.ndarray
    edge_var: float


@dataclass
class SnakeSample:
    """Contour plus Gaussian labels and the decoded tree behind them."""

    contour: ContourExcursion
    Y: np.ndarray
    root_index: int
    tree: ContourTree
    node_labels: np.ndarray | None = None
    label_seed: int = 0


@dataclass
class MapDistanceResult:
    """One landmark pair: the one-link value and the chain infimum."""

    pair: tuple[int, int]
    d_circ: float
    d_chain: float


@dataclass
class LandmarkDistances:
    """Distance state on a landmark set.

    edge holds the one-link weights (min of d_circ over tree-equivalence
    representatives), chain their shortest-path closure. undercuts counts
    landmarks whose chain distance from the root dips below Y - min Y beyond
    tolerance; finite-grid chains shouldn't manage that, so a nonzero count is
    logged as a flag rather than raised.
    """

    landmarks: np.ndarray
    root_pos: int
    edge: np.ndarray
    chain: np.ndarray
    undercuts: int
    max_undercut: float


def sample_contour(n: int, variant: str = "dyck", seed: int = 0) -> ContourExcursion:
    """Draw a discrete excursion: a uniform 2n-step Dyck path scaled by
    n^{-1/2}, or an n-step Brownian bridge rotated positive about its minimum.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = stream(seed, "contour", variant)
    if variant == "dyck":
        seq = np.repeat(np.array([1, -1], dtype=np.int8), (n, n + 1))
        rng.shuffle(seq)
        walk = np.cumsum(seq)
        # the unique rotation starting after the first minimum stays >= 0
        # until the appended final down-step; dropping it leaves a Dyck path
        k = int(np.argmin(walk))
        steps = np.ascontiguousarray(np.roll(seq, -(k + 1))[:-1])
        X = np.empty(2 * n + 1)
        X[0] = 0.0
        np.cumsum(steps, out=X[1:])
        X *= n ** -0.5
        times = np.linspace(0.0, 1.0, 2 * n + 1)
        return ContourExcursion("dyck", times, X, seed, steps)
    if variant == "brownian":
        incs = rng.standard_normal(n) * n ** -0.5
        w = np.empty(n + 1)
        w[0] = 0.0
        np.cumsum(incs, out=w[1:])
        bridge = w - np.linspace(0.0, 1.0, n + 1) * w[-1]
        tau = int(np.argmin(bridge[:-1]))
        rolled = np.roll(bridge[:-1], -tau)
        X = np.append(rolled, rolled[0]) - bridge[tau]
        X[0] = 0.0
        X[-1] = 0.0
        times = np.linspace(0.0, 1.0, n + 1)
        return ContourExcursion("brownian", times, X, seed, None)
    raise ValueError(f"unknown contour variant {variant!r}")


def _occupied_nodes(parents: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Tree node occupied after each contour step (preorder ids)."""
    node_at = np.empty(steps.size + 1, dtype=np.int64)
    node_at[0] = 0
    cur = 0
    nxt = 1
    par = parents.tolist()
    for k, s in enumerate(steps.tolist()):
        if s == 1:
            cur = nxt
            nxt += 1
        else:
            cur = par[cur]
        node_at[k + 1] = cur
    return node_at


def _crossing_steps(X: np.ndarray, mesh: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit up/down crossings of the dyadic height mesh, plus a pointer from
    each grid time to its position in the crossing sequence."""
    levels = np.floor(X / mesh + 1e-9).astype(np.int64)
    levels[0] = 0
    levels[-1] = 0
    diffs = np.diff(levels)
    counts = np.abs(diffs)
    steps = np.repeat(np.sign(diffs), counts).astype(np.int8)
    ptr = np.empty(X.size, dtype=np.int64)
    ptr[0] = 0
    np.cumsum(counts, out=ptr[1:])
    return steps, ptr


def contour_tree(contour: ContourExcursion) -> ContourTree:
    """Decode the contour into parent pointers and per-grid-time node ids."""
    if contour.variant == "dyck":
        steps = contour.steps
        parents = _backend.dyck_parents(steps)
        node_at = _occupied_nodes(parents, steps)
        n = contour.n // 2
        return ContourTree(parents, node_at, n ** -0.5)
    # brownian: exact snake on the up/down crossings of a dyadic mesh near
    # the per-step scale, so label variance tracks height up to one mesh cell
    n = contour.n
    mesh = 2.0 ** -max(1, round(np.log2(n) / 2.0))
    steps, ptr = _crossing_steps(contour.X, mesh)
    parents = _backend.dyck_parents(steps)
    node_at = _occupied_nodes(parents, steps)[ptr]
    return ContourTree(parents, node_at, mesh)


def snake_labels(
    contour: ContourExcursion, seed: int = 0, tree: ContourTree | None = None
) -> SnakeSample:
    """Attach Brownian labels along the contour tree: one centered Gaussian
    increment per edge, variance equal to the edge height, root label zero."""
    if tree is None:
        tree = contour_tree(contour)
    rng = stream(seed, "snake", contour.variant)
    inc = rng.standard_normal(tree.parents.size) * tree.edge_var ** 0.5
    inc[0] = 0.0
    node_labels = _backend.propagate_labels(tree.parents, inc)
    Y = node_labels[tree.node_at]
    return SnakeSample(contour, Y, int(np.argmin(Y)), tree, node_labels, seed)


def sample_snake(n: int, variant: str = "dyck", seed: int = 0) -> SnakeSample:
    """Contour and labels in one draw from a single seed."""
    return snake_labels(sample_contour(n, variant, seed), seed)


def root_index(sample: SnakeSample) -> int:
    """Grid index of the label minimum, first index on ties."""
    return int(np.argmin(sample.Y))


def tree_pseudometric(contour: ContourExcursion, s: int, t: int) -> float:
    """m_X(s, t) = X_s + X_t - 2 min X over the index interval."""
    lo, hi = (s, t) if s <= t else (t, s)
    X = contour.X
    return float(X[s] + X[t] - 2.0 * X[lo : hi + 1].min())


def d_circ(sample: SnakeSample, s: int, t: int) -> float:
    """One-link distance: Y_s + Y_t - 2 max of the interval minima of Y over
    the direct arc [s, t] and the circular complement [t, s]."""
    lo, hi = (s, t) if s <= t else (t, s)
    Y = sample.Y
    inner = Y[lo : hi + 1].min()
    outer = min(Y[: lo + 1].min(), Y[hi:].min())
    return float(Y[s] + Y[t] - 2.0 * max(inner, outer))


def class_members(sample: SnakeSample, i: int) -> np.ndarray:
    """All grid indices mapped to the same tree point as index i."""
    node_at = sample.tree.node_at
    return np.flatnonzero(node_at == node_at[i])


class _RangeMin:
    """Sparse-table range minimum with vectorized inclusive queries."""

    def __init__(self, values: np.ndarray):
        n = values.size
        exps = np.frexp(np.arange(1, n + 1, dtype=np.float64))[1]
        self._log = (exps - 1).astype(np.int64)
        self._log = np.concatenate([[0], self._log])  # log[span] for span >= 1
        levels = int(self._log[n]) + 1
        table = np.full((levels, n), np.inf)
        table[0] = values
        for j in range(1, levels):
            w = 1 << (j - 1)
            m = n - (1 << j) + 1
            np.minimum(table[j - 1, :m], table[j - 1, w : w + m], out=table[j, :m])
        self._table = table

    def query(self, lo, hi):
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        j = self._log[hi - lo + 1]
        return np.minimum(
            self._table[j, lo], self._table[j, hi - np.left_shift(1, j) + 1]
        )


def _d_circ_batch(Y: np.ndarray, rmq: _RangeMin, s, t) -> np.ndarray:
    lo = np.minimum(s, t)
    hi = np.maximum(s, t)
    inner = rmq.query(lo, hi)
    outer = np.minimum(rmq.query(0, lo), rmq.query(hi, Y.size - 1))
    return Y[s] + Y[t] - 2.0 * np.maximum(inner, outer)


def _landmark_set(sample: SnakeSample, m: int) -> np.ndarray:
    n_grid = sample.Y.size
    marks = np.round(np.linspace(0, n_grid - 1, m)).astype(np.int64)
    return np.unique(np.concatenate([marks, [sample.root_index]]))


def map_distance_matrix(sample: SnakeSample, m: int = 512) -> LandmarkDistances:
    """Chain-infimum distances on m evenly spaced landmarks plus the root.

    Edge weights take the minimum one-link value over all grid representatives
    of each landmark's tree point; the closure is all-pairs shortest paths.
    """
    n_grid = sample.Y.size
    if m < 2:
        raise ValueError("need at least 2 landmarks")
    if m > min(n_grid, LANDMARK_BUDGET):
        raise ValueError(
            f"m={m} exceeds the landmark budget; try m={min(n_grid, LANDMARK_BUDGET)}"
        )
    landmarks = _landmark_set(sample, m)
    node_at = sample.tree.node_at

    # every grid index equal to a landmark's tree point, tagged by owner;
    # landmarks sharing a tree point each keep their own copy of the class
    order = np.argsort(node_at, kind="stable")
    sorted_nodes = node_at[order]
    owner_nodes = node_at[landmarks]
    lo = np.searchsorted(sorted_nodes, owner_nodes, side="left")
    hi = np.searchsorted(sorted_nodes, owner_nodes, side="right")
    reps = np.concatenate([order[a:b] for a, b in zip(lo, hi)])
    rep_owner = np.repeat(np.arange(landmarks.size, dtype=np.int64), hi - lo)
    if reps.size * reps.size > REP_PAIR_BUDGET:
        scale = (REP_PAIR_BUDGET / (reps.size * reps.size)) ** 0.5
        raise ValueError(
            f"m={m} exceeds the representative-pair budget; try m={max(2, int(m * scale))}"
        )

    rmq = _RangeMin(sample.Y)
    n_lm = landmarks.size
    edge = np.full((n_lm, n_lm), np.inf)
    block = max(1, REP_PAIR_BUDGET // (8 * reps.size))
    for start in range(0, reps.size, block):
        ra = reps[start : start + block]
        oa = rep_owner[start : start + block]
        s = np.repeat(ra, reps.size)
        t = np.tile(reps, ra.size)
        d = _d_circ_batch(sample.Y, rmq, s, t)
        np.minimum.at(edge, (np.repeat(oa, reps.size), np.tile(rep_owner, ra.size)), d)
    np.fill_diagonal(edge, 0.0)

    # explicit sparse form: zero-weight edges between duplicate tree classes
    # are real edges, which the dense reading would silently drop
    chain = shortest_path(csgraph_from_dense(edge, null_value=np.inf), directed=False)
    root_pos = int(np.searchsorted(landmarks, sample.root_index))

    lower = sample.Y[landmarks] - sample.Y.min()
    gap = chain[root_pos] - lower
    undercuts = int((gap < -1e-9).sum())
    max_undercut = float(max(0.0, -gap.min()))
    if undercuts:
        log.warning(
            "chain distance undercuts the root label identity at %d of %d landmarks (max %.3g)",
            undercuts,
            n_lm,
            max_undercut,
        )
    return LandmarkDistances(landmarks, root_pos, edge, chain, undercuts, max_undercut)


def landmark_pair(dist: LandmarkDistances, a: int, b: int) -> MapDistanceResult:
    """Distance record for the landmark pair at positions a, b."""
    return MapDistanceResult(
        (int(dist.landmarks[a]), int(dist.landmarks[b])),
        float(dist.edge[a, b]),
        float(dist.chain[a, b]),
    )


def ball_volume_curve(
    sample: SnakeSample,
    center: int,
    radii: Sequence[float],
    dist: LandmarkDistances | None = None,
    m: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of grid mass within chain distance r of a landmark center.

    Per-point distances go through the landmark skeleton: chain distance to a
    landmark plus the local one-link value from that landmark's
    representatives, minimized over landmarks. The center's own tree class
    sits at distance zero.
    """
    if dist is None:
        dist = map_distance_matrix(sample, m)
    hits = np.flatnonzero(dist.landmarks == center)
    if hits.size == 0:
        raise ValueError("center must be one of the landmark indices")
    c_pos = int(hits[0])

    Y = sample.Y
    node_at = sample.tree.node_at
    rmq = _RangeMin(Y)
    grid = np.arange(Y.size, dtype=np.int64)
    best = np.full(Y.size, np.inf)
    base = dist.chain[c_pos]
    for a, lm in enumerate(dist.landmarks):
        for rep in np.flatnonzero(node_at == node_at[lm]):
            local = _d_circ_batch(Y, rmq, np.full(Y.size, rep, dtype=np.int64), grid)
            np.minimum(best, base[a] + local, out=best)
    best[node_at == node_at[center]] = 0.0

    radii = np.asarray(radii, dtype=np.float64)
    sorted_d = np.sort(best)
    frac = np.searchsorted(sorted_d, radii, side="right") / Y.size
    return radii, frac


def ball_volume_slope(
    radii: np.ndarray,
    fractions: np.ndarray,
    diameter: float,
    window: tuple[float, float] = (0.05, 0.4),
) -> tuple[float, float, float]:
    """Log-log slope of the volume curve over the middle window of radii,
    as (slope, stderr, r_squared)."""
    radii = np.asarray(radii, dtype=np.float64)
    fractions = np.asarray(fractions, dtype=np.float64)
    keep = (radii >= window[0] * diameter) & (radii <= window[1] * diameter) & (fractions > 0)
    if keep.sum() < 3:
        raise ValueError("need at least 3 usable radii inside the fit window")
    return fit_loglog_slope(radii[keep], fractions[keep])


def volume_growth_report(
    n: int = 2 ** 16,
    n_maps: int = 20,
    m: int = 512,
    seed: int = 0,
    n_radii: int = 25,
    window: tuple[float, float] = (0.05, 0.4),
) -> EstimateReport:
    """Mean ball-volume growth exponent over independent maps with random
    landmark centers. The continuum exponent is 4."""
    rng = stream(seed, "volume-growth")
    slopes = []
    for i in range(n_maps):
        sample = sample_snake(n, "dyck", int(rng.integers(0, 2 ** 62)))
        dist = map_distance_matrix(sample, m)
        center = int(dist.landmarks[rng.integers(0, dist.landmarks.size)])
        diam = float(dist.chain[dist.chain < np.inf].max())
        radii = np.geomspace(0.02, 1.0, n_radii) * diam
        _, frac = ball_volume_curve(sample, center, radii, dist=dist)
        slope, _, _ = ball_volume_slope(radii, frac, diam, window)
        slopes.append(slope)
    slopes = np.asarray(slopes)
    return EstimateReport(
        name="ball-volume-growth",
        estimate=float(slopes.mean()),
        stderr=float(slopes.std(ddof=1) / np.sqrt(n_maps)) if n_maps > 1 else 0.0,
        n=n_maps,
        seed=seed,
        params={
            "n": n,
            "m": m,
            "window": list(window),
            "slopes": [float(s) for s in slopes],
        },
    )


def distance_summary(dist: LandmarkDistances) -> dict:
    """Scalar diagnostics of one landmark distance matrix."""
    finite = dist.chain[np.isfinite(dist.chain)]
    return {
        "landmarks": int(dist.landmarks.size),
        "diameter": float(finite.max()),
        "mean_distance": float(finite.mean()),
        "undercuts": int(dist.undercuts),
        "max_undercut": float(dist.max_undercut),
    }


def write_volume_curve(path, radii, fractions) -> None:
    """CSV curve: radius, fraction of grid mass within that radius."""
    import csv

    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "volume"])
        for r, v in zip(radii, fractions):
            w.writerow([f"{r:.12g}", f"{v:.12g}"])


_SNAKE_MAGIC = b"LQGSNK01"
_SNAKE_HEADER = struct.Struct("<BxxxQQQ")  # variant code, n_steps, seed, label seed
_VARIANT_CODES = {"dyck": 0, "brownian": 1}


def save_snake(path, sample: SnakeSample) -> None:
    """Flat binary snake: magic, variant, step count, seeds, then X and Y as
    little-endian float64."""
    code = _VARIANT_CODES[sample.contour.variant]
    header = _SNAKE_MAGIC + _SNAKE_HEADER.pack(
        code, sample.contour.n, sample.contour.seed, sample.label_seed
    )
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(sample.contour.X.astype("<f8").tobytes())
        fh.write(sample.Y.astype("<f8").tobytes())


def load_snake(path) -> SnakeSample:
    """Rebuild a snake from its binary file. The tree is re-decoded from the
    stored contour; node labels come back from first-visit grid times (exact
    for the dyck variant)."""
    raw = Path(path).read_bytes()
    head = 8 + _SNAKE_HEADER.size
    if len(raw) < head or raw[:8] != _SNAKE_MAGIC:
        raise ValueError("not a snake file")
    code, n_steps, seed, label_seed = _SNAKE_HEADER.unpack(raw[8:head])
    variants = {v: k for k, v in _VARIANT_CODES.items()}
    if code not in variants:
        raise ValueError(f"unknown variant code {code}")
    variant = variants[code]
    n_grid = n_steps + 1
    expect = head + 16 * n_grid
    if len(raw) != expect:
        raise ValueError(f"truncated snake file: {len(raw)} bytes, expected {expect}")
    X = np.frombuffer(raw, dtype="<f8", count=n_grid, offset=head).astype(np.float64)
    Y = np.frombuffer(raw, dtype="<f8", count=n_grid, offset=head + 8 * n_grid).astype(np.float64)

    steps = None
    if variant == "dyck":
        half = n_steps // 2
        steps = np.rint(np.diff(X) * half ** 0.5).astype(np.int8)
    times = np.linspace(0.0, 1.0, n_grid)
    contour = ContourExcursion(variant, times, X, int(seed), steps)
    tree = contour_tree(contour)
    node_labels = np.full(tree.parents.size, np.nan)
    nodes, first = np.unique(tree.node_at, return_index=True)
    node_labels[nodes] = Y[first]
    return SnakeSample(contour, Y, int(np.argmin(Y)), tree, node_labels, int(label_seed))
