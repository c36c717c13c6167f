"""Lattice free field, multiplicative-chaos mass, first-passage metric, and
the mass-clocked nearest-neighbor walk built from them.

The pipeline: synthesize a log-correlated Gaussian field on the unit square
(torus by default), exponentiate it into a random cell measure, measure
distances through exponentially weighted shortest paths, and run the walk
whose holding times are exponential with mean proportional to cell mass.
Estimators on top of those pieces fit the growth exponents of ball mass,
ball exit times, and return probabilities.

Normalizations, fixed once here so every exponent fit shares them:
the field covariance carries a unit coefficient on the log
(Cov[h(x)h(y)] ~ -log|x-y| + const), the domain is the unit square so cell
area is 1/n^2, each cell mass has expectation exactly its area, and the
walk holds at x for mean cell_mass(x)/4, which makes the flat field the
plain rate-4 lattice walk.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from . import _backend
from .reports import EstimateReport, fit_loglog_slope
from .rng import stream

__all__ = [
    "GAMMA",
    "XI",
    "LatticeField",
    "GmcMeasure",
    "LfppMetric",
    "WalkState",
    "LiouvilleTrajectory",
    "ExitTimeCurve",
    "HeatKernelProfile",
    "vertex_index",
    "vertex_xy",
    "sample_gff",
    "flat_field",
    "gmc_mass",
    "holding_means",
    "lfpp_metric",
    "lfpp_distance",
    "ball_mass_curve",
    "mass_growth_report",
    "liouville_walk",
    "exit_time_curve",
    "exit_slope_report",
    "exit_growth_report",
    "premixing_tmax",
    "heat_kernel_profile",
    "stretch_pairs",
    "ondiag_decay_report",
    "stretch_exponent_report",
    "heat_kernel_reports",
    "save_field",
    "load_field",
    "write_exit_curve",
    "write_ball_mass_curve",
    "write_heat_profile",
]

GAMMA = math.sqrt(8.0 / 3.0)
# distance coupling matched to the volume exponent 4: xi = gamma / 4
XI = GAMMA / 4.0

_FIELD_MAGIC = b"LQGFLD01"
_FIELD_HEADER = struct.Struct("<IBxxxddQ")  # n, periodic, gamma, xi, seed


# ---------------------------------------------------------------------------
# domain types


@dataclass
class LatticeField:
    """Zero-mean Gaussian field on an n x n grid of cells.

    `h[y, x]` is the value at vertex (x, y); `var_profile[y, x]` is the exact
    construction variance E[h(x,y)^2], kept so the chaos normalization does
    not depend on Monte Carlo estimates. Adding a constant to `h` while
    keeping the profile is deliberate: the field is only defined up to an
    additive constant, and shifts rescale masses and distances jointly.
    """

    n: int
    h: np.ndarray
    var_profile: np.ndarray
    periodic: bool
    seed: int

    def shifted(self, c: float) -> "LatticeField":
        """Same field plus a global constant (variance profile unchanged)."""
        return LatticeField(self.n, self.h + float(c), self.var_profile, self.periodic, self.seed)


@dataclass
class GmcMeasure:
    """Random cell measure exp(gamma h - gamma^2/2 E[h^2]) * cell area."""

    gamma: float
    cell_mass: np.ndarray
    total_mass: float


@dataclass
class LfppMetric:
    """Shortest-path metric with edge weight exp(xi (h(u)+h(v))/2) * spacing.

    Distances are exact single-source shortest paths on the 4-neighbor graph,
    so symmetry and the triangle inequality hold by construction.
    """

    xi: float
    n: int
    periodic: bool
    spacing: float
    graph: sparse.csr_array

    def distances_from(self, src: int, limit: float = np.inf) -> np.ndarray:
        """All-vertex distances from `src`; beyond `limit` reported as inf."""
        n_v = self.n * self.n
        if not 0 <= src < n_v:
            raise ValueError(f"vertex {src} out of range for n={self.n}")
        return dijkstra(self.graph, directed=False, indices=src, limit=limit)

    def distance(self, src: int, dst: int) -> float:
        n_v = self.n * self.n
        if not 0 <= dst < n_v:
            raise ValueError(f"vertex {dst} out of range for n={self.n}")
        return float(self.distances_from(src)[dst])

    def ball(self, center: int, r: float) -> np.ndarray:
        """Boolean mask over vertices with d(center, v) <= r."""
        d = self.distances_from(center, limit=float(r) * (1 + 1e-12))
        return d <= r

    def eccentricity(self, center: int) -> float:
        return float(self.distances_from(center).max())


@dataclass
class WalkState:
    """Walker snapshot: vertex, accumulated Liouville clock, jump count."""

    position: int
    liouville_clock: float
    steps: int


@dataclass
class LiouvilleTrajectory:
    """Jump chain of one walk: positions[k] is occupied on [times[k], times[k+1])."""

    positions: np.ndarray
    times: np.ndarray
    state: WalkState


@dataclass
class ExitTimeCurve:
    """Mean Liouville exit times from metric balls of the given radii."""

    radii: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_walks: int
    n_censored: np.ndarray
    center: int
    seed: int


@dataclass
class HeatKernelProfile:
    """Return-probability estimates p_hat[i, j] for pairs[i] at t[j].

    p_hat(x, y, t) = P[walk from x sits in y's block at Liouville time t]
    divided by the block's mass. Cells with fewer than `min_hits` hits are
    NaN; `inconclusive` is set when more than half the cells dropped.
    """

    t: np.ndarray
    pairs: list[tuple[int, int]]
    p_hat: np.ndarray
    hits: np.ndarray
    block: int
    n_walks: int
    seed: int
    min_hits: int
    dropped_frac: float
    inconclusive: bool
    params: dict = dc_field(default_factory=dict)


# ---------------------------------------------------------------------------
# field synthesis


def vertex_index(x: int, y: int, n: int) -> int:
    """Flat index of grid vertex (x, y); rows are y, so index = y*n + x."""
    return int(y) * n + int(x)


def vertex_xy(v: int, n: int) -> tuple[int, int]:
    return int(v) % n, int(v) // n


def _check_side(n: int) -> None:
    if n < 64 or (n & (n - 1)) != 0:
        raise ValueError(f"side length must be a power of two >= 64, got {n}")


def sample_gff(n: int, periodic: bool = True, seed: int = 0) -> LatticeField:
    """Spectral synthesis of the discrete free field with unit log covariance.

    Modes are weighted by 2*pi / (Laplacian eigenvalue); the factor 2*pi turns
    the lattice Green function into a field whose covariance decays like
    -log|x-y| with coefficient one, the convention every exponent here
    assumes. On the torus the zero mode is removed, so the spatial mean
    vanishes identically; with `periodic=False` the field is pinned to zero
    just outside the boundary instead.
    """
    _check_side(n)
    g = stream(seed, "gff", int(periodic), n)
    z = g.standard_normal((n, n))
    if periodic:
        freq = 2.0 * np.pi * np.arange(n) / n
        lam = (4.0 - 2.0 * np.cos(freq))[:, None] - 2.0 * np.cos(freq)[None, :]
        w = np.zeros((n, n))
        nz = lam > 1e-12  # zero mode stays at weight 0
        w[nz] = 2.0 * np.pi / lam[nz]
        h = np.fft.ifft2(np.fft.fft2(z) * np.sqrt(w)).real
        var = float(w.sum()) / (n * n)
        var_profile = np.full((n, n), var)
    else:
        freq = np.pi * np.arange(1, n + 1) / (n + 1)
        lam = (4.0 - 2.0 * np.cos(freq))[:, None] - 2.0 * np.cos(freq)[None, :]
        w = 2.0 * np.pi / lam
        # orthonormal sine modes: dstn(type=1, norm="ortho") is self-inverse
        h = sfft.dstn(np.sqrt(w) * z, type=1, norm="ortho")
        # squared mode shapes give the exact per-vertex variance of the sum
        sq = (2.0 / (n + 1)) * np.sin(np.outer(np.arange(1, n + 1), freq)) ** 2
        var_profile = sq @ w @ sq
    return LatticeField(n=n, h=h, var_profile=var_profile, periodic=periodic, seed=seed)


def flat_field(n: int, periodic: bool = True) -> LatticeField:
    """Degenerate h = 0 field; downstream objects reduce to their classical forms."""
    _check_side(n)
    zero = np.zeros((n, n))
    return LatticeField(n=n, h=zero, var_profile=zero.copy(), periodic=periodic, seed=0)


# ---------------------------------------------------------------------------
# chaos measure and metric


def gmc_mass(field: LatticeField, gamma: float = GAMMA) -> GmcMeasure:
    """Variance-compensated exponential of the field, one mass per cell.

    E[cell mass] equals the cell area 1/n^2 exactly, because the compensator
    uses the recorded construction variance rather than an estimate.
    """
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"gamma must lie in (0, 2), got {gamma}")
    n = field.n
    cell_area = 1.0 / (n * n)
    mass = np.exp(gamma * field.h - 0.5 * gamma * gamma * field.var_profile) * cell_area
    return GmcMeasure(gamma=float(gamma), cell_mass=mass, total_mass=float(mass.sum()))


def holding_means(measure: GmcMeasure) -> np.ndarray:
    """Per-vertex mean holding time of the walk, flattened for the kernels.

    Mean cell_mass/4 makes each of the four edges fire at rate 1/cell_mass,
    so the flat field gives the rate-4 walk whose clock is the standard
    diffusive parametrization of the unit square.
    """
    return measure.cell_mass.ravel() / 4.0


def lfpp_metric(field: LatticeField, xi: float = XI) -> LfppMetric:
    """Weighted 4-neighbor graph for shortest-path distance queries."""
    if xi <= 0:
        raise ValueError(f"xi must be positive, got {xi}")
    n = field.n
    spacing = 1.0 / n
    e = np.exp(0.5 * xi * field.h)
    v = np.arange(n * n).reshape(n, n)
    rows, cols, wts = [], [], []

    def add_edges(a: np.ndarray, b: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> None:
        rows.append(a.ravel())
        cols.append(b.ravel())
        wts.append((wa * wb).ravel() * spacing)

    if field.periodic:
        add_edges(v, np.roll(v, -1, axis=1), e, np.roll(e, -1, axis=1))
        add_edges(v, np.roll(v, -1, axis=0), e, np.roll(e, -1, axis=0))
    else:
        add_edges(v[:, :-1], v[:, 1:], e[:, :-1], e[:, 1:])
        add_edges(v[:-1, :], v[1:, :], e[:-1, :], e[1:, :])
    graph = sparse.csr_array(
        (np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, n * n),
    )
    return LfppMetric(xi=float(xi), n=n, periodic=field.periodic, spacing=spacing, graph=graph)


def lfpp_distance(field: LatticeField, src: int, dst: int, xi: float = XI) -> float:
    """One-off distance query; build the metric once if you need many."""
    return lfpp_metric(field, xi).distance(src, dst)


def ball_mass_curve(measure: GmcMeasure, metric: LfppMetric, center: int, radii: Sequence[float]) -> np.ndarray:
    """Chaos mass of the metric ball around `center` at each radius."""
    radii = np.asarray(radii, dtype=float)
    d = metric.distances_from(center, limit=float(radii.max()) * (1 + 1e-12))
    order = np.argsort(d)
    d_sorted = d[order]
    cum = np.cumsum(measure.cell_mass.ravel()[order])
    idx = np.searchsorted(d_sorted, radii, side="right")
    out = np.zeros_like(radii)
    out[idx > 0] = cum[idx[idx > 0] - 1]
    return out


def _spread_centers(n: int, n_centers: int) -> list[int]:
    """Deterministic well-separated centers on the grid."""
    spots = [
        (n // 2, n // 2),
        (n // 4, n // 4),
        (3 * n // 4, n // 4),
        (n // 4, 3 * n // 4),
        (3 * n // 4, 3 * n // 4),
        (n // 2, n // 4),
        (n // 4, n // 2),
        (3 * n // 4, n // 2),
        (n // 2, 3 * n // 4),
    ]
    if n_centers > len(spots):
        raise ValueError(f"at most {len(spots)} centers supported, got {n_centers}")
    return [vertex_index(x, y, n) for x, y in spots[:n_centers]]


def mass_growth_report(
    n: int = 1024,
    n_fields: int = 20,
    n_centers: int = 5,
    seed: int = 0,
    gamma: float = GAMMA,
    xi: float = XI,
    window: tuple[float, float] = (0.06, 0.35),
    n_radii: int = 12,
    periodic: bool = True,
) -> EstimateReport:
    """Log-log slope of metric-ball mass vs radius, averaged over fields and centers.

    Radii run over `window` as fractions of each center's eccentricity, one
    slope per (field, center), aggregated as mean and standard error.
    """
    g = stream(seed, "mass-growth", n)
    centers = _spread_centers(n, n_centers)
    slopes = []
    for _ in range(n_fields):
        fseed = int(g.integers(0, 2**62))
        fld = sample_gff(n, periodic=periodic, seed=fseed)
        measure = gmc_mass(fld, gamma)
        metric = lfpp_metric(fld, xi)
        for c in centers:
            ecc = metric.eccentricity(c)
            radii = np.geomspace(window[0] * ecc, window[1] * ecc, n_radii)
            masses = ball_mass_curve(measure, metric, c, radii)
            keep = masses > 0
            slope, _, _ = fit_loglog_slope(radii[keep], masses[keep])
            slopes.append(slope)
    slopes = np.asarray(slopes)
    return EstimateReport(
        name="ball-mass-growth",
        estimate=float(slopes.mean()),
        stderr=float(slopes.std(ddof=1) / math.sqrt(slopes.size)),
        n=slopes.size,
        seed=seed,
        params={
            "n": n,
            "n_fields": n_fields,
            "n_centers": n_centers,
            "gamma": gamma,
            "xi": xi,
            "window": list(window),
            "n_radii": n_radii,
            "slopes": [float(s) for s in slopes],
        },
    )


# ---------------------------------------------------------------------------
# the walk


_DX = np.array([1, -1, 0, 0], dtype=np.int64)
_DY = np.array([0, 0, 1, -1], dtype=np.int64)


def _check_hold(hold: str) -> None:
    if hold not in ("exp", "fixed"):
        raise ValueError(f"hold must be 'exp' or 'fixed', got {hold!r}")


def liouville_walk(
    field: LatticeField,
    measure: GmcMeasure,
    start: int,
    budget: float,
    seed: int = 0,
    hold: str = "exp",
    chunk: int = 8192,
    max_steps: int = 50_000_000,
) -> LiouvilleTrajectory:
    """One walk until its Liouville clock reaches `budget`, full jump chain kept.

    Holding at vertex x is exponential with mean cell_mass(x)/4 (`hold="exp"`),
    or deterministic at that mean (`hold="fixed"`) for variance-reduction
    comparisons. The budget always truncates mid-hold: the final state sits at
    the last reached vertex with its clock pinned to `budget`.
    """
    if not field.periodic:
        raise ValueError("free walks wrap around; use a periodic field")
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    n = field.n
    if not 0 <= start < n * n:
        raise ValueError(f"start vertex {start} out of range for n={n}")
    _check_hold(hold)
    w = holding_means(measure)
    g = stream(seed, "walk", start)
    x0, y0 = vertex_xy(start, n)
    t0 = 0.0
    pos_parts = [np.array([start], dtype=np.int64)]
    time_parts = [np.array([0.0])]
    steps = 0
    while True:
        d = g.integers(0, 4, size=chunk)
        e = g.standard_exponential(chunk) if hold == "exp" else np.ones(chunk)
        x = (x0 + np.cumsum(_DX[d])) % n
        y = (y0 + np.cumsum(_DY[d])) % n
        p = y * n + x
        prev = np.concatenate(([y0 * n + x0], p[:-1]))
        jt = t0 + np.cumsum(w[prev] * e)
        m = int(np.searchsorted(jt, budget, side="right"))
        pos_parts.append(p[:m])
        time_parts.append(jt[:m])
        steps += m
        if m < chunk:
            break
        if steps >= max_steps:
            raise RuntimeError(f"walk exceeded max_steps={max_steps} before the budget; raise max_steps or lower the budget")
        x0, y0, t0 = int(x[-1]), int(y[-1]), float(jt[-1])
    positions = np.concatenate(pos_parts)
    times = np.concatenate(time_parts)
    state = WalkState(position=int(positions[-1]), liouville_clock=float(budget), steps=steps)
    return LiouvilleTrajectory(positions=positions, times=times, state=state)


def _exit_ensemble(
    weights: np.ndarray,
    n_side: int,
    start: int,
    inside: np.ndarray,
    n_walks: int,
    g: np.random.Generator,
    hold: str,
    chunk: int,
    max_chunks: int,
) -> tuple[np.ndarray, int]:
    """Run walkers to their first step outside `inside`; NaN for censored ones."""
    exit_full = np.full(n_walks, np.nan)
    live = np.arange(n_walks)
    pos = np.full(n_walks, start, dtype=np.int64)
    t = np.zeros(n_walks)
    alive = np.ones(n_walks, dtype=np.uint8)
    exit_t = np.zeros(n_walks)
    for _ in range(max_chunks):
        dirs = g.integers(0, 4, size=(live.size, chunk), dtype=np.uint8)
        if hold == "exp":
            eholds = g.standard_exponential((live.size, chunk))
        else:
            eholds = np.ones((live.size, chunk))
        n_alive = _backend.ctrw_mask_exit_chunk(weights, n_side, pos, t, alive, exit_t, inside, dirs, eholds)
        if n_alive == 0:
            dead = alive == 0
            exit_full[live[dead]] = exit_t[dead]
            return exit_full, 0
        if n_alive < live.size // 2:
            # compact the survivors so dead rows stop consuming randomness
            dead = alive == 0
            exit_full[live[dead]] = exit_t[dead]
            keep = ~dead
            live, pos, t, exit_t = live[keep], pos[keep], t[keep], exit_t[keep]
            alive = np.ones(live.size, dtype=np.uint8)
    dead = alive == 0
    exit_full[live[dead]] = exit_t[dead]
    return exit_full, int(live.size - dead.sum())


def exit_time_curve(
    field: LatticeField,
    measure: GmcMeasure,
    metric: LfppMetric,
    center: int,
    radii: Sequence[float],
    n_walks: int,
    seed: int = 0,
    hold: str = "exp",
    chunk: int = 512,
    max_chunks: int = 40_000,
) -> ExitTimeCurve:
    """Mean Liouville time to leave the metric ball of each radius around `center`.

    Each radius gets a fresh ensemble, so the means are independent estimates.
    Walkers still inside after `max_chunks` chunks are censored and excluded
    from the mean, with the count reported per radius.
    """
    _check_hold(hold)
    n = field.n
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0):
        raise ValueError("radii must be positive")
    d = metric.distances_from(center)
    ecc = float(d.max())
    if float(radii.max()) > ecc / 4.0:
        raise ValueError(
            f"radius {radii.max():g} exceeds the quarter-diameter guard {ecc / 4.0:g}; shrink the radii"
        )
    weights = holding_means(measure)
    means = np.zeros_like(radii)
    stderrs = np.zeros_like(radii)
    censored = np.zeros(radii.size, dtype=np.int64)
    for i, r in enumerate(radii):
        inside = (d <= r).astype(np.uint8)
        if not field.periodic:
            edge = np.zeros((n, n), dtype=bool)
            edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
            if bool((inside.astype(bool) & edge.ravel()).any()):
                raise ValueError(f"metric ball of radius {r:g} touches the domain boundary")
        g = stream(seed, "exit", center, i)
        exits, n_cens = _exit_ensemble(weights, n, center, inside, n_walks, g, hold, chunk, max_chunks)
        done = exits[np.isfinite(exits)]
        if done.size == 0:
            raise RuntimeError(f"no walker left the radius-{r:g} ball within max_chunks; raise max_chunks")
        means[i] = done.mean()
        stderrs[i] = done.std(ddof=1) / math.sqrt(done.size) if done.size > 1 else np.inf
        censored[i] = n_cens
    return ExitTimeCurve(
        radii=radii, mean=means, stderr=stderrs, n_walks=n_walks, n_censored=censored, center=center, seed=seed
    )


def exit_slope_report(curve: ExitTimeCurve, name: str = "exit-time-growth") -> EstimateReport:
    """Log-log slope of mean exit time vs radius for one curve."""
    slope, stderr, r2 = fit_loglog_slope(curve.radii, curve.mean)
    return EstimateReport(
        name=name,
        estimate=slope,
        stderr=stderr,
        n=int(curve.radii.size),
        seed=curve.seed,
        params={"r_squared": r2, "n_walks": curve.n_walks, "censored": int(curve.n_censored.sum())},
    )


def exit_growth_report(
    n: int = 1024,
    n_fields: int = 10,
    n_walks: int = 1000,
    seed: int = 0,
    gamma: float = GAMMA,
    xi: float = XI,
    window: tuple[float, float] = (0.05, 0.25),
    n_radii: int = 8,
    hold: str = "exp",
) -> EstimateReport:
    """Exit-time exponent averaged over fields, one slope per field.

    Radii run over `window` as fractions of the center's eccentricity; the
    guard in `exit_time_curve` caps them at a quarter of the diameter.
    """
    g = stream(seed, "exit-growth", n)
    center = vertex_index(n // 2, n // 2, n)
    slopes = []
    censored = 0
    for _ in range(n_fields):
        fseed = int(g.integers(0, 2**62))
        fld = sample_gff(n, periodic=True, seed=fseed)
        measure = gmc_mass(fld, gamma)
        metric = lfpp_metric(fld, xi)
        ecc = metric.eccentricity(center)
        radii = np.geomspace(window[0] * ecc, window[1] * ecc, n_radii)
        curve = exit_time_curve(fld, measure, metric, center, radii, n_walks, seed=fseed, hold=hold)
        slope, _, _ = fit_loglog_slope(curve.radii, curve.mean)
        slopes.append(slope)
        censored += int(curve.n_censored.sum())
    slopes = np.asarray(slopes)
    return EstimateReport(
        name="exit-time-growth",
        estimate=float(slopes.mean()),
        stderr=float(slopes.std(ddof=1) / math.sqrt(slopes.size)) if slopes.size > 1 else float("inf"),
        n=slopes.size,
        seed=seed,
        params={
            "n": n,
            "n_fields": n_fields,
            "n_walks": n_walks,
            "window": list(window),
            "n_radii": n_radii,
            "censored": censored,
            "slopes": [float(s) for s in slopes],
        },
    )


# ---------------------------------------------------------------------------
# heat kernel estimation


def premixing_tmax(
    field: LatticeField,
    measure: GmcMeasure,
    seed: int = 0,
    bins: int = 16,
    entropy_frac: float = 0.95,
    chunk: int = 65_536,
    max_steps: int = 400_000_000,
) -> float:
    """Upper end of the usable time window: 1% of a cover-time proxy.

    The proxy is the Liouville time at which a pilot walk's visit counts over
    a bins x bins partition reach `entropy_frac` of the uniform entropy.
    Fits beyond this window would see the torus wrap-around.
    """
    if not field.periodic:
        raise ValueError("the cover-time proxy runs on the torus")
    n = field.n
    if bins < 2 or n % bins != 0:
        raise ValueError(f"bins must divide n, got bins={bins}, n={n}")
    side = n // bins
    w = holding_means(measure)
    g = stream(seed, "premix")
    target = entropy_frac * math.log(bins * bins)
    counts = np.zeros(bins * bins, dtype=np.int64)
    x0 = y0 = n // 2
    t0 = 0.0
    steps = 0
    while True:
        d = g.integers(0, 4, size=chunk)
        e = g.standard_exponential(chunk)
        x = (x0 + np.cumsum(_DX[d])) % n
        y = (y0 + np.cumsum(_DY[d])) % n
        prev = np.concatenate(([y0 * n + x0], (y * n + x)[:-1]))
        t0 += float((w[prev] * e).sum())
        np.add.at(counts, (y // side) * bins + x // side, 1)
        steps += chunk
        frac = counts[counts > 0] / steps
        if -(frac * np.log(frac)).sum() >= target:
            return 0.01 * t0
        if steps >= max_steps:
            raise RuntimeError("pilot walk hit max_steps before reaching the entropy target")
        x0, y0 = int(x[-1]), int(y[-1])


def _record_ensemble(
    weights: np.ndarray,
    n_side: int,
    start: int,
    marks: np.ndarray,
    n_walks: int,
    g: np.random.Generator,
    hold: str,
    chunk: int,
    max_chunks: int,
) -> tuple[np.ndarray, int]:
    """Positions of `n_walks` walkers at each mark time; -1 where censored."""
    n_t = marks.size
    rec_full = np.full((n_walks, n_t), -1, dtype=np.int64)
    live = np.arange(n_walks)
    pos = np.full(n_walks, start, dtype=np.int64)
    t = np.zeros(n_walks)
    mark_idx = np.zeros(n_walks, dtype=np.int64)
    rec = np.full((n_walks, n_t), -1, dtype=np.int64)
    for _ in range(max_chunks):
        dirs = g.integers(0, 4, size=(live.size, chunk), dtype=np.uint8)
        if hold == "exp":
            eholds = g.standard_exponential((live.size, chunk))
        else:
            eholds = np.ones((live.size, chunk))
        pending = _backend.ctrw_record_chunk(weights, n_side, pos, t, mark_idx, marks, rec, dirs, eholds)
        if pending == 0:
            rec_full[live] = rec
            return rec_full, 0
        if pending < live.size // 2:
            done = mark_idx >= n_t
            rec_full[live[done]] = rec[done]
            keep = ~done
            live, pos, t, mark_idx = live[keep], pos[keep], t[keep], mark_idx[keep]
            rec = np.ascontiguousarray(rec[keep])
    rec_full[live] = rec
    return rec_full, int((mark_idx < n_t).sum())


def heat_kernel_profile(
    field: LatticeField,
    measure: GmcMeasure,
    t: Sequence[float],
    pairs: Sequence[tuple[int, int]],
    n_walks: int,
    seed: int = 0,
    block: int = 8,
    tmax: float | None = None,
    min_hits: int = 50,
    hold: str = "exp",
    chunk: int = 512,
    max_chunks: int = 40_000,
) -> HeatKernelProfile:
    """Monte Carlo return probabilities p_hat(x, y, t) on a block partition.

    Walkers start at each distinct source x among the pairs and their positions
    are recorded at every time in `t`. The estimate for (x, y) is the fraction
    landing in y's block divided by the block's mass. The time grid must span
    at least 1.5 decades and stay inside the pre-mixing window (1% of the
    cover-time proxy; pass `tmax` to reuse a precomputed window).
    """
    if not field.periodic:
        raise ValueError("heat-kernel ensembles run on the torus")
    _check_hold(hold)
    n = field.n
    if n % block != 0:
        raise ValueError(f"block must divide n, got block={block}, n={n}")
    t = np.asarray(sorted(float(v) for v in t))
    if t.size < 2 or t[0] <= 0:
        raise ValueError("need at least two positive times")
    span = math.log10(t[-1] / t[0])
    if span < 1.5 - 1e-9:
        raise ValueError(f"time grid spans {span:.2f} decades; need at least 1.5")
    if tmax is None:
        tmax = premixing_tmax(field, measure, seed=seed)
    if t[-1] > tmax * (1 + 1e-9):
        raise ValueError(f"largest time {t[-1]:g} exceeds the pre-mixing window {tmax:g}")
    pairs = [(int(x), int(y)) for x, y in pairs]
    for x, y in pairs:
        if not (0 <= x < n * n and 0 <= y < n * n):
            raise ValueError(f"pair ({x}, {y}) out of range for n={n}")
    nb = n // block
    mu_block = measure.cell_mass.reshape(nb, block, nb, block).sum(axis=(1, 3)).ravel()
    weights = holding_means(measure)

    def block_of(v: np.ndarray) -> np.ndarray:
        return (v // n) // block * nb + (v % n) // block

    starts = sorted({x for x, _ in pairs})
    counts: dict[int, np.ndarray] = {}
    denoms: dict[int, np.ndarray] = {}
    for s in starts:
        g = stream(seed, "heat", s)
        rec, _ = _record_ensemble(weights, n, s, t, n_walks, g, hold, chunk, max_chunks)
        cnt = np.zeros((t.size, nb * nb), dtype=np.int64)
        den = np.zeros(t.size, dtype=np.int64)
        for ti in range(t.size):
            v = rec[:, ti]
            ok = v >= 0
            den[ti] = int(ok.sum())
            cnt[ti] = np.bincount(block_of(v[ok]), minlength=nb * nb)
        counts[s] = cnt
        denoms[s] = den

    p_hat = np.full((len(pairs), t.size), np.nan)
    hits = np.zeros((len(pairs), t.size), dtype=np.int64)
    for i, (x, y) in enumerate(pairs):
        b = int(block_of(np.array([y]))[0])
        for ti in range(t.size):
            h_count = int(counts[x][ti, b])
            hits[i, ti] = h_count
            if h_count >= min_hits and denoms[x][ti] > 0:
                p_hat[i, ti] = h_count / denoms[x][ti] / mu_block[b]
    dropped = float(np.isnan(p_hat).mean())
    return HeatKernelProfile(
        t=t,
        pairs=pairs,
        p_hat=p_hat,
        hits=hits,
        block=block,
        n_walks=n_walks,
        seed=seed,
        min_hits=min_hits,
        dropped_frac=dropped,
        inconclusive=dropped > 0.5,
        params={"n": n, "tmax": float(tmax), "hold": hold},
    )


def typical_start(measure: GmcMeasure, block: int = 8) -> int:
    """Vertex inside a mass-typical block, heavy enough to be observable.

    Block masses are multifractal, so a fixed geometric center often lands in
    a block too thin for return counts. Picking the block whose mass is
    closest to the mean block mass, then the heaviest cell inside it, gives a
    deterministic mass-typical observation point.
    """
    n = measure.cell_mass.shape[0]
    if n % block != 0:
        raise ValueError(f"block must divide n, got block={block}, n={n}")
    nb = n // block
    blocks = measure.cell_mass.reshape(nb, block, nb, block).sum(axis=(1, 3))
    b = int(np.argmin(np.abs(blocks - blocks.mean())))
    by, bx = divmod(b, nb)
    sub = measure.cell_mass[by * block : (by + 1) * block, bx * block : (bx + 1) * block]
    iy, ix = divmod(int(np.argmax(sub)), block)
    return vertex_index(bx * block + ix, by * block + iy, n)


def stretch_pairs(
    metric: LfppMetric,
    x: int,
    distances: Sequence[float],
    dist_row: np.ndarray | None = None,
    measure: GmcMeasure | None = None,
    block: int = 8,
) -> list[tuple[int, int]]:
    """Pairs (x, y_i) with y_i near each requested metric distance.

    With a measure, each y is the candidate whose block carries the most mass
    among the 64 vertices nearest the target distance, one block per target,
    so the pair actually collects hits.
    """
    if dist_row is None:
        dist_row = metric.distances_from(x)
    n = metric.n
    nb = n // block
    if measure is not None:
        blocks = measure.cell_mass.reshape(nb, block, nb, block).sum(axis=(1, 3)).ravel()
    else:
        blocks = np.ones(nb * nb)
    used_blocks = {int((x // n) // block * nb + (x % n) // block)}
    out = []
    for d in distances:
        cand = np.argsort(np.abs(dist_row - float(d)))[:64]
        cb = (cand // n) // block * nb + (cand % n) // block
        best, best_mass = None, -1.0
        for v, b in zip(cand, cb):
            if int(b) in used_blocks:
                continue
            if blocks[int(b)] > best_mass:
                best, best_mass = int(v), float(blocks[int(b)])
        if best is not None:
            used_blocks.add(int((best // n) // block * nb + (best % n) // block))
            out.append((x, best))
    return out


def ondiag_decay_report(profile: HeatKernelProfile) -> EstimateReport:
    """Slope of log p_hat(x, x, t) vs log t, averaged over diagonal pairs."""
    slopes = []
    n_pts = 0
    for i, (x, y) in enumerate(profile.pairs):
        if x != y:
            continue
        ok = np.isfinite(profile.p_hat[i])
        if ok.sum() < 3:
            continue
        slope, _, _ = fit_loglog_slope(profile.t[ok], profile.p_hat[i, ok])
        slopes.append(slope)
        n_pts += int(ok.sum())
    if not slopes:
        return EstimateReport(
            name="ondiag-decay", estimate=float("nan"), stderr=float("inf"),
            n=0, seed=profile.seed, inconclusive=True,
        )
    slopes = np.asarray(slopes)
    stderr = float(slopes.std(ddof=1) / math.sqrt(slopes.size)) if slopes.size > 1 else float("inf")
    return EstimateReport(
        name="ondiag-decay",
        estimate=float(slopes.mean()),
        stderr=stderr,
        n=n_pts,
        seed=profile.seed,
        params={"slopes": [float(s) for s in slopes]},
    )


def _stretch_points(
    profile: HeatKernelProfile,
    pair_dist: dict[tuple[int, int], float],
    l_floor: float,
    l_cap: float = 9.0,
) -> tuple[list[float], list[float]]:
    """Regression points (log d^4/t, log log-ratio) for the stretch fit.

    Only log-ratios in [l_floor, l_cap] enter: below the floor the pair is in
    the diffusive bulk where the ratio is near 1 and its double log is noise;
    above the cap the target counts die out. The stretched form describes the
    suppression regime in between.
    """
    diag = {}
    for i, (x, y) in enumerate(profile.pairs):
        if x == y:
            diag[x] = profile.p_hat[i]
    xs, ys = [], []
    for i, (x, y) in enumerate(profile.pairs):
        if x == y or x not in diag:
            continue
        d = pair_dist.get((x, y))
        if d is None or d <= 0:
            continue
        for ti in range(profile.t.size):
            px = diag[x][ti]
            py = profile.p_hat[i, ti]
            if not (np.isfinite(px) and np.isfinite(py)) or py >= px:
                continue
            ratio = math.log(px / py)
            if not l_floor <= ratio <= l_cap:
                continue
            xs.append(math.log(d**4 / profile.t[ti]))
            ys.append(math.log(ratio))
    return xs, ys


def stretch_exponent_report(
    profile: HeatKernelProfile,
    pair_dist: dict[tuple[int, int], float],
    l_floor: float = 1.0,
    l_cap: float = 9.0,
) -> EstimateReport:
    """Stretch exponent s of the off-diagonal decay.

    Model: p_hat(x,y,t)/p_hat(x,x,t) = exp(-c (d^4/t)^s). Using the diagonal
    at the same t as reference cancels the on-diagonal prefactor, so s comes
    from regressing log log-ratio on log(d^4/t) over all valid (pair, t).
    """
    xs, ys = _stretch_points(profile, pair_dist, l_floor, l_cap)
    if len(xs) < 3:
        return EstimateReport(
            name="offdiag-stretch", estimate=float("nan"), stderr=float("inf"),
            n=len(xs), seed=profile.seed, inconclusive=True,
        )
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, _, _, _ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    dof = xs.size - 2
    sxx = float(np.sum((xs - xs.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 and sxx > 0 else float("inf")
    return EstimateReport(
        name="offdiag-stretch",
        estimate=float(coef[0]),
        stderr=stderr,
        n=xs.size,
        seed=profile.seed,
        params={"c": float(math.exp(coef[1])), "ci95": [float(coef[0] - 1.96 * stderr), float(coef[0] + 1.96 * stderr)]},
    )


def heat_kernel_reports(
    n: int = 1024,
    n_fields: int = 4,
    n_walks: int = 100_000,
    seed: int = 0,
    gamma: float = GAMMA,
    xi: float = XI,
    block: int = 8,
    n_times: int = 10,
    span: float = 1.5,
    spread_quantiles: Sequence[float] = (0.25, 0.4, 0.55, 0.7, 0.82, 0.9),
    n_pilot: int = 2000,
    l_floor: float = 1.0,
    l_cap: float = 9.0,
    hold: str = "exp",
) -> tuple[EstimateReport, EstimateReport]:
    """On-diagonal decay and off-diagonal stretch, pooled over fields.

    Per field: find the pre-mixing window, lay `n_times` times over `span`
    decades below it, start at a mass-typical vertex, and aim the off-diagonal
    pairs at quantiles of a pilot ensemble's metric displacement at the
    largest time, so the targets track the walk's actual spread.
    """
    g = stream(seed, "heat-reports", n)
    ondiag_slopes = []
    stretch_xs: list[float] = []
    stretch_ys: list[float] = []
    dropped = []
    for _ in range(n_fields):
        fseed = int(g.integers(0, 2**62))
        fld = sample_gff(n, periodic=True, seed=fseed)
        measure = gmc_mass(fld, gamma)
        metric = lfpp_metric(fld, xi)
        start = typical_start(measure, block)
        tmax = premixing_tmax(fld, measure, seed=fseed)
        times = np.geomspace(tmax / 10**span, tmax, n_times)
        dist_row = metric.distances_from(start)
        weights = holding_means(measure)
        pilot_g = stream(fseed, "heat-pilot", start)
        pilot_rec, _ = _record_ensemble(
            weights, n, start, np.array([times[-1]]), n_pilot, pilot_g, hold, 512, 40_000
        )
        spread = dist_row[pilot_rec[pilot_rec >= 0]]
        targets = [float(np.quantile(spread, q)) for q in spread_quantiles]
        pairs = [(start, start)] + stretch_pairs(metric, start, targets, dist_row, measure, block)
        prof = heat_kernel_profile(
            fld, measure, times, pairs, n_walks, seed=fseed, block=block, tmax=tmax, hold=hold
        )
        dropped.append(prof.dropped_frac)
        od = ondiag_decay_report(prof)
        if not od.inconclusive:
            ondiag_slopes.append(od.estimate)
        pair_dist = {(x, y): float(dist_row[y]) for x, y in pairs if x != y}
        xs, ys = _stretch_points(prof, pair_dist, l_floor, l_cap)
        stretch_xs.extend(xs)
        stretch_ys.extend(ys)
    if ondiag_slopes:
        arr = np.asarray(ondiag_slopes)
        ondiag = EstimateReport(
            name="ondiag-decay",
            estimate=float(arr.mean()),
            stderr=float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else float("inf"),
            n=arr.size,
            seed=seed,
            params={"n": n, "n_fields": n_fields, "n_walks": n_walks, "slopes": [float(s) for s in arr]},
        )
    else:
        ondiag = EstimateReport(
            name="ondiag-decay", estimate=float("nan"), stderr=float("inf"), n=0, seed=seed, inconclusive=True,
        )
    if len(stretch_xs) >= 3:
        xs = np.asarray(stretch_xs)
        ys = np.asarray(stretch_ys)
        A = np.vstack([xs, np.ones_like(xs)]).T
        coef, _, _, _ = np.linalg.lstsq(A, ys, rcond=None)
        resid = ys - A @ coef
        dof = xs.size - 2
        sxx = float(np.sum((xs - xs.mean()) ** 2))
        stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 and sxx > 0 else float("inf")
        stretch = EstimateReport(
            name="offdiag-stretch",
            estimate=float(coef[0]),
            stderr=stderr,
            n=xs.size,
            seed=seed,
            params={
                "n": n,
                "n_fields": n_fields,
                "n_walks": n_walks,
                "c": float(math.exp(coef[1])),
                "ci95": [float(coef[0] - 1.96 * stderr), float(coef[0] + 1.96 * stderr)],
                "l_floor": l_floor,
                "l_cap": l_cap,
                "mean_dropped_frac": float(np.mean(dropped)),
            },
        )
    else:
        stretch = EstimateReport(
            name="offdiag-stretch", estimate=float("nan"), stderr=float("inf"), n=len(stretch_xs), seed=seed,
            inconclusive=True,
        )
    return ondiag, stretch


# ---------------------------------------------------------------------------
# persistence


def save_field(path: str | Path, field: LatticeField, gamma: float = GAMMA, xi: float = XI) -> None:
    """Flat binary: magic, header (n, periodic, gamma, xi, seed), h, variance profile."""
    head = _FIELD_MAGIC + _FIELD_HEADER.pack(field.n, int(field.periodic), gamma, xi, field.seed)
    with open(path, "wb") as f:
        f.write(head)
        f.write(np.ascontiguousarray(field.h, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(field.var_profile, dtype="<f8").tobytes())


def load_field(path: str | Path) -> tuple[LatticeField, float, float]:
    """Read a field file back; returns (field, gamma, xi)."""
    raw = Path(path).read_bytes()
    head = len(_FIELD_MAGIC) + _FIELD_HEADER.size
    if len(raw) < head or raw[: len(_FIELD_MAGIC)] != _FIELD_MAGIC:
        raise ValueError(f"{path}: not a field file")
    n, periodic, gamma, xi, seed = _FIELD_HEADER.unpack(raw[len(_FIELD_MAGIC) : head])
    n_bytes = 8 * n * n
    if len(raw) != head + 2 * n_bytes:
        raise ValueError(f"{path}: truncated field file: expected {head + 2 * n_bytes} bytes, got {len(raw)}")
    h = np.frombuffer(raw, dtype="<f8", count=n * n, offset=head).reshape(n, n).copy()
    var = np.frombuffer(raw, dtype="<f8", count=n * n, offset=head + n_bytes).reshape(n, n).copy()
    return LatticeField(n=int(n), h=h, var_profile=var, periodic=bool(periodic), seed=int(seed)), gamma, xi


def write_exit_curve(path: str | Path, curve: ExitTimeCurve) -> None:
    lines = ["r,mean_exit_time,stderr,n_walks,n_censored"]
    for r, m, s, c in zip(curve.radii, curve.mean, curve.stderr, curve.n_censored):
        lines.append(f"{r:.12g},{m:.12g},{s:.12g},{curve.n_walks},{int(c)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_ball_mass_curve(path: str | Path, radii: Sequence[float], masses: Sequence[float]) -> None:
    lines = ["r,ball_mass"]
    for r, m in zip(radii, masses):
        lines.append(f"{float(r):.12g},{float(m):.12g}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_heat_profile(path: str | Path, profile: HeatKernelProfile) -> None:
    lines = ["x,y,t,p_hat,hits"]
    for i, (x, y) in enumerate(profile.pairs):
        for ti, t in enumerate(profile.t):
            p = profile.p_hat[i, ti]
            p_str = f"{p:.12g}" if np.isfinite(p) else "nan"
            lines.append(f"{x},{y},{t:.12g},{p_str},{int(profile.hits[i, ti])}")
    Path(path).write_text("\n".join(lines) + "\n")
