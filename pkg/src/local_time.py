import logging
from math import ceil, floor
from typing import Optional, Tuple

import numpy as np

from src.errors import DomainMismatch
from src.models import LocalTimeProfile, PathSample, StepFunction

logger = logging.getLogger(__name__)


def local_time_count(path: PathSample, n: int, x: int) -> int:
    if not 0 <= n <= path.n:
        raise ValueError(f"n={n} outside the path horizon {path.n}")
    return int(np.count_nonzero(path.sums[:n + 1] == x))


def normalized_profile(path: PathSample, n: int, t: float) -> LocalTimeProfile:
    """l_n(t, x) = L_floor(nt)(floor(sqrt(n) x)) / sqrt(n)"""
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    steps = int(floor(n * t))
    if steps > path.n:
        raise ValueError(f"profile needs {steps} steps, path has {path.n}")
    sites, counts = np.unique(path.sums[:steps + 1], return_counts=True)
    return LocalTimeProfile(n=n, t=t, counts={int(s): int(c) for s, c in zip(sites, counts)})


def profile_step_function(profile: LocalTimeProfile, lo: Optional[float] = None,
                          hi: Optional[float] = None) -> StepFunction:
    """Profile as a step function in x on [lo, hi]; defaults pad the occupied cells by one cell"""
    scale = profile.scale
    sites = sorted(profile.counts)
    lo = (sites[0] - 1) / scale if lo is None else lo
    hi = (sites[-1] + 2) / scale if hi is None else hi
    first, last = int(floor(scale * lo)), int(ceil(scale * hi))
    cells = np.arange(first + 1, last)
    edges = cells / scale
    inside = (edges > lo) & (edges < hi)
    cells = np.concatenate(([first], cells[inside]))
    values = np.array([profile.counts.get(int(c), 0) for c in cells]) / scale
    return StepFunction(a=lo, b=hi, breakpoints=edges[inside], values=values)


def occupation_measure(walk: StepFunction, a: float, b: float, horizon: float = 1.0) -> float:
    """Lebesgue measure of {t in [walk.a, horizon] : walk(t) in [a, b)}"""
    if a > b:
        raise ValueError("need a <= b")
    if a == b:
        return 0.0
    edges = walk.edges
    lengths = np.clip(np.minimum(edges[1:], horizon) - edges[:-1], 0.0, None)
    hit = (walk.values >= a) & (walk.values < b)
    return float(lengths[hit].sum())


def profile_integral(profile: LocalTimeProfile, a: float, b: float) -> float:
    if a > b:
        raise ValueError("need a <= b")
    scale = profile.scale
    sites = np.array(list(profile.counts), dtype=float)
    heights = np.array(list(profile.counts.values()), dtype=float) / scale
    overlap = np.clip(np.minimum((sites + 1) / scale, b) - np.maximum(sites / scale, a), 0.0, None)
    return float((heights * overlap).sum())


def boundary_cell_bound(profile: LocalTimeProfile, a: float, b: float) -> float:
    """Integral of the profile over the two cells holding a and b"""
    return (profile.value_at(a) + profile.value_at(b)) / profile.scale


def density_difference(walk: StepFunction, profile: LocalTimeProfile, a: float, b: float,
                       horizon: Optional[float] = None) -> Tuple[float, float]:
    """(|occupation - profile integral|, boundary-cell bound) on [a, b).

    With the default horizon 1 + 1/n the bound holds exactly; horizon 1 loses one step of time.
    """
    horizon = walk.b if horizon is None else horizon
    gap = abs(occupation_measure(walk, a, b, horizon) - profile_integral(profile, a, b))
    return gap, boundary_cell_bound(profile, a, b)


class _RangeExtrema:
    """Sparse tables for max/min of values over index ranges [i, j]"""

    def __init__(self, values: np.ndarray):
        self.maxima, self.minima = [values], [values]
        width = 1
        while 2 * width <= len(values):
            prev_max, prev_min = self.maxima[-1], self.minima[-1]
            self.maxima.append(np.maximum(prev_max[:-width], prev_max[width:]))
            self.minima.append(np.minimum(prev_min[:-width], prev_min[width:]))
            width *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        level = np.floor(np.log2(hi - lo + 1)).astype(int)
        top, bottom = np.empty(lo.shape), np.empty(lo.shape)
        for k in np.unique(level):
            sel = level == k
            right = hi[sel] - (1 << k) + 1
            top[sel] = np.maximum(self.maxima[k][lo[sel]], self.maxima[k][right])
            bottom[sel] = np.minimum(self.minima[k][lo[sel]], self.minima[k][right])
        return top, bottom


def modulus(f: StepFunction, delta: float) -> float:
    """sup of |f(s) - f(t)| over |s - t| < delta"""
    if delta <= 0:
        raise ValueError("delta must be positive")
    values, edges = f.values, f.edges
    if len(values) == 1:
        return 0.0
    starts = np.arange(len(values))
    # piece j is reachable from piece i when it starts less than delta after piece i ends
    reach = np.searchsorted(edges[:-1], edges[1:] + delta, side='left') - 1
    reach = np.maximum(reach, starts)
    top, bottom = _RangeExtrema(values).query(starts, reach)
    return float(np.max(np.maximum(top - values, values - bottom)))


def _sparse_feasible(values: np.ndarray, edges: np.ndarray, delta: float, tau: float) -> bool:
    """Whether a partition with gaps > delta and every interval oscillation <= tau exists"""
    k = len(values)
    a, b = edges[0], edges[-1]
    earliest = np.full(k, np.inf)
    earliest[0] = a
    for start in range(k):
        f = earliest[start]
        if not np.isfinite(f):
            continue
        top = bottom = values[start]
        for j in range(start, k):
            top, bottom = max(top, values[j]), min(bottom, values[j])
            if top - bottom > tau:
                break
            if j == k - 1 and b - f > delta:
                return True
            if j > start:
                position = max(edges[j], f + delta)
                if position < edges[j + 1]:
                    earliest[j] = min(earliest[j], position)
            if j + 1 < k and edges[j + 1] - f > delta:
                earliest[j + 1] = min(earliest[j + 1], edges[j + 1])
    return False


def modulus_sparse(f: StepFunction, delta: float) -> float:
    """inf over partitions with gaps > delta of the largest interval oscillation.

    Cuts may sit at a jump or inside a piece; a threshold search over the
    pairwise value differences decides the infimum exactly.
    """
    length = f.b - f.a
    if not 0 < delta < length / 2:
        raise ValueError(f"delta must lie in (0, {length / 2}), got {delta}")
    values, edges = f.values, f.edges
    thresholds = np.unique(np.abs(np.subtract.outer(values, values)))
    lo, hi = 0, len(thresholds) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _sparse_feasible(values, edges, delta, thresholds[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(thresholds[lo])


def sup_distance(f: StepFunction, g: StepFunction, window: Tuple[float, float]) -> float:
    lo, hi = window
    if lo > hi:
        raise ValueError("window must satisfy lo <= hi")
    for h in (f, g):
        if h.a > lo or h.b < hi:
            raise DomainMismatch(f"step function on [{h.a}, {h.b}] does not cover [{lo}, {hi}]")
    cuts = np.union1d(f.breakpoints, g.breakpoints)
    points = np.concatenate(([lo], cuts[(cuts > lo) & (cuts < hi)], [hi]))
    return float(np.abs(f(points) - g(points)).max())


def profile_values(sums: np.ndarray, n: int, t: float, x: float) -> np.ndarray:
    """l_n(t, x) for every row of a batch of partial sums"""
    steps = int(floor(n * t))
    site = int(floor(np.sqrt(n) * x))
    return np.count_nonzero(sums[:, :steps + 1] == site, axis=1) / np.sqrt(n)


def _site_counts(row: np.ndarray, n: int) -> Tuple[int, np.ndarray]:
    low = int(row[:n + 1].min())
    return low, np.bincount(row[:n + 1] - low)


def window_profile_stats(sums: np.ndarray, n: int, m: float, deltas) -> Tuple[np.ndarray, np.ndarray]:
    """Per path: sup of t_n on [-m, m] and its modulus on [-m, m] at each delta"""
    scale = np.sqrt(n)
    sups = np.empty(sums.shape[0])
    moduli = np.empty((sums.shape[0], len(deltas)))
    for r, row in enumerate(sums):
        low, counts = _site_counts(row, n)
        profile = LocalTimeProfile(n=n, t=1.0, counts={low + i: int(c) for i, c in enumerate(counts) if c})
        f = profile_step_function(profile, -m, m)
        sups[r] = f.values.max()
        moduli[r] = [modulus(f, d) for d in deltas]
    logger.debug(f"Window statistics over {sums.shape[0]} paths at n={n}, scale {scale:.1f}")
    return sups, moduli
