import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from config import CHUNK_PATHS
from src.models import BrownianPath, MarkovChain, PathSample, StepFunction

logger = logging.getLogger(__name__)

T = TypeVar('T')

BROWNIAN_CHUNK = 100


def substream_seed(master_seed: int, *keys: int) -> int:
    return int(SeedSequence([master_seed, *keys]).generate_state(1, np.uint64)[0])


def path_seed(master_seed: int, index: int) -> int:
    """64-bit seed of path `index` in a batch drawn with `master_seed`"""
    return substream_seed(master_seed, index)


def generator(seed: int) -> Generator:
    return Generator(Philox(SeedSequence(seed)))


class _InverseCdf:
    def __init__(self, chain: MarkovChain):
        self.initial = np.cumsum(chain.initial)
        self.initial[-1] = 1.0
        self.rows = np.cumsum(chain.transition, axis=1)
        self.rows[:, -1] = 1.0
        self.last = chain.size - 1

    def start(self, u: np.ndarray) -> np.ndarray:
        return np.minimum((self.initial[None, :] <= u[:, None]).sum(axis=1), self.last)

    def step(self, current: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.minimum((self.rows[current] <= u[:, None]).sum(axis=1), self.last)


def _draw_indices(chain: MarkovChain, n: int, seeds: Sequence[int]) -> np.ndarray:
    """State indices X_0..X_n for each seed, one row per path"""
    uniforms = np.stack([generator(seed).random(n + 1) for seed in seeds]) if len(seeds) else np.empty((0, n + 1))
    cdf = _InverseCdf(chain)
    indices = np.empty((len(seeds), n + 1), dtype=np.int16)
    indices[:, 0] = cdf.start(uniforms[:, 0])
    for k in range(1, n + 1):
        indices[:, k] = cdf.step(indices[:, k - 1], uniforms[:, k])
    return indices


def sample_path(chain: MarkovChain, n: int, seed: int) -> PathSample:
    if n < 0:
        raise ValueError("n must be nonnegative")
    labels = chain.labels[_draw_indices(chain, n, [seed])[0]]
    return PathSample(seed=seed, states=labels, sums=np.cumsum(labels))


def simulate_chunks(chain: MarkovChain, n: int, paths: int, master_seed: int,
                    reducer: Callable[[np.ndarray, np.ndarray, np.ndarray], T],
                    workers: int = 1, chunk: int = CHUNK_PATHS) -> List[T]:
    """Run `reducer(seeds, states, sums)` over consecutive path chunks.

    Path i always uses the stream path_seed(master_seed, i), so the chunk
    results do not depend on the worker count.
    """
    bounds = [(lo, min(lo + chunk, paths)) for lo in range(0, paths, chunk)]

    def _run(bound):
        lo, hi = bound
        seeds = [path_seed(master_seed, i) for i in range(lo, hi)]
        states = chain.labels[_draw_indices(chain, n, seeds)]
        return reducer(np.asarray(seeds, dtype=np.uint64), states, np.cumsum(states, axis=1))

    logger.info(f"Simulating {paths} paths of length {n} in {len(bounds)} chunks")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_run, bounds))
    return [_run(bound) for bound in bounds]


def walk_process(path: PathSample) -> StepFunction:
    """W_n(t) = S_floor(nt) / sqrt(n) on [0, 1 + 1/n], breakpoints k/n"""
    n = path.n
    if n < 1:
        raise ValueError("walk process needs a path with at least one step")
    breakpoints = np.arange(1, n + 1) / n
    return StepFunction(a=0.0, b=1.0 + 1.0 / n, breakpoints=breakpoints, values=path.sums / np.sqrt(n))


def brownian_increments(sigma: float, mesh: int, seed: int) -> np.ndarray:
    return generator(seed).standard_normal(mesh) * (sigma / np.sqrt(mesh))


def brownian_path(sigma: float, mesh: int, seed: int) -> BrownianPath:
    if sigma <= 0 or mesh < 1:
        raise ValueError("sigma must be positive and mesh at least 1")
    values = np.concatenate(([0.0], np.cumsum(brownian_increments(sigma, mesh, seed))))
    return BrownianPath(sigma=sigma, mesh=mesh, values=values)


def _band_fraction(a: np.ndarray, b: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fraction of the linear segment from a to b spent inside [lo, hi]"""
    low, high = np.minimum(a, b), np.maximum(a, b)
    span = high - low
    overlap = np.clip(np.minimum(high, hi) - np.maximum(low, lo), 0.0, None)
    flat = span == 0
    inside = (low >= lo) & (low <= hi)
    return np.where(flat, inside.astype(float), overlap / np.where(flat, 1.0, span))


def band_local_time(values: np.ndarray, t: float, x: float, eps: float) -> np.ndarray:
    """(1/2eps) * time in {s <= t : |W(s) - x| <= eps} for each row of sampled path values"""
    if not 0 <= t <= 1 or eps <= 0:
        raise ValueError("need 0 <= t <= 1 and eps > 0")
    values = np.atleast_2d(values)
    mesh = values.shape[1] - 1
    lo, hi = x - eps, x + eps
    whole = int(np.floor(t * mesh))
    h = 1.0 / mesh

    occupied = _band_fraction(values[:, :whole], values[:, 1:whole + 1], lo, hi).sum(axis=1) * h
    remainder = t * mesh - whole
    if whole < mesh and remainder > 0:
        a = values[:, whole]
        b = a + (values[:, whole + 1] - a) * remainder
        occupied += _band_fraction(a, b, lo, hi) * remainder * h
    return occupied / (2 * eps)


def brownian_local_time(path: BrownianPath, t: float, x: float, eps: float) -> float:
    return float(band_local_time(path.values, t, x, eps)[0])


def brownian_local_time_samples(sigma: float, mesh: int, eps: float, points: Sequence, paths: int,
                                master_seed: int, workers: int = 1) -> np.ndarray:
    """Band local time at each (t, x) point for `paths` independent Brownian paths"""
    bounds = [(lo, min(lo + BROWNIAN_CHUNK, paths)) for lo in range(0, paths, BROWNIAN_CHUNK)]

    def _run(bound):
        lo, hi = bound
        values = np.stack([brownian_path(sigma, mesh, path_seed(master_seed, i)).values for i in range(lo, hi)])
        return np.column_stack([band_local_time(values, t, x, eps) for t, x in points])

    logger.info(f"Sampling {paths} Brownian reference paths at mesh {mesh}")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(_run, bounds))
    else:
        parts = [_run(bound) for bound in bounds]
    return np.vstack(parts) if parts else np.empty((0, len(points)))
