import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import KS_PASS, MOMENT_SLOPE_TOL, REFERENCE_EPS, REFERENCE_MESH
from src.errors import NotStronglyAperiodic
from src.local_time import profile_values, window_profile_stats
from src.models import (
    BoundReport, ConvergenceReport, EmpiricalDistribution, KSRow, MarkovChain, RatioRow, TailRow,
)
from src.sampler import brownian_local_time_samples, simulate_chunks, substream_seed

logger = logging.getLogger(__name__)

MIN_MC_PATHS = 1000


def ks_distance(emp: EmpiricalDistribution, cdf: Callable) -> float:
    """sup |F_emp - cdf|, checking both sides of every sample point"""
    xs = np.unique(emp.samples)
    right_gap = np.abs(emp.cdf(xs) - cdf(xs))
    left_gap = np.abs(emp.left_cdf(xs) - cdf(np.nextafter(xs, -np.inf)))
    return float(max(right_gap.max(), left_gap.max()))


def ks_two_sample(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    return float(stats.ks_2samp(a.samples, b.samples).statistic)


def kolmogorov_quantile(count: int, level: float) -> float:
    return float(stats.kstwo(count).ppf(level))


def half_normal_reference(sigma: float) -> Callable:
    """cdf of |N(0,1)| / sigma"""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return stats.halfnorm(scale=1.0 / sigma).cdf


def _jackknife_mean(values: np.ndarray) -> Tuple[float, float]:
    count = values.size
    total = values.sum()
    leave_one_out = (total - values) / (count - 1)
    spread = ((leave_one_out - leave_one_out.mean()) ** 2).sum()
    return float(total / count), float(np.sqrt((count - 1) / count * spread))


def fourth_moment_mc(chain: MarkovChain, n: int, x: int, y: int, paths: int, seed: int,
                     workers: int = 1) -> Tuple[float, float]:
    """Monte Carlo E[(L_n(x) - L_n(y))^4] with a jackknife standard error"""
    if paths < MIN_MC_PATHS:
        raise ValueError(f"fourth_moment_mc needs at least {MIN_MC_PATHS} paths")
    if x == y:
        return 0.0, 0.0

    def reducer(_, __, sums):
        window = sums[:, :n + 1]
        diff = np.count_nonzero(window == x, axis=1) - np.count_nonzero(window == y, axis=1)
        return diff.astype(float) ** 4

    values = np.concatenate(simulate_chunks(chain, n, paths, seed, reducer, workers))
    return _jackknife_mean(values)


def sigma_squared_mc(chain: MarkovChain, n: int, paths: int, seed: int,
                     workers: int = 1) -> Tuple[float, float]:
    """Var(S_n) / n over simulated paths, with the standard error of the variance"""
    finals = np.concatenate(simulate_chunks(chain, n, paths, seed, lambda _, __, sums: sums[:, -1], workers))
    centered = finals - finals.mean()
    variance = centered.var(ddof=1)
    m4 = (centered ** 4).mean()
    stderr = np.sqrt(max(m4 - variance ** 2, 0.0) / finals.size)
    return float(variance / n), float(stderr / n)


def _window(chain: MarkovChain, m: Optional[float]) -> Tuple[float, float]:
    from src.spectral import sigma_squared
    sigma2 = sigma_squared(chain, 'curvature')
    return sigma2, (3 * np.sqrt(sigma2) if m is None else m)


def _window_samples(chain: MarkovChain, n: int, m: float, deltas: Sequence[float], paths: int,
                    seed: int, workers: int) -> Tuple[np.ndarray, np.ndarray]:
    parts = simulate_chunks(chain, n, paths, seed,
                            lambda _, __, sums: window_profile_stats(sums, n, m, deltas), workers)
    return np.concatenate([p[0] for p in parts]), np.vstack([p[1] for p in parts])


def tightness_report(chain: MarkovChain, n_list: Sequence[int], delta_list: Sequence[float], eps: float,
                     paths: int, seed: int, m: Optional[float] = None, workers: int = 1) -> BoundReport:
    """P(modulus of t_n on [-m, m] at delta >= eps) per (n, delta)"""
    if any(not 0 < d < 0.5 for d in delta_list):
        raise ValueError("deltas must lie in (0, 1/2)")
    _, m = _window(chain, m)
    deltas = sorted(delta_list)

    ratios = []
    probs = stderrs = None
    for n in sorted(n_list):
        _, moduli = _window_samples(chain, n, m, deltas, paths, substream_seed(seed, 2, n), workers)
        exceed = moduli >= eps
        probs = exceed.mean(axis=0)
        stderrs = np.sqrt(probs * (1 - probs) / paths)
        for d, p in zip(deltas, probs):
            ratios.append(RatioRow(parameters={'n': n, 'delta': d}, ratio=float(p / d)))
        logger.info(f"Tightness n={n}: exceedance {np.round(probs, 4).tolist()}")

    # the linear-in-delta bound needs the largest-n probabilities nondecreasing in delta
    if len(deltas) >= 2:
        slope = stats.linregress(deltas, probs).slope
        floor = -2 * float(stderrs.max()) / (deltas[-1] - deltas[0])
    else:
        slope, floor = 0.0, 0.0
    return BoundReport.build('tightness', ratios, slope, (floor, np.inf),
                             notes={'window': m, 'eps': eps, 'paths': paths})


def chebyshev_report(chain: MarkovChain, n: int, pairs: Sequence[Tuple[float, float]], eps: float,
                     paths: int, seed: int, workers: int = 1) -> BoundReport:
    """P(|t_n(x) - t_n(y)| > eps) * eps^4 / |x - y|^2 across pairs"""
    def reducer(_, __, sums):
        return np.column_stack([profile_values(sums, n, 1.0, x) - profile_values(sums, n, 1.0, y)
                                for x, y in pairs])

    diffs = np.vstack(simulate_chunks(chain, n, paths, seed, reducer, workers))
    ratios = []
    for (x, y), column in zip(pairs, diffs.T):
        prob = float(np.mean(np.abs(column) > eps))
        ratios.append(RatioRow(parameters={'n': n, 'x': x, 'y': y}, ratio=prob * eps ** 4 / (x - y) ** 2))
    distances = [abs(x - y) for x, y in pairs]
    slope = stats.linregress(distances, [r.ratio for r in ratios]).slope if len(set(distances)) > 1 else 0.0
    return BoundReport.build('chebyshev', ratios, slope, (-np.inf, MOMENT_SLOPE_TOL), notes={'eps': eps})


def convergence_report(chain: MarkovChain, n_list: Sequence[int], eval_points: Sequence[Tuple[float, float]],
                       paths: int, seed: int, reference_paths: Optional[int] = None, mesh: int = REFERENCE_MESH,
                       eps: float = REFERENCE_EPS, m: Optional[float] = None, tail_levels: Sequence[float] = (),
                       workers: int = 1) -> ConvergenceReport:
    """KS distance of l_n(t, x) samples to a Brownian local-time reference, per n and (t, x)"""
    from src.spectral import strong_aperiodicity_exact
    aperiodic, certificate = strong_aperiodicity_exact(chain)
    if not aperiodic:
        raise NotStronglyAperiodic(
            f"convergence needs a strongly aperiodic chain; witness t={certificate.witness_t:.6f}"
        )
    sigma2, m = _window(chain, m)
    sigma = float(np.sqrt(sigma2))
    reference_paths = reference_paths or paths

    reference = brownian_local_time_samples(sigma, mesh, eps, eval_points, reference_paths,
                                            substream_seed(seed, 1), workers)
    half_normal = half_normal_reference(sigma)

    rows, tail, headline = [], [], []
    for n in sorted(n_list):
        def reducer(_, __, sums):
            values = np.column_stack([profile_values(sums, n, t, x) for t, x in eval_points])
            sups = window_profile_stats(sums, n, m, ())[0] if tail_levels else np.empty(0)
            return values, sups

        parts = simulate_chunks(chain, n, paths, substream_seed(seed, 0, n), reducer, workers)
        samples = np.vstack([p[0] for p in parts])
        sups = np.concatenate([p[1] for p in parts])
        for k, (t, x) in enumerate(eval_points):
            emp = EmpiricalDistribution(samples=samples[:, k])
            ks_ref = ks_two_sample(emp, EmpiricalDistribution(samples=reference[:, k]))
            ks_half = ks_distance(emp, half_normal) if (t, x) == (1.0, 0.0) else None
            out_of_range = abs(x) > chain.max_label * (n + 1) / np.sqrt(n)
            if out_of_range:
                logger.warning(f"Evaluation point x={x} is unreachable at n={n}")
            if ks_half is not None:
                headline.append(ks_half)
            rows.append(KSRow(n=n, t=t, x=x, ks_reference=ks_ref, ks_half_normal=ks_half,
                              out_of_range=bool(out_of_range)))
        if tail_levels:
            tail += [TailRow(n=n, level=a, probability=float(np.mean(sups >= a))) for a in tail_levels]
        logger.info(f"Convergence n={n}: KS {[round(r.ks_reference, 4) for r in rows[-len(eval_points):]]}")

    noise = kolmogorov_quantile(paths, 0.95)
    monotone = all(later <= earlier + noise for earlier, later in zip(headline, headline[1:]))
    passed = (not headline or headline[-1] < KS_PASS) and monotone
    return ConvergenceReport(sigma2=sigma2, window=m, rows=rows, tail=tail, monotone=monotone,
                             verdict='pass' if passed else 'fail')
