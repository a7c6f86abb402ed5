import logging
from collections import defaultdict, deque
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from config import FOURIER_TOL, MAX_ENUMERATION_STEPS
from src.errors import NoReturnError, TooLargeError, UnderResolvedError
from src.models import JointLaw, LLTScan, MarkovChain, PeriodStructure
from src.spectral import characteristic_function, lattice_span, strong_aperiodicity_exact

logger = logging.getLogger(__name__)


def initial_law(chain: MarkovChain) -> JointLaw:
    labels = chain.labels
    low = int(labels.min())
    table = np.zeros((int(labels.max()) - low + 1, chain.size))
    table[labels - low, np.arange(chain.size)] = chain.initial
    return JointLaw(n=0, offset_min=low, table=table)


def evolve_law(law: JointLaw, chain: MarkovChain, prune: float = 0.0) -> JointLaw:
    """One Markov step of (S_n, X_n); entries below `prune` are dropped and counted"""
    if law.table.shape[1] != chain.size:
        raise ValueError(f"law has {law.table.shape[1]} states, chain has {chain.size}")
    labels = chain.labels
    low, high = int(labels.min()), int(labels.max())
    moved = law.table @ chain.transition

    rows = moved.shape[0]
    table = np.zeros((rows + high - low, chain.size))
    for j, s in enumerate(labels):
        shift = int(s) - low
        table[shift:shift + rows, j] = moved[:, j]

    pruned = law.pruned_mass
    if prune > 0:
        small = table < prune
        pruned += float(table[small].sum())
        table[small] = 0.0

    offset_min = law.offset_min + low
    live = np.flatnonzero(table.any(axis=1))
    if live.size:
        table = table[live[0]:live[-1] + 1]
        offset_min += int(live[0])
    return JointLaw(n=law.n + 1, offset_min=offset_min, table=table, pruned_mass=pruned)


def iterate_laws(chain: MarkovChain, n_max: int, prune: float = 0.0) -> Iterator[JointLaw]:
    law = initial_law(chain)
    yield law
    for _ in range(n_max):
        law = evolve_law(law, chain, prune)
        yield law


def law_at(chain: MarkovChain, n: int, prune: float = 0.0) -> JointLaw:
    law = None
    for law in iterate_laws(chain, n, prune):
        pass
    return law


def _probabilities(law: JointLaw, offsets, state_index: Optional[int]) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=np.int64)
    rows = offsets - law.offset_min
    inside = (rows >= 0) & (rows < law.table.shape[0])
    column = law.marginal() if state_index is None else law.table[:, state_index]
    out = np.zeros(offsets.shape)
    out[inside] = column[rows[inside]]
    return out


def llt_scan(chain: MarkovChain, n_max: int, fit_from: Optional[int] = None) -> LLTScan:
    """sqrt(n) * max_x P(S_n = x) for n = 1..n_max, with a trend slope over the last three quarters"""
    rows: List[Tuple[int, float]] = []
    for law in iterate_laws(chain, n_max):
        if law.n == 0:
            continue
        rows.append((law.n, float(np.sqrt(law.n) * law.marginal().max())))

    fit_from = fit_from if fit_from is not None else max(1, n_max // 4)
    tail = [(n, v) for n, v in rows if n >= fit_from]
    slope = float(stats.linregress(*zip(*tail)).slope) if len(tail) >= 3 else None

    aperiodic, _ = strong_aperiodicity_exact(chain)
    warning = None if aperiodic else "chain is not strongly aperiodic; values follow the live coset only"
    if warning:
        logger.warning(f"LLT scan: {warning}")
    c_emp = max(v for _, v in rows) if rows else 0.0
    return LLTScan(rows=rows, c_emp=c_emp, slope=slope, strongly_aperiodic=aperiodic, warning=warning)


def _signed_kernel_terms(chain: MarkovChain, x: int, ys: Sequence[int], state_index: Optional[int],
                         N: int, prune: float) -> np.ndarray:
    if N < 0:
        raise ValueError("N must be nonnegative")
    ys = np.asarray(ys, dtype=np.int64)
    terms = np.empty((N + 1, ys.size))
    law = None
    for law in iterate_laws(chain, N, prune):
        at_x = _probabilities(law, [x], state_index)[0]
        terms[law.n] = at_x - _probabilities(law, ys, state_index)
    if law.pruned_mass > 0:
        logger.info(f"Potential kernel run pruned mass {law.pruned_mass:.3e} over {N} steps")
    return terms


def potential_kernel_terms(chain: MarkovChain, x: int, ys: Sequence[int], state: Optional[int], N: int,
                           prune: float = 0.0) -> np.ndarray:
    """|P(S_n = x, X_n = s) - P(S_n = y, X_n = s)| for n = 0..N (rows) and each y (columns).

    state=None uses the state-marginal law of S_n.
    """
    state_index = None if state is None else chain.index_of(state)
    return np.abs(_signed_kernel_terms(chain, x, ys, state_index, N, prune))


def potential_kernel_sum(chain: MarkovChain, x: int, y: int, s: Optional[int], N: int,
                         prune: float = 0.0) -> float:
    if x == y:
        return 0.0
    return float(potential_kernel_terms(chain, x, [y], s, N, prune)[:, 0].sum())


def _nyquist(chain: MarkovChain, n: int) -> int:
    return 4 * (n + 1) * chain.max_label


def _quadrature_grid(quad_points: int) -> np.ndarray:
    return -np.pi + 2 * np.pi * np.arange(quad_points) / quad_points


def fourier_inversion_prob(chain: MarkovChain, n: int, x: int, quad_points: int,
                           state: Optional[int] = None) -> float:
    """P(S_n = x) (or P(S_n = x, X_n = state)) from the characteristic function.

    Periodic trapezoid rule on [-pi, pi); exact once the grid resolves the support.
    """
    if quad_points < max(1, _nyquist(chain, n)):
        raise UnderResolvedError(f"quad_points={quad_points} below {_nyquist(chain, n)} for n={n}")
    ts = _quadrature_grid(quad_points)
    state_index = None if state is None else chain.index_of(state)
    phi = characteristic_function(chain, n, ts, state_index)
    return float(np.mean(phi * np.exp(-1j * ts * x)).real)


def fourier_inversion_law(chain: MarkovChain, n: int, quad_points: Optional[int] = None,
                          state: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(offsets, probabilities) over the full support bound |x| <= (n+1) max|s|"""
    quad_points = quad_points or max(1, _nyquist(chain, n))
    if quad_points < _nyquist(chain, n):
        raise UnderResolvedError(f"quad_points={quad_points} below {_nyquist(chain, n)} for n={n}")
    reach = (n + 1) * chain.max_label
    offsets = np.arange(-reach, reach + 1)
    ts = _quadrature_grid(quad_points)
    state_index = None if state is None else chain.index_of(state)
    phi = characteristic_function(chain, n, ts, state_index)
    probs = (phi @ np.exp(-1j * np.multiply.outer(ts, offsets))).real / quad_points
    return offsets, probs


def fourier_dp_deviation(chain: MarkovChain, n: int) -> float:
    offsets, probs = fourier_inversion_law(chain, n)
    deviation = float(np.abs(probs - _probabilities(law_at(chain, n), offsets, None)).max())
    if deviation > FOURIER_TOL:
        logger.warning(f"Fourier inversion deviates from DP by {deviation:.3e} at n={n}")
    return deviation


def local_time_difference_law(chain: MarkovChain, n: int, x: int, y: int) -> Dict[int, float]:
    """Exact law of L_n(x) - L_n(y), merging paths on (state, S_k, running difference)"""
    if n > MAX_ENUMERATION_STEPS:
        raise TooLargeError(f"exact enumeration is limited to n <= {MAX_ENUMERATION_STEPS}, got {n}")

    def hit(total):
        return (total == x) - (total == y)

    layer: Dict[Tuple[int, int, int], float] = defaultdict(float)
    for i, s in enumerate(chain.states):
        if chain.initial[i] > 0:
            layer[(i, s, hit(s))] += float(chain.initial[i])

    P = chain.transition
    for _ in range(n):
        nxt: Dict[Tuple[int, int, int], float] = defaultdict(float)
        for (i, total, diff), p in layer.items():
            for j in np.flatnonzero(P[i]):
                moved = total + chain.states[j]
                nxt[(int(j), moved, diff + hit(moved))] += p * P[i, j]
        layer = nxt

    law: Dict[int, float] = defaultdict(float)
    for (_, _, diff), p in layer.items():
        law[diff] += p
    return dict(law)


def fourth_moment_exact(chain: MarkovChain, n: int, x: int, y: int) -> float:
    if x == y:
        if n > MAX_ENUMERATION_STEPS:
            raise TooLargeError(f"exact enumeration is limited to n <= {MAX_ENUMERATION_STEPS}, got {n}")
        return 0.0
    law = local_time_difference_law(chain, n, x, y)
    return float(sum(p * d ** 4 for d, p in law.items()))


def chebyshev_bound(chain: MarkovChain, n: int, x: float, y: float, eps: float) -> Tuple[float, float]:
    """(P(|t_n(x) - t_n(y)| > eps), E(t_n(x) - t_n(y))^4 / eps^4), both exact"""
    scale = np.sqrt(n)
    a, b = int(np.floor(scale * x)), int(np.floor(scale * y))
    law = local_time_difference_law(chain, n, a, b)
    tail = sum(p for d, p in law.items() if abs(d) / scale > eps)
    moment = sum(p * (d / scale) ** 4 for d, p in law.items())
    return float(tail), float(moment / eps ** 4)


def _zero_return_steps(chain: MarkovChain, max_steps: int) -> int:
    labels = chain.labels
    if np.all(labels > 0) or np.all(labels < 0):
        raise NoReturnError("all labels share one sign; increment sums never vanish")
    P = chain.transition > 0
    M = chain.max_label
    width = 2 * max_steps * M + 1
    reach = np.zeros((chain.size, width), dtype=bool)
    reach[chain.initial > 0, max_steps * M] = True
    for k in range(1, max_steps + 1):
        nxt = np.zeros_like(reach)
        for j, s in enumerate(labels):
            column = P[:, j]
            if not column.any():
                continue
            moved = reach[column].any(axis=0)
            nxt[j] = np.roll(moved, int(s))
        reach = nxt
        if reach[:, max_steps * M].any():
            return k
    raise NoReturnError(f"no zero increment sum within {max_steps} steps")


def _coset_offsets(chain: MarkovChain, period: int, modulus: int) -> List[List[int]]:
    P = chain.transition > 0
    start = {(i, int(s) % modulus, 0) for i, s in enumerate(chain.states) if chain.initial[i] > 0}
    seen, queue = set(start), deque(start)
    while queue:
        i, residue, phase = queue.popleft()
        for j in np.flatnonzero(P[i]):
            node = (int(j), (residue + chain.states[j]) % modulus, (phase + 1) % period)
            if node not in seen:
                seen.add(node)
                queue.append(node)
    cosets = [set() for _ in range(period)]
    for _, residue, phase in seen:
        cosets[phase].add(residue)
    return [sorted(c) for c in cosets]


def period_structure(chain: MarkovChain, max_steps: Optional[int] = None) -> PeriodStructure:
    """Lattice span and period, counting increments X_1..X_k (S_0 = X_0 excluded)"""
    span = lattice_span(chain)
    if span == 0:
        logger.warning("All cycle label sums vanish; treating the lattice span as 1")
        span = 1
    max_steps = max_steps or 2 * chain.size * (2 * chain.max_label + 1)
    period = _zero_return_steps(chain, max_steps)

    relabel = None
    if span > 1 and all(s % span == 0 for s in chain.states):
        relabel = [s // span for s in chain.states]
    structure = PeriodStructure(lattice_span=span, period=period,
                                coset_offsets=_coset_offsets(chain, period, period * span),
                                relabel=relabel)
    logger.info(f"Period structure: span {span}, period {period}")
    return structure


def periodic_potential_kernel_sum(chain: MarkovChain, x: int, y: int, N_blocks: int,
                                  prune: float = 0.0) -> float:
    return float(periodic_potential_kernel_terms(chain, x, [y], N_blocks, prune)[:, 0].sum())


def periodic_potential_kernel_terms(chain: MarkovChain, x: int, ys: Sequence[int], N_blocks: int,
                                    prune: float = 0.0) -> np.ndarray:
    """|sum over one period block of P(S=x) - P(S=y)| per block (rows) and y (columns)"""
    period = period_structure(chain).period
    P = chain.transition
    if period > 1 and not np.allclose(P, P[0][None, :]):
        logger.warning(f"Periodic kernel sum assumes i.i.d. rows when the period is {period}")
    terms = _signed_kernel_terms(chain, x, ys, None, (N_blocks + 1) * period - 1, prune)
    blocks = terms.reshape(N_blocks + 1, period, -1).sum(axis=1)
    return np.abs(blocks)
