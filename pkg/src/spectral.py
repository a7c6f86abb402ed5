import logging
from concurrent.futures import ThreadPoolExecutor
from math import gcd
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize
from scipy.sparse import csgraph, csr_matrix

from config import (
    APERIODICITY_MARGIN, AUTOCOV_MAX_LAG, AUTOCOV_TRUNCATION, CURVATURE_STEPS,
    DEGENERATE_SIGMA2, PERIPHERAL_TOL, SIGMA_MC_PATHS, SIGMA_MC_STEPS, TRACKING_TOL,
)
from src.chain_model import require_centered
from src.errors import DegenerateError, EigenFailure, InconclusiveNearThreshold, TrackingLost
from src.lattice import TGroup
from src.models import (
    AperiodicityReport, CharOperator, EigenCurve, EigenSample, LatticeCertificate, MarkovChain,
)

logger = logging.getLogger(__name__)

SIGMA_METHODS = ('curvature', 'autocovariance', 'monte_carlo')


def _phases(chain: MarkovChain, ts) -> np.ndarray:
    return np.exp(1j * np.multiply.outer(np.asarray(ts, dtype=float), chain.labels))


def _q_stack(chain: MarkovChain, ts) -> np.ndarray:
    return chain.transition[None, :, :] * _phases(chain, ts)[:, None, :]


def q_operator(chain: MarkovChain, t: float) -> CharOperator:
    if not np.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    return CharOperator(t=float(t), entries=chain.transition * np.exp(1j * t * chain.labels)[None, :])


def _eigvals(matrix: np.ndarray) -> np.ndarray:
    try:
        return linalg.eigvals(matrix)
    except (linalg.LinAlgError, ValueError) as e:
        raise EigenFailure(f"dense eigensolver failed: {e}") from e


def spectral_radius(op: CharOperator) -> float:
    if op.entries.size == 0:
        return 0.0
    return float(np.abs(_eigvals(op.entries)).max())


def radius_scan(chain: MarkovChain, ts, workers: int = 1, chunk: int = 512) -> np.ndarray:
    """Spectral radius of Q(t) at every t, evaluated in stacked chunks"""
    ts = np.asarray(ts, dtype=float)
    chunks = [ts[i:i + chunk] for i in range(0, len(ts), chunk)]

    def _scan(part):
        try:
            return np.abs(np.linalg.eigvals(_q_stack(chain, part))).max(axis=1)
        except np.linalg.LinAlgError as e:
            raise EigenFailure(f"dense eigensolver failed on t in [{part[0]}, {part[-1]}]: {e}") from e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(_scan, chunks))
    else:
        parts = [_scan(part) for part in chunks]
    return np.concatenate(parts) if parts else np.empty(0)


def _eigen_system(matrix: np.ndarray):
    try:
        return linalg.eig(matrix, left=True, right=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise EigenFailure(f"dense eigensolver failed: {e}") from e


def _projection(vl: np.ndarray, vr: np.ndarray) -> np.ndarray:
    w = vl.conj()
    return np.outer(vr, w) / (w @ vr)


class _CurveTracker:
    """Follows one eigenvalue branch of Q(t) away from the Perron root at t=0"""

    def __init__(self, chain: MarkovChain):
        self.chain = chain
        vals, vl, vr = _eigen_system(chain.transition)
        idx = int(np.argmin(np.abs(vals - 1.0)))
        self.base_projection = _projection(vl[:, idx], vr[:, idx])
        self.origin = self._sample(0.0, vals, vl, vr, idx)

    def _sample(self, t, vals, vl, vr, idx) -> EigenSample:
        lam = complex(vals[idx])
        others = np.delete(np.abs(vals), idx)
        gap = abs(lam) - (others.max() if others.size else 0.0)
        deviation = np.linalg.norm(_projection(vl[:, idx], vr[:, idx]) - self.base_projection, 2)
        return EigenSample(t=float(t), re_lambda=lam.real, im_lambda=lam.imag,
                           gap=float(gap), proj_deviation=float(deviation))

    def follow(self, ts: Sequence[float]) -> List[EigenSample]:
        samples, history = [], [(0.0, self.origin.lam)]
        for t in ts:
            vals, vl, vr = _eigen_system(q_operator(self.chain, t).entries)
            if len(history) >= 2:
                (t0, l0), (t1, l1) = history[-2], history[-1]
                predicted = l1 + (l1 - l0) * (t - t1) / (t1 - t0)
            else:
                predicted = history[-1][1]
            distance = np.abs(vals - predicted)
            idx = int(np.argmin(distance))
            rivals = np.abs(np.delete(vals, idx) - vals[idx])
            if rivals.size and rivals.min() < TRACKING_TOL:
                raise TrackingLost(f"eigenvalues coalesce at t={t:.6g} (separation {rivals.min():.2e})")
            sample = self._sample(t, vals, vl, vr, idx)
            samples.append(sample)
            history.append((float(t), sample.lam))
        return samples


def leading_eigen_curve(chain: MarkovChain, t_grid: Sequence[float]) -> EigenCurve:
    ts = np.asarray(t_grid, dtype=float)
    if ts.size == 0 or np.any(np.diff(ts) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    zero = np.flatnonzero(ts == 0.0)
    if zero.size != 1:
        raise ValueError("t_grid must contain 0")
    i0 = int(zero[0])

    tracker = _CurveTracker(chain)
    forward = tracker.follow(ts[i0 + 1:])
    backward = tracker.follow(ts[:i0][::-1])
    logger.debug(f"Tracked leading eigenvalue over {ts.size} grid points")
    return EigenCurve(samples=backward[::-1] + [tracker.origin] + forward)


def symmetric_grid(t_max: float, t_step: float) -> np.ndarray:
    k = int(np.floor(t_max / t_step + 1e-9))
    return np.arange(-k, k + 1) * t_step


def _leading_near_one(chain: MarkovChain, t: float) -> complex:
    vals = _eigvals(q_operator(chain, t).entries)
    return complex(vals[int(np.argmin(np.abs(vals - 1.0)))])


def _sigma2_curvature(chain: MarkovChain) -> float:
    h1, h2 = CURVATURE_STEPS
    r = h1 / h2

    def second_difference(h):
        return (_leading_near_one(chain, h) - 2.0 + _leading_near_one(chain, -h)) / h ** 2

    richardson = (r ** 2 * second_difference(h2) - second_difference(h1)) / (r ** 2 - 1)
    return float(-richardson.real)


def _sigma2_autocovariance(chain: MarkovChain) -> float:
    nu, P = chain.stationary, chain.transition
    centered = chain.labels - nu @ chain.labels
    N = P - np.outer(np.ones(chain.size), nu)

    total = float(nu @ (centered * centered))
    Nk, vec = np.eye(chain.size), centered.astype(float)
    lag = 0
    while lag < AUTOCOV_MAX_LAG:
        lag += 1
        Nk = Nk @ N
        vec = N @ vec
        total += 2.0 * float(nu @ (centered * vec))
        if np.linalg.norm(Nk, 2) < AUTOCOV_TRUNCATION:
            break
    else:
        logger.warning(f"Autocovariance series truncated at lag {lag} before decaying")
    logger.debug(f"Autocovariance series summed over {lag} lags")
    return total


def sigma_squared(chain: MarkovChain, method: str = 'curvature', n: int = SIGMA_MC_STEPS,
                  paths: int = SIGMA_MC_PATHS, seed: int = 0, workers: int = 1) -> float:
    require_centered(chain, 'sigma_squared')
    if method == 'curvature':
        value = _sigma2_curvature(chain)
    elif method == 'autocovariance':
        value = _sigma2_autocovariance(chain)
    elif method == 'monte_carlo':
        from src.stats import sigma_squared_mc
        value, stderr = sigma_squared_mc(chain, n, paths, seed, workers)
        logger.info(f"Monte Carlo sigma^2 = {value:.6f} +/- {stderr:.6f}")
    else:
        raise ValueError(f"unknown sigma^2 method {method!r}; expected one of {SIGMA_METHODS}")

    if value < DEGENERATE_SIGMA2:
        raise DegenerateError(f"asymptotic variance {value:.3e} vanishes; labels form a coboundary")
    return value


def verify_peripheral_eigenvector(phi, tol: float = PERIPHERAL_TOL) -> bool:
    moduli = np.abs(np.asarray(phi, dtype=complex))
    top = moduli.max() if moduli.size else 0.0
    if top == 0:
        raise ValueError("phi must be nonzero")
    return bool((top - moduli.min()) / top <= tol)


def _complex_pairs(vector) -> List[Tuple[float, float]]:
    return [(float(z.real), float(z.imag)) for z in np.asarray(vector, dtype=complex)]


def _peripheral_pair(chain: MarkovChain, t: float) -> Tuple[complex, np.ndarray]:
    vals, vr = linalg.eig(q_operator(chain, t).entries)
    idx = int(np.argmax(np.abs(vals)))
    phi = vr[:, idx]
    anchor = phi[int(np.argmax(np.abs(phi)))]
    return complex(vals[idx]), phi / anchor


def strong_aperiodicity_numeric(chain: MarkovChain, delta: float = 0.1, grid_step: float = 1e-3,
                                margin: float = APERIODICITY_MARGIN, workers: int = 1,
                                certify: bool = False) -> AperiodicityReport:
    """Scan rho(Q(t)) over [delta, pi]; certify=True also attaches the exact lattice certificate"""
    if not 0 < delta < np.pi:
        raise ValueError(f"delta must lie in (0, pi), got {delta}")
    if not 0 < grid_step <= 1e-3:
        raise ValueError(f"grid_step must lie in (0, 1e-3], got {grid_step}")

    grid = np.arange(delta, np.pi, grid_step)
    grid = np.append(grid, np.pi)
    radii = radius_scan(chain, grid, workers=workers)

    best_t, best_r = float(grid[np.argmax(radii)]), float(radii.max())
    candidates = {int(np.argmax(radii))}
    for i in range(1, len(grid) - 1):
        if radii[i] >= radii[i - 1] and radii[i] >= radii[i + 1] and radii[i] > 1 - 10 * margin:
            candidates.add(i)

    for i in sorted(candidates):
        if i == 0 or i == len(grid) - 1:
            continue
        result = optimize.minimize_scalar(
            lambda t: -spectral_radius(q_operator(chain, t)),
            bounds=(grid[i - 1], grid[i + 1]), method='bounded', options={'xatol': 1e-10},
        )
        if -result.fun > best_r:
            best_t, best_r = float(result.x), float(-result.fun)
    logger.info(f"Spectral radius on [{delta}, pi]: sup {best_r:.12f} at t={best_t:.10f}")

    if 1 - margin <= best_r <= 1 - margin / 10:
        raise InconclusiveNearThreshold(
            f"sup spectral radius {best_r:.12f} within [1 - margin, 1 - margin/10]; run the exact test"
        )

    certificate = strong_aperiodicity_exact(chain)[1] if certify else None
    aperiodic = best_r < 1 - margin
    report = dict(is_strongly_aperiodic=aperiodic, sup_radius=best_r, margin=margin,
                  r_delta=best_r, exact_certificate=certificate)
    if not aperiodic:
        lam, phi = _peripheral_pair(chain, best_t)
        if not verify_peripheral_eigenvector(phi):
            logger.warning(f"Peripheral eigenvector at t={best_t:.10f} has non-constant modulus")
        report.update(witness_t=best_t, witness_lambda=(lam.real, lam.imag), witness_phi=_complex_pairs(phi))
    return AperiodicityReport(**report)


def _spanning_tree(chain: MarkovChain):
    adjacency = chain.transition > 0
    order, predecessors = csgraph.breadth_first_order(
        csr_matrix(adjacency), 0, directed=True, return_predecessors=True
    )
    depth = np.zeros(chain.size, dtype=np.int64)
    weight = np.zeros(chain.size, dtype=np.int64)
    for v in order[1:]:
        parent = predecessors[v]
        depth[v] = depth[parent] + 1
        weight[v] = weight[parent] + chain.states[v]
    return adjacency, predecessors, depth, weight


def cycle_rows(chain: MarkovChain) -> List[Tuple[int, int]]:
    """(W, -l) for the fundamental cycle of every non-tree edge"""
    adjacency, predecessors, depth, weight = _spanning_tree(chain)
    rows = []
    for x, y in zip(*np.nonzero(adjacency)):
        if predecessors[y] == x:
            continue
        w = chain.states[y] + int(weight[x]) - int(weight[y])
        length = 1 + int(depth[x]) - int(depth[y])
        rows.append((int(w), -length))
    return rows


def strong_aperiodicity_exact(chain: MarkovChain) -> Tuple[bool, LatticeCertificate]:
    rows = cycle_rows(chain)
    group = TGroup(rows)
    certificate = dict(cycle_rows=rows, invariant_factors=group.invariant_factors,
                       t_group_order=group.order, strongly_aperiodic=group.trivial)
    if not group.trivial:
        u, v = group.witness()
        t, theta = 2 * np.pi * float(u), 2 * np.pi * float(v)
        _, _, depth, weight = _spanning_tree(chain)
        phi = np.exp(1j * (theta * depth - t * weight))
        certificate.update(witness_t=t, witness_theta=theta, witness_phi=_complex_pairs(phi))
        logger.info(f"Chain is not strongly aperiodic: witness t={t:.10f}, theta={theta:.10f}")
    return group.trivial, LatticeCertificate(**certificate)


def lattice_span(chain: MarkovChain) -> int:
    """gcd of the fundamental cycle label sums"""
    span = 0
    for w, _ in cycle_rows(chain):
        span = gcd(span, abs(w))
    return span


def operator_power_decay(chain: MarkovChain, delta: float, n_values: Sequence[int],
                         grid_step: float = 1e-2) -> List[Tuple[int, float, float]]:
    """sup over t in [delta, pi] of ||Q(t)^n||_2 and its n-th root"""
    grid = np.append(np.arange(delta, np.pi, grid_step), np.pi)
    stack = _q_stack(chain, grid)
    table = []
    for n in n_values:
        norms = np.linalg.norm(np.linalg.matrix_power(stack, int(n)), ord=2, axis=(1, 2))
        sup = float(norms.max())
        table.append((int(n), sup, sup ** (1.0 / n) if n > 0 else 1.0))
    return table


def expansion_constants(curve: EigenCurve, t_max: float = 0.1) -> Tuple[float, float, float]:
    """(C1, C2, C3) with |lambda| <= 1 - C1 t^2, |Im lambda| <= C2 |t|^3 and
    proj_deviation <= C3 |t| on 0 < |t| <= t_max"""
    near = [s for s in curve.samples if 0 < abs(s.t) <= t_max]
    if not near:
        raise ValueError(f"curve has no samples with 0 < |t| <= {t_max}")
    c1 = min((1 - s.abs_lambda) / s.t ** 2 for s in near)
    c2 = max(abs(s.im_lambda) / abs(s.t) ** 3 for s in near)
    c3 = max(s.proj_deviation / abs(s.t) for s in near)
    return float(c1), float(c2), float(c3)


def is_non_arithmetic(chain: MarkovChain) -> bool:
    P = chain.transition
    if not np.allclose(P, P[0][None, :]):
        raise ValueError("non-arithmeticity is defined for i.i.d. chains (all rows of P equal)")
    support = chain.labels[P[0] > 0]
    span = 0
    for s in support:
        span = gcd(span, abs(int(s)))
    return span == 1


def characteristic_function(chain: MarkovChain, n: int, t_values, state: Optional[int] = None) -> np.ndarray:
    """E^mu exp(i t S_n), optionally restricted to the event X_n = state (a state index)"""
    ts = np.asarray(t_values, dtype=float)
    stack = _q_stack(chain, ts)
    vec = np.zeros((ts.size, chain.size), dtype=complex)
    if state is None:
        vec[:] = 1.0
    else:
        vec[:, state] = 1.0
    for _ in range(n):
        vec = np.einsum('kij,kj->ki', stack, vec)
    return (_phases(chain, ts) * vec) @ chain.initial
