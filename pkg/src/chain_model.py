import json
import logging
from math import gcd
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.sparse import csgraph, csr_matrix

from config import DRIFT_TOL, MAX_LABEL, STATIONARY_TOL, STOCHASTIC_TOL
from src.errors import (
    BadDistributionError, ChainInvalid, DuplicateStateError, EigenFailure, LabelRangeError,
    NonStochasticError, NotCenteredError, PeriodicMatrixError, ReducibleError,
)
from src.models import MarkovChain
from src.validators import validate_chain_document

logger = logging.getLogger(__name__)


def validate_chain(states: Sequence[int], transition, initial) -> MarkovChain:
    states = tuple(int(s) for s in states)
    P = np.asarray(transition, dtype=float)
    mu = np.asarray(initial, dtype=float)
    size = len(states)

    if size == 0:
        raise ChainInvalid("chain needs at least one state")
    if P.shape != (size, size):
        raise ChainInvalid(f"transition matrix has shape {P.shape}, expected ({size}, {size})")
    if mu.shape != (size,):
        raise BadDistributionError(f"initial distribution has length {mu.size}, expected {size}")
    if len(set(states)) != size:
        raise DuplicateStateError(f"duplicate state labels in {states}")
    if max(abs(s) for s in states) > MAX_LABEL:
        raise LabelRangeError(f"state labels must satisfy |s| <= {MAX_LABEL}")

    if not np.all(np.isfinite(P)) or np.any(P < 0) or np.any(P > 1):
        raise NonStochasticError("transition entries must lie in [0, 1]")
    row_error = np.abs(P.sum(axis=1) - 1.0)
    if np.any(row_error > STOCHASTIC_TOL):
        bad = int(np.argmax(row_error))
        raise NonStochasticError(f"row {bad} (state {states[bad]}) sums to {P[bad].sum():.15g}")

    if not np.all(np.isfinite(mu)) or np.any(mu < 0) or np.any(mu > 1) or abs(mu.sum() - 1.0) > STOCHASTIC_TOL:
        raise BadDistributionError("initial distribution must be a probability vector")

    n_components, _ = csgraph.connected_components(csr_matrix(P > 0), directed=True, connection='strong')
    if n_components > 1:
        raise ReducibleError(f"transition graph has {n_components} strongly connected components")

    period = matrix_period(P)
    if period > 1:
        raise PeriodicMatrixError(f"transition matrix is periodic with period {period}")

    nu = _solve_stationary(P)
    logger.debug(f"Validated chain with states {states}, stationary {nu}")
    return MarkovChain(states=states, transition=P, initial=mu, stationary=nu)


def matrix_period(P: np.ndarray) -> int:
    """gcd of cycle lengths of the transition graph (assumed strongly connected)"""
    adjacency = np.asarray(P) > 0
    depth = csgraph.breadth_first_order(csr_matrix(adjacency), 0, directed=True, return_predecessors=False)
    level = np.full(adjacency.shape[0], -1, dtype=np.int64)
    level[0] = 0
    for u in depth:
        for v in np.flatnonzero(adjacency[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
    period = 0
    for u, v in zip(*np.nonzero(adjacency)):
        period = gcd(period, int(abs(level[u] + 1 - level[v])))
    return period


def _normalized(nu: np.ndarray) -> np.ndarray:
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def _stationary_residual(nu: np.ndarray, P: np.ndarray) -> float:
    return float(np.abs(nu @ P - nu).max())


def _solve_stationary(P: np.ndarray, refine_steps: int = 3, polish_steps: int = 1000) -> np.ndarray:
    size = P.shape[0]
    A = np.vstack([P.T - np.eye(size), np.ones((1, size))])
    b = np.zeros(size + 1)
    b[-1] = 1.0
    nu = _normalized(linalg.lstsq(A, b)[0])

    # iterative refinement of the least-squares solve, then power-iteration polish
    for _ in range(refine_steps):
        if _stationary_residual(nu, P) <= STATIONARY_TOL:
            return nu
        correction, *_ = linalg.lstsq(A, b - A @ nu)
        nu = _normalized(nu + correction)
    for _ in range(polish_steps):
        if _stationary_residual(nu, P) <= STATIONARY_TOL:
            return nu
        nu = _normalized(nu @ P)

    residual = _stationary_residual(nu, P)
    if residual > STATIONARY_TOL:
        raise EigenFailure(f"stationary residual {residual:.3e} stays above {STATIONARY_TOL:.0e} after refinement")
    return nu


def stationary_distribution(chain: MarkovChain) -> np.ndarray:
    return chain.stationary


def stationary_power_iteration(chain: MarkovChain, steps: int = 10_000, tol: float = 1e-14) -> np.ndarray:
    """Cross-check for the direct solve: iterate a uniform start vector under P"""
    P = chain.transition
    nu = np.full(chain.size, 1.0 / chain.size)
    for _ in range(steps):
        nxt = nu @ P
        if np.abs(nxt - nu).max() < tol:
            return nxt
        nu = nxt
    return nu


def mixing_residual(chain: MarkovChain, n: int) -> float:
    """Max-entry distance of P^n from the rank-one matrix with rows nu"""
    Pn = np.linalg.matrix_power(chain.transition, n)
    return float(np.abs(Pn - chain.stationary[None, :]).max())


def mean_drift(chain: MarkovChain) -> float:
    return float(chain.stationary @ chain.labels)


def require_centered(chain: MarkovChain, operation: str) -> None:
    drift = mean_drift(chain)
    if abs(drift) > DRIFT_TOL:
        raise NotCenteredError(f"{operation} needs a centered chain, stationary drift is {drift:.6g}")


def load_chain(path) -> MarkovChain:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ChainInvalid(f"cannot read chain file {path}: {e}") from e

    is_valid, error = validate_chain_document(document)
    if not is_valid:
        raise ChainInvalid(f"{path}: {error}")

    logger.info(f"Loading chain from {path}")
    return validate_chain(document['states'], document['transition'], document['initial'])
