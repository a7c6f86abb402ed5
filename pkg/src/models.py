from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import (
    CONVERGE_PATHS, OCCUPATION_PATHS, REFERENCE_EPS, REFERENCE_MESH, SIGMA_MC_PATHS, SIGMA_MC_STEPS,
)


def _readonly(value, dtype) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class MarkovChain(_ArrayModel):
    states: Tuple[int, ...]
    transition: np.ndarray
    initial: np.ndarray
    stationary: np.ndarray

    @field_validator('transition', 'initial', 'stationary', mode='before')
    @classmethod
    def _as_float_array(cls, v):
        return _readonly(v, float)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self.states, dtype=np.int64)

    @property
    def max_label(self) -> int:
        return int(np.max(np.abs(self.labels)))

    def index_of(self, label: int) -> int:
        return self.states.index(label)

    def to_document(self) -> dict:
        return {
            'states': list(self.states),
            'transition': self.transition.tolist(),
            'initial': self.initial.tolist(),
        }


class CharOperator(_ArrayModel):
    t: float
    entries: np.ndarray

    @field_validator('entries', mode='before')
    @classmethod
    def _as_complex_array(cls, v):
        return _readonly(v, complex)


class EigenSample(BaseModel):
    t: float
    re_lambda: float
    im_lambda: float
    gap: float
    proj_deviation: float

    @property
    def lam(self) -> complex:
        return complex(self.re_lambda, self.im_lambda)

    @property
    def abs_lambda(self) -> float:
        return abs(self.lam)


class EigenCurve(BaseModel):
    samples: List[EigenSample]

    def at(self, t: float) -> EigenSample:
        return min(self.samples, key=lambda s: abs(s.t - t))

    def csv_rows(self) -> List[List[float]]:
        return [[s.t, s.re_lambda, s.im_lambda, s.abs_lambda, s.gap, s.proj_deviation]
                for s in self.samples]


class LatticeCertificate(BaseModel):
    cycle_rows: List[Tuple[int, int]]
    invariant_factors: List[int]
    t_group_order: int = Field(description="order of the reachable t-group mod 2π; 0 means a continuum")
    strongly_aperiodic: bool
    witness_t: Optional[float] = None
    witness_theta: Optional[float] = None
    witness_phi: Optional[List[Tuple[float, float]]] = None


class AperiodicityReport(BaseModel):
    is_strongly_aperiodic: bool
    sup_radius: float
    margin: float
    witness_t: Optional[float] = None
    witness_lambda: Optional[Tuple[float, float]] = None
    witness_phi: Optional[List[Tuple[float, float]]] = None
    r_delta: float
    exact_certificate: Optional[LatticeCertificate] = None


class JointLaw(_ArrayModel):
    n: int
    offset_min: int
    table: np.ndarray
    pruned_mass: float = 0.0

    @field_validator('table', mode='before')
    @classmethod
    def _as_table(cls, v):
        return _readonly(v, float)

    @property
    def offset_max(self) -> int:
        return self.offset_min + self.table.shape[0] - 1

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.offset_min, self.offset_max + 1)

    @property
    def total_mass(self) -> float:
        return float(self.table.sum())

    def marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def probability(self, offset: int, state_index: Optional[int] = None) -> float:
        row = offset - self.offset_min
        if row < 0 or row >= self.table.shape[0]:
            return 0.0
        if state_index is None:
            return float(self.table[row].sum())
        return float(self.table[row, state_index])


class PeriodStructure(BaseModel):
    lattice_span: int = Field(ge=1)
    period: int = Field(ge=1)
    coset_offsets: List[List[int]]
    relabel: Optional[List[int]] = None


class LLTScan(BaseModel):
    rows: List[Tuple[int, float]]
    c_emp: float
    slope: Optional[float] = None
    strongly_aperiodic: bool
    warning: Optional[str] = None


class PathSample(_ArrayModel):
    seed: int
    states: np.ndarray
    sums: np.ndarray

    @field_validator('states', 'sums', mode='before')
    @classmethod
    def _as_int_array(cls, v):
        return _readonly(v, np.int64)

    @property
    def n(self) -> int:
        return len(self.states) - 1


class BrownianPath(_ArrayModel):
    sigma: float = Field(gt=0)
    mesh: int = Field(ge=1)
    values: np.ndarray

    @field_validator('values', mode='before')
    @classmethod
    def _as_values(cls, v):
        return _readonly(v, float)


class StepFunction(_ArrayModel):
    """Right-continuous piecewise constant function on [a, b].

    Piece i covers [edge_i, edge_{i+1}) where the edges are a, the breakpoints
    and b; the last piece also holds at b.
    """
    a: float
    b: float
    breakpoints: np.ndarray
    values: np.ndarray

    @field_validator('breakpoints', 'values', mode='before')
    @classmethod
    def _as_arrays(cls, v):
        return _readonly(v, float)

    def model_post_init(self, __context) -> None:
        if not self.a < self.b:
            raise ValueError(f"empty domain [{self.a}, {self.b}]")
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("piece count must equal breakpoint count + 1")
        if len(self.breakpoints):
            if np.any(np.diff(self.breakpoints) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
            if self.breakpoints[0] <= self.a or self.breakpoints[-1] >= self.b:
                raise ValueError("breakpoints must lie inside (a, b)")

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate(([self.a], self.breakpoints, [self.b]))

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    def piece_index(self, x) -> np.ndarray:
        return np.searchsorted(self.breakpoints, x, side='right')

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < self.a) | (x > self.b)):
            raise ValueError(f"evaluation outside [{self.a}, {self.b}]")
        return self.values[self.piece_index(x)]

    def left_limit(self, x):
        x = np.asarray(x, dtype=float)
        return self.values[np.searchsorted(self.breakpoints, x, side='left')]

    def csv_rows(self) -> List[List[float]]:
        edges = self.edges
        return [[float(edges[i]), float(edges[i + 1]), float(v)] for i, v in enumerate(self.values)]


class LocalTimeProfile(BaseModel):
    n: int = Field(ge=1)
    t: float = Field(ge=0, le=1)
    counts: Dict[int, int]

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.n))

    def value_at(self, x: float) -> float:
        site = int(np.floor(self.scale * x))
        return self.counts.get(site, 0) / self.scale

    @property
    def mass(self) -> int:
        return sum(self.counts.values())


class EmpiricalDistribution(_ArrayModel):
    samples: np.ndarray

    @field_validator('samples', mode='before')
    @classmethod
    def _sorted(cls, v):
        arr = np.sort(np.asarray(v, dtype=float).ravel())
        if arr.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        return _readonly(arr, float)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def cdf(self, x):
        return np.searchsorted(self.samples, x, side='right') / self.count

    def left_cdf(self, x):
        return np.searchsorted(self.samples, x, side='left') / self.count


class RatioRow(BaseModel):
    parameters: Dict[str, float]
    ratio: float


class BoundReport(BaseModel):
    lemma_id: str
    ratios: List[RatioRow]
    c_emp: float
    trend_slope: float
    slope_bounds: Tuple[float, float]
    verdict: str
    notes: Dict[str, float] = Field(default_factory=dict)

    @classmethod
    def build(cls, lemma_id: str, ratios: List[RatioRow], trend_slope: float,
              slope_bounds: Tuple[float, float], notes: Optional[Dict[str, float]] = None) -> 'BoundReport':
        values = [r.ratio for r in ratios]
        finite = bool(values) and all(np.isfinite(values)) and bool(np.isfinite(trend_slope))
        lo, hi = slope_bounds
        verdict = 'pass' if finite and lo <= trend_slope <= hi else 'fail'
        return cls(
            lemma_id=lemma_id,
            ratios=ratios,
            c_emp=float(max(values)) if values else float('nan'),
            trend_slope=float(trend_slope),
            slope_bounds=(float(lo), float(hi)),
            verdict=verdict,
            notes=notes or {},
        )

    @property
    def passed(self) -> bool:
        return self.verdict == 'pass'


class KSRow(BaseModel):
    n: int
    t: float
    x: float
    ks_reference: float
    ks_half_normal: Optional[float] = None
    out_of_range: bool = False


class TailRow(BaseModel):
    n: int
    level: float
    probability: float


class ConvergenceReport(BaseModel):
    sigma2: float
    window: float
    rows: List[KSRow]
    tail: List[TailRow]
    monotone: bool
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == 'pass'


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: str
    chain_file: Optional[Path] = None
    seed: int
    out: Path
    workers: int = Field(default=1, ge=1)

    # analyze
    t_step: float = 0.01
    delta: float = 0.1
    grid_step: float = 1e-3
    margin: float = 1e-6
    sigma_mc_n: int = Field(default=SIGMA_MC_STEPS, ge=1)
    sigma_mc_paths: int = Field(default=SIGMA_MC_PATHS, ge=2)

    # simulate
    n: int = 1000
    paths: int = 1000
    full: bool = False

    # verify
    llt_n_max: int = 2000
    kernel_steps: int = 20_000
    kernel_max_distance: int = 30
    kernel_prune: float = 1e-300
    fourier_n_max: int = 50
    moment_exact_n: List[int] = Field(default_factory=lambda: [4, 8, 12])
    moment_mc_n: List[int] = Field(default_factory=lambda: [100, 1000, 10_000])
    moment_paths: int = 2000
    moment_max_distance: int = 6

    # converge
    n_values: List[int] = Field(default_factory=lambda: [100, 1000, 10_000])
    eval_points: List[Tuple[float, float]] = Field(default_factory=lambda: [(1.0, 0.0), (0.5, 0.0), (1.0, 0.5)])
    reference_paths: int = 10_000
    occupation_paths: int = Field(default=OCCUPATION_PATHS, ge=1)
    mesh: int = REFERENCE_MESH
    eps: float = REFERENCE_EPS
    deltas: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1])
    tightness_eps: float = 0.5
    tail_levels: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    window: Optional[float] = None

    # report
    inputs: List[Path] = Field(default_factory=list)

    @model_validator(mode='before')
    @classmethod
    def _command_paths(cls, data):
        # converge samples t_n(0) at acceptance scale unless told otherwise
        if isinstance(data, dict) and data.get('paths') is None:
            data = {**data, 'paths': CONVERGE_PATHS if data.get('command') == 'converge' else 1000}
        return data

    @field_validator('moment_exact_n', 'moment_mc_n', 'n_values', 'eval_points', 'deltas', 'tail_levels')
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("list parameters must be nonempty")
        return v
