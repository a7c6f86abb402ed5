import csv
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from config import (
    FOURIER_TOL, KERNEL_SLOPE_TOL, LLT_SLOPE_TOL, MOMENT_SLOPE_TOL, SIGMA_AGREEMENT_TOL, TOOL_VERSION,
)
from src.chain_model import load_chain, mean_drift
from src.errors import (
    ConfigInvalid, InconclusiveNearThreshold, NoReturnError, NotCenteredError, NotStronglyAperiodic,
)
from src.exact_law import (
    chebyshev_bound, fourier_dp_deviation, fourth_moment_exact, llt_scan, period_structure,
    periodic_potential_kernel_terms, potential_kernel_terms,
)
from src.local_time import density_difference, normalized_profile
from src.models import AperiodicityReport, BoundReport, ExperimentConfig, MarkovChain, PathSample, RatioRow
from src.sampler import simulate_chunks, substream_seed, walk_process
from src.spectral import (
    expansion_constants, leading_eigen_curve, operator_power_decay, sigma_squared,
    strong_aperiodicity_exact, strong_aperiodicity_numeric, symmetric_grid,
)
from src.stats import convergence_report, fourth_moment_mc, sigma_squared_mc, tightness_report

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_INPUT, EXIT_BOUND = 0, 1, 2


def _slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(set(xs)) < 2:
        return 0.0
    return float(np.polyfit(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), 1)[0])


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out = Path(config.out)
        self.chain: MarkovChain = None
        self.chain_document: Dict = {}
        logger.info(f"ExperimentRunner initialized for '{config.command}' -> {self.out}")

    def run(self) -> int:
        started = time.perf_counter()
        if self.out.exists():
            raise ConfigInvalid(f"output directory {self.out} already exists")

        if self.config.command != 'report':
            self.chain = load_chain(self.config.chain_file)
            self.chain_document = self.chain.to_document()

        pipeline = getattr(self, f"_{self.config.command}")
        self.out.mkdir(parents=True)
        passed = pipeline()
        code = EXIT_PASS if passed else EXIT_BOUND

        self._write_json('manifest.json', {
            'tool_version': TOOL_VERSION,
            'command': self.config.command,
            'config_hash': self.config_hash(),
            'seed': self.config.seed,
            'wall_time_seconds': round(time.perf_counter() - started, 3),
            'verdict': 'pass' if passed else 'fail',
            'exit_code': code,
            'config': self.config.model_dump(mode='json'),
        })
        logger.info(f"Pipeline '{self.config.command}' finished with exit code {code}")
        return code

    def config_hash(self) -> str:
        payload = {
            'config': self.config.model_dump(mode='json', exclude={'out', 'workers'}),
            'chain': self.chain_document,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def _write_json(self, name: str, payload) -> None:
        (self.out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n')

    def _write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
        with open(self.out / name, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)

    # analyze

    def _aperiodicity(self) -> AperiodicityReport:
        cfg = self.config
        try:
            return strong_aperiodicity_numeric(self.chain, cfg.delta, cfg.grid_step, cfg.margin, cfg.workers,
                                               certify=True)
        except InconclusiveNearThreshold as e:
            logger.warning(f"{e}; falling back to the exact lattice test")
            aperiodic, certificate = strong_aperiodicity_exact(self.chain)
            return AperiodicityReport(is_strongly_aperiodic=aperiodic, sup_radius=float('nan'),
                                      margin=cfg.margin, r_delta=float('nan'),
                                      exact_certificate=certificate)

    def _analyze(self) -> bool:
        cfg = self.config
        curve = leading_eigen_curve(self.chain, symmetric_grid(np.pi, cfg.t_step))
        self._write_csv('eigen_curve.csv', ['t', 're_lambda', 'im_lambda', 'abs_lambda', 'gap', 'proj_deviation'],
                        curve.csv_rows())

        report = self._aperiodicity()
        self._write_json('aperiodicity.json', report.model_dump(mode='json'))

        analysis = {
            'drift': mean_drift(self.chain),
            'stationary': self.chain.stationary.tolist(),
            'operator_power_decay': operator_power_decay(self.chain, cfg.delta, [1, 10, 100]),
        }
        agree = True
        try:
            c1, c2, c3 = expansion_constants(curve)
            analysis['expansion_constants'] = {'C1': c1, 'C2': c2, 'C3': c3}
            analysis['sigma2'] = self._sigma2_triangulation()
            agree = analysis['sigma2']['max_relative_deviation'] <= SIGMA_AGREEMENT_TOL
        except NotCenteredError as e:
            logger.warning(f"Skipping variance analysis: {e}")
        try:
            analysis['period_structure'] = period_structure(self.chain).model_dump(mode='json')
        except NoReturnError as e:
            logger.warning(f"Skipping period structure: {e}")
        self._write_json('analysis.json', analysis)
        return agree

    def _sigma2_triangulation(self) -> Dict:
        cfg = self.config
        curvature = sigma_squared(self.chain, 'curvature')
        autocovariance = sigma_squared(self.chain, 'autocovariance')
        monte_carlo, stderr = sigma_squared_mc(self.chain, cfg.sigma_mc_n, cfg.sigma_mc_paths,
                                               substream_seed(cfg.seed, 3), cfg.workers)
        deviation = max(abs(v - curvature) / curvature for v in (autocovariance, monte_carlo))
        if deviation > SIGMA_AGREEMENT_TOL:
            logger.warning(f"sigma^2 methods disagree by {deviation:.2%} "
                           f"(Monte Carlo {monte_carlo:.6f} +/- {stderr:.6f}, curvature {curvature:.6f})")
        return {
            'curvature': curvature,
            'autocovariance': autocovariance,
            'monte_carlo': monte_carlo,
            'monte_carlo_stderr': stderr,
            'monte_carlo_n': cfg.sigma_mc_n,
            'monte_carlo_paths': cfg.sigma_mc_paths,
            'max_relative_deviation': deviation,
        }

    # simulate

    def _simulate(self) -> bool:
        cfg = self.config
        full = cfg.full

        def reducer(seeds, states, sums):
            rows = []
            for seed, path_states, path_sums in zip(seeds, states, sums):
                if full:
                    rows += [[int(seed), k, int(s), int(total)]
                             for k, (s, total) in enumerate(zip(path_states, path_sums))]
                else:
                    rows.append([int(seed), int(path_sums[-1]), int(path_sums.min()), int(path_sums.max()),
                                 int(np.count_nonzero(path_sums == 0))])
            return rows

        chunks = simulate_chunks(self.chain, cfg.n, cfg.paths, cfg.seed, reducer, cfg.workers)
        rows = [row for chunk in chunks for row in chunk]
        if full:
            self._write_csv('trajectories.csv', ['seed', 'k', 'state', 'sum'], rows)
        else:
            self._write_csv('paths.csv', ['seed', 'final_sum', 'min_sum', 'max_sum', 'visits_to_zero'], rows)
        return True

    # verify

    def _verify(self) -> bool:
        aperiodic, certificate = strong_aperiodicity_exact(self.chain)
        if not aperiodic:
            raise NotStronglyAperiodic(
                f"Lemma \"Aperiodicity\" fails: Q(t) has a unimodular eigenvalue at t={certificate.witness_t:.6f}"
            )
        reports = [self._verify_llt(), self._verify_kernel(), self._verify_moment4()]
        fourier_ok = self._verify_fourier()
        chebyshev_ok = self._verify_chebyshev()
        self._write_json('reports.json', [r.model_dump(mode='json') for r in reports])
        return all(r.passed for r in reports) and fourier_ok and chebyshev_ok

    def _verify_llt(self) -> BoundReport:
        scan = llt_scan(self.chain, self.config.llt_n_max)
        self._write_csv('llt.csv', ['n', 'sup_scaled_prob'], scan.rows)
        ratios = [RatioRow(parameters={'n': n}, ratio=v) for n, v in scan.rows]
        slope = scan.slope if scan.slope is not None else 0.0
        return BoundReport.build('llt', ratios, slope, (-LLT_SLOPE_TOL, LLT_SLOPE_TOL))

    def _verify_kernel(self) -> BoundReport:
        cfg = self.config
        ys = np.arange(1, cfg.kernel_max_distance + 1)
        terms = potential_kernel_terms(self.chain, 0, ys, None, cfg.kernel_steps, cfg.kernel_prune)
        sums = terms.sum(axis=0)
        rows = [[0, int(y), float(s), float(s / y)] for y, s in zip(ys, sums)]

        structure = period_structure(self.chain)
        if structure.period > 1:
            blocks = max(1, cfg.kernel_steps // structure.period)
            periodic = periodic_potential_kernel_terms(self.chain, 0, ys, blocks, cfg.kernel_prune).sum(axis=0)
            self._write_csv('periodic_kernel.csv', ['x', 'y', 'partial_sum', 'ratio'],
                            [[0, int(y), float(s), float(s / y)] for y, s in zip(ys, periodic)])
        self._write_csv('kernel.csv', ['x', 'y', 'partial_sum', 'ratio'], rows)

        ratios = [RatioRow(parameters={'x': 0, 'y': int(y)}, ratio=float(s / y)) for y, s in zip(ys, sums)]
        return BoundReport.build('potential_kernel', ratios, _slope(ys, [r.ratio for r in ratios]),
                                 (-np.inf, KERNEL_SLOPE_TOL), notes={'tail_term': float(terms[-1].max())})

    def _verify_moment4(self) -> BoundReport:
        cfg = self.config
        rows, ratios, mismatches = [], [], 0
        for n in cfg.moment_exact_n:
            for d in range(1, cfg.moment_max_distance + 1):
                value = fourth_moment_exact(self.chain, n, 0, d)
                rows.append([n, 0, d, 'exact', value, value / (n * d ** 2)])
                ratios.append(RatioRow(parameters={'n': n, 'distance': d}, ratio=value / (n * d ** 2)))
                estimate, stderr = fourth_moment_mc(self.chain, n, 0, d, cfg.moment_paths,
                                                    substream_seed(cfg.seed, 4, n, d), cfg.workers)
                if abs(estimate - value) > 3 * stderr + 1e-12:
                    mismatches += 1
        for n in cfg.moment_mc_n:
            d = 1
            while d * d <= n:
                estimate, _ = fourth_moment_mc(self.chain, n, 0, d, cfg.moment_paths,
                                               substream_seed(cfg.seed, 5, n, d), cfg.workers)
                rows.append([n, 0, d, 'mc', estimate, estimate / (n * d ** 2)])
                ratios.append(RatioRow(parameters={'n': n, 'distance': d}, ratio=estimate / (n * d ** 2)))
                d *= 2
        self._write_csv('moment4.csv', ['n', 'x', 'y', 'exact_or_mc', 'value', 'ratio'], rows)

        mc_rows = [r for r in rows if r[3] == 'mc']
        slope = _slope([r[0] for r in mc_rows], [r[5] for r in mc_rows])
        report = BoundReport.build('fourth_moment', ratios, slope, (-np.inf, MOMENT_SLOPE_TOL),
                                   notes={'mc_exact_mismatches': mismatches})
        if mismatches:
            logger.warning(f"{mismatches} Monte Carlo fourth moments fall outside 3 SE of the exact value")
            return report.model_copy(update={'verdict': 'fail'})
        return report

    def _verify_fourier(self) -> bool:
        rows = [[n, fourier_dp_deviation(self.chain, n)] for n in range(self.config.fourier_n_max + 1)]
        self._write_csv('fourier.csv', ['n', 'max_abs_deviation'], rows)
        return all(dev < FOURIER_TOL for _, dev in rows)

    def _verify_chebyshev(self) -> bool:
        cfg = self.config
        rows = []
        for n in cfg.moment_exact_n:
            scale = np.sqrt(n)
            for d in range(1, cfg.moment_max_distance + 1):
                # cell midpoint so that floor(sqrt(n) y) lands on site d
                y = (d + 0.5) / scale
                tail, bound = chebyshev_bound(self.chain, n, 0.0, y, cfg.tightness_eps)
                rows.append([n, 0.0, y, cfg.tightness_eps, tail, bound])
        self._write_csv('chebyshev.csv', ['n', 'x', 'y', 'eps', 'exact_tail', 'moment_bound'], rows)
        return all(tail <= bound + 1e-12 for *_, tail, bound in rows)

    # converge

    def _converge(self) -> bool:
        cfg = self.config
        report = convergence_report(self.chain, cfg.n_values, cfg.eval_points, cfg.paths, cfg.seed,
                                    cfg.reference_paths, cfg.mesh, cfg.eps, cfg.window, cfg.tail_levels,
                                    cfg.workers)
        self._write_csv('ks.csv', ['n', 't', 'x', 'ks_reference', 'ks_half_normal', 'out_of_range'],
                        [[r.n, r.t, r.x, r.ks_reference, '' if r.ks_half_normal is None else r.ks_half_normal,
                          int(r.out_of_range)] for r in report.rows])
        self._write_csv('tail.csv', ['n', 'level', 'probability'],
                        [[r.n, r.level, r.probability] for r in report.tail])

        tightness = tightness_report(self.chain, cfg.n_values, cfg.deltas, cfg.tightness_eps, cfg.paths,
                                     cfg.seed, cfg.window, cfg.workers)
        self._write_csv('tightness.csv', ['n', 'delta', 'probability_over_delta'],
                        [[int(r.parameters['n']), r.parameters['delta'], r.ratio] for r in tightness.ratios])

        violations = self._occupation_check()
        self._write_json('converge.json', {
            'convergence': report.model_dump(mode='json'),
            'tightness': tightness.model_dump(mode='json'),
            'occupation_violations': violations,
        })
        return report.passed and tightness.passed and violations == 0

    def _occupation_check(self) -> int:
        """Per-path density-difference inequality on a grid of [a, b) windows"""
        cfg = self.config
        edges = np.linspace(-3.0, 3.0, 21)
        windows = list(zip(edges[:-1], edges[1:]))
        table: List[List] = []
        total = 0
        for n in cfg.n_values:
            def reducer(seeds, states, sums):
                worst = np.full(len(windows), -np.inf)
                count = np.zeros(len(windows), dtype=int)
                for seed, path_states, path_sums in zip(seeds, states, sums):
                    path = PathSample(seed=int(seed), states=path_states, sums=path_sums)
                    walk, profile = walk_process(path), normalized_profile(path, n, 1.0)
                    for k, (a, b) in enumerate(windows):
                        gap, bound = density_difference(walk, profile, a, b)
                        worst[k] = max(worst[k], gap - bound)
                        count[k] += gap > bound + 1e-12
                return worst, count

            parts = simulate_chunks(self.chain, n, cfg.occupation_paths, substream_seed(cfg.seed, 6, n), reducer,
                                    cfg.workers)
            worst = np.max([p[0] for p in parts], axis=0)
            count = np.sum([p[1] for p in parts], axis=0)
            total += int(count.sum())
            table += [[n, float(a), float(b), int(c), float(w)] for (a, b), c, w in zip(windows, count, worst)]
        self._write_csv('occupation.csv', ['n', 'a', 'b', 'violations', 'max_gap_minus_bound'], table)
        return total

    # report

    def _report(self) -> bool:
        merged, lines, all_passed = {}, [], True
        for run_dir in map(Path, self.config.inputs):
            manifest = json.loads((run_dir / 'manifest.json').read_text())
            reports = {p.name: json.loads(p.read_text()) for p in sorted(run_dir.glob('*.json'))
                       if p.name != 'manifest.json'}
            merged[str(run_dir)] = {'manifest': manifest, 'reports': reports}
            all_passed &= manifest.get('verdict') == 'pass'
            lines.append((str(run_dir), manifest['command'], manifest['verdict'], manifest['config_hash'][:12]))

        self._write_json('merged.json', merged)
        header = ('run', 'command', 'verdict', 'config_hash')
        widths = [max(len(str(row[i])) for row in [header] + lines) for i in range(len(header))]
        text = '\n'.join('  '.join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip()
                         for row in [header] + lines)
        (self.out / 'summary.txt').write_text(text + '\n')
        return all_passed
