from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import csv
import logging

import numpy as np

from ..exceptions import DimensionError, SingularMatrixError
from ..model.system import CostFunctional, UncertainSystem, check_compatible
from ..model.uncertainty import expand_delta_batch, sample_delta_batch
from ..monitoring.metrics import MetricsCollector

BOUND_REL_TOL = 1e-6
BOUND_ABS_TOL = 1e-9
LYAPUNOV_TOL = 1e-7
CI95_Z = 1.96


class X0Mode(str, Enum):
    GAUSSIAN = "gaussian"
    FIXED = "fixed"


@dataclass
class SimConfig:
    """Monte Carlo protocol: run count, horizon, seed and initial-state law."""
    runs: int = 5000
    horizon: int = 200
    seed: int = 0
    x0_mode: str = X0Mode.GAUSSIAN.value
    x0: Optional[Tuple[float, ...]] = None
    record_trajectories: bool = False
    chunk_size: int = 500
    workers: int = 1

    def __post_init__(self):
        self.x0_mode = X0Mode(self.x0_mode).value
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")
        if self.x0_mode == X0Mode.FIXED.value:
            if self.x0 is None:
                raise ValueError("x0_mode 'fixed' requires an x0 vector")
            self.x0 = tuple(float(v) for v in self.x0)
            if not np.all(np.isfinite(self.x0)):
                raise ValueError("x0 must be finite")

    def to_dict(self) -> dict:
        return {
            'runs': self.runs,
            'horizon': self.horizon,
            'seed': self.seed,
            'x0_mode': self.x0_mode,
            'x0': list(self.x0) if self.x0 is not None else None,
        }


@dataclass
class BoundSummary:
    checked: int
    violations: int
    worst_ratio: float

    def to_dict(self) -> dict:
        return {'checked': self.checked, 'violations': self.violations, 'worst_ratio': self.worst_ratio}


@dataclass
class SimulationReport:
    """Per-run costs and the aggregated effective cost."""
    per_run_costs: np.ndarray
    x0_samples: np.ndarray
    max_state_norm: float
    diverged_runs: int
    lyapunov_violations: Optional[int] = None
    bound: Optional[BoundSummary] = None
    bound_ok: Optional[np.ndarray] = None
    trajectories: Optional[List[np.ndarray]] = None
    elapsed: float = 0.0
    config: Optional[SimConfig] = None

    @property
    def finite_costs(self) -> np.ndarray:
        return self.per_run_costs[np.isfinite(self.per_run_costs)]

    @property
    def effective_cost(self) -> float:
        costs = self.finite_costs
        return float(np.mean(costs)) if costs.size else float("inf")

    @property
    def ci95_halfwidth(self) -> float:
        costs = self.finite_costs
        if costs.size < 2:
            return 0.0
        return float(CI95_Z * np.std(costs, ddof=1) / np.sqrt(costs.size))

    @property
    def bound_violations(self) -> Optional[int]:
        return self.bound.violations if self.bound is not None else None

    def to_dict(self) -> dict:
        return {
            'effective_cost': self.effective_cost,
            'ci95_halfwidth': self.ci95_halfwidth,
            'runs': int(self.per_run_costs.size),
            'diverged_runs': self.diverged_runs,
            'max_state_norm': self.max_state_norm,
            'bound_violations': self.bound_violations,
            'lyapunov_violations': self.lyapunov_violations,
            'bound': self.bound.to_dict() if self.bound else None,
            'config': self.config.to_dict() if self.config else None,
            'elapsed_s': self.elapsed,
        }


@dataclass
class _ChunkResult:
    costs: np.ndarray
    x0: np.ndarray
    max_norm: float
    lyapunov_violations: int
    trajectories: List[np.ndarray] = field(default_factory=list)


def check_bound(report: SimulationReport, p: np.ndarray,
                x0_samples: Optional[np.ndarray] = None) -> BoundSummary:
    """
    Count runs with J > x0'Px0 (1 + 1e-6) + 1e-9. Diverged runs count as
    violations.
    """
    x0_samples = report.x0_samples if x0_samples is None else np.asarray(x0_samples, dtype=float)
    if x0_samples.shape[0] != report.per_run_costs.size:
        raise DimensionError(
            f"{x0_samples.shape[0]} initial states for {report.per_run_costs.size} runs"
        )
    bounds = np.einsum('ri,ij,rj->r', x0_samples, p, x0_samples)
    limit = bounds * (1.0 + BOUND_REL_TOL) + BOUND_ABS_TOL
    ok = report.per_run_costs <= limit
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = np.where(bounds > 0, report.per_run_costs / bounds, 0.0)
    worst = float(np.max(ratios)) if ratios.size else 0.0
    report.bound_ok = ok
    report.bound = BoundSummary(
        checked=int(ok.size),
        violations=int(np.count_nonzero(~ok)),
        worst_ratio=worst
    )
    return report.bound


class MonteCarloRunner:
    """
    Closed-loop Monte Carlo estimator of the expected cost.

    Each run i draws from its own generator seeded with (seed, i): first the
    initial state, then one uncertainty realization per step. Runs are
    simulated in vectorized chunks, optionally on a thread pool, and
    reassembled by run index.
    """

    def __init__(self, sys: UncertainSystem, cost: CostFunctional, k: np.ndarray):
        check_compatible(sys, cost)
        k = np.asarray(k, dtype=float)
        if k.shape != (sys.n_u, sys.n_y):
            raise DimensionError(f"K has shape {k.shape}, expected ({sys.n_u}, {sys.n_y})")
        self.sys = sys
        self.cost = cost
        self.k = k
        self._czbar = sys.cz - sys.dzu @ k @ sys.cy
        self._dzwbar = sys.dzw - sys.dzu @ k @ sys.dyw
        self.logger = logging.getLogger("simulation")
        self.metrics = MetricsCollector()

    def _initial_state(self, rng: np.random.Generator, cfg: SimConfig) -> np.ndarray:
        if cfg.x0_mode == X0Mode.FIXED.value:
            return np.asarray(cfg.x0, dtype=float)
        return rng.standard_normal(self.sys.n_x)

    def _draw_chunk(self, indices: Sequence[int], cfg: SimConfig) -> Tuple[np.ndarray, np.ndarray]:
        """Initial states (B, n_x) and expanded Delta draws (B, H, n_p, n_q)."""
        sys = self.sys
        x0 = np.zeros((len(indices), sys.n_x))
        deltas = np.zeros((len(indices), cfg.horizon, sys.n_p, sys.n_q))
        for row, i in enumerate(indices):
            rng = np.random.default_rng([cfg.seed, i])
            x0[row] = self._initial_state(rng, cfg)
            if sys.structure and cfg.horizon:
                batch = sample_delta_batch(sys.structure, rng, cfg.horizon)
                deltas[row] = expand_delta_batch(sys.structure, batch)
        return x0, deltas

    def _disturbance(self, delta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Batched fixed point w = Delta z with z = C-bar_z x + D-bar_z^w w."""
        z0 = x @ self._czbar.T
        if not np.any(self._dzwbar):
            return np.einsum('bpq,bq->bp', delta, z0)
        m = np.eye(self.sys.n_q)[None] - self._dzwbar[None] @ delta
        try:
            z = np.linalg.solve(m, z0[..., None])[..., 0]
        except np.linalg.LinAlgError as e:
            raise SingularMatrixError(
                "I - D_z^w Delta is singular for a sampled realization", condition=float("inf")
            ) from e
        return np.einsum('bpq,bq->bp', delta, z)

    def _run_chunk(self, indices: Sequence[int], cfg: SimConfig,
                   certificate: Optional[np.ndarray]) -> _ChunkResult:
        sys, cost, k = self.sys, self.cost, self.k
        x, deltas = self._draw_chunk(indices, cfg)
        x0 = x.copy()
        size = len(indices)
        total = np.zeros(size)
        compensation = np.zeros(size)
        alive = np.ones(size, dtype=bool)
        max_norm = float(np.max(np.linalg.norm(x, axis=1))) if size else 0.0
        lyapunov = 0
        recorded = []

        with np.errstate(over='ignore', invalid='ignore'):
            for t in range(cfg.horizon):
                w = self._disturbance(deltas[:, t], x)
                y = x @ sys.cy.T + w @ sys.dyw.T
                u = -y @ k.T
                stage = (
                    np.einsum('bi,ij,bj->b', x, cost.q, x)
                    + 2.0 * np.einsum('bi,ij,bj->b', x, cost.n, u)
                    + np.einsum('bi,ij,bj->b', u, cost.r, u)
                )
                x_next = x @ sys.a.T + w @ sys.bw.T + u @ sys.bu.T

                if certificate is not None:
                    decrease = (
                        np.einsum('bi,ij,bj->b', x_next, certificate, x_next)
                        - np.einsum('bi,ij,bj->b', x, certificate, x)
                        + stage
                    )
                    slack = LYAPUNOV_TOL * (1.0 + np.sum(x * x, axis=1))
                    lyapunov += int(np.count_nonzero(alive & (decrease > slack)))

                if cfg.record_trajectories:
                    steps = np.full((size, 1), float(t))
                    recorded.append(np.hstack([steps, x, u, stage[:, None]]))

                # Kahan-compensated accumulation
                term = stage - compensation
                updated = total + term
                compensation = (updated - total) - term
                total = updated

                finite = np.all(np.isfinite(x_next), axis=1) & np.isfinite(total)
                newly_dead = alive & ~finite
                if np.any(newly_dead):
                    self.logger.warning(
                        f"{int(np.count_nonzero(newly_dead))} run(s) diverged at step {t}"
                    )
                alive &= finite
                x = np.where(alive[:, None], x_next, 0.0)
                if np.any(alive):
                    max_norm = max(max_norm, float(np.max(np.linalg.norm(x[alive], axis=1))))

        costs = np.where(alive, total, np.inf)
        traj = []
        if cfg.record_trajectories:
            width = 1 + sys.n_x + sys.n_u + 1
            stacked = np.stack(recorded, axis=1) if recorded else np.zeros((size, 0, width))
            traj = list(stacked)
        if not np.all(alive):
            max_norm = float("inf")
        return _ChunkResult(costs=costs, x0=x0, max_norm=max_norm,
                            lyapunov_violations=lyapunov, trajectories=traj)

    def run(self, cfg: Optional[SimConfig] = None,
            certificate: Optional[np.ndarray] = None) -> SimulationReport:
        """Simulate cfg.runs closed-loop trajectories and aggregate their costs."""
        cfg = cfg or SimConfig()
        if cfg.x0_mode == X0Mode.FIXED.value and len(cfg.x0) != self.sys.n_x:
            raise DimensionError(f"x0 has {len(cfg.x0)} entries, system has n_x = {self.sys.n_x}")
        if certificate is not None:
            certificate = np.asarray(certificate, dtype=float)
            if certificate.shape != (self.sys.n_x, self.sys.n_x):
                raise DimensionError(
                    f"Certificate has shape {certificate.shape}, expected ({self.sys.n_x}, {self.sys.n_x})"
                )

        chunks = [
            list(range(start, min(start + cfg.chunk_size, cfg.runs)))
            for start in range(0, cfg.runs, cfg.chunk_size)
        ]
        self.logger.info(
            f"Simulating {cfg.runs} runs x {cfg.horizon} steps in {len(chunks)} chunk(s), "
            f"{cfg.workers} worker(s)"
        )
        try:
            with self.metrics.measure("monte-carlo") as timing:
                if cfg.workers > 1 and len(chunks) > 1:
                    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                        results = list(pool.map(lambda c: self._run_chunk(c, cfg, certificate), chunks))
                else:
                    results = [self._run_chunk(c, cfg, certificate) for c in chunks]
        except Exception as e:
            self.logger.error(f"Monte Carlo run failed: {str(e)}")
            raise

        report = SimulationReport(
            per_run_costs=np.concatenate([r.costs for r in results]),
            x0_samples=np.vstack([r.x0 for r in results]),
            max_state_norm=max(r.max_norm for r in results),
            diverged_runs=sum(int(np.count_nonzero(~np.isfinite(r.costs))) for r in results),
            lyapunov_violations=sum(r.lyapunov_violations for r in results) if certificate is not None else None,
            trajectories=[t for r in results for t in r.trajectories] if cfg.record_trajectories else None,
            elapsed=timing['elapsed'],
            config=cfg
        )
        if certificate is not None:
            check_bound(report, certificate)
        if report.diverged_runs:
            self.logger.warning(f"{report.diverged_runs} of {cfg.runs} runs diverged and are excluded from the mean")
        self.logger.info(
            f"Effective cost {report.effective_cost:.4f} +/- {report.ci95_halfwidth:.4f} "
            f"({report.elapsed:.2f}s)"
        )
        return report


def run(sys: UncertainSystem, cost: CostFunctional, k: np.ndarray, cfg: Optional[SimConfig] = None,
        certificate: Optional[np.ndarray] = None) -> SimulationReport:
    return MonteCarloRunner(sys, cost, k).run(cfg, certificate)


def write_run_csv(report: SimulationReport, path: Path) -> None:
    """One row per run: run, cost, bound_ok."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['run', 'cost', 'bound_ok'])
        for i, c in enumerate(report.per_run_costs):
            ok = '' if report.bound_ok is None else str(bool(report.bound_ok[i])).lower()
            writer.writerow([i, repr(float(c)), ok])


def write_trajectory_csvs(report: SimulationReport, directory: Path, n_x: int, n_u: int) -> List[Path]:
    """One file per run with columns k, x_1..x_n, u_1..u_m, stage_cost."""
    if report.trajectories is None:
        raise ValueError("Trajectories were not recorded; set record_trajectories")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ['k'] + [f'x_{i + 1}' for i in range(n_x)] + [f'u_{j + 1}' for j in range(n_u)] + ['stage_cost']
    paths = []
    for i, traj in enumerate(report.trajectories):
        path = directory / f'run_{i:05d}.csv'
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in traj:
                writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        paths.append(path)
    return paths
