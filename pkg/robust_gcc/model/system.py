"""
Uncertain plant, quadratic cost and closed-loop formation.

The plant in feedback-disturbance form:

    x+ = A x + B^w w + B^u u
    y  = C_y x + D_y^w w
    z  = C_z x + D_z^w w + D_z^u u,     w = Delta z

with the static output feedback u = -K y.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from ..core.linalg import (
    as_matrix,
    as_symmetric,
    condition_number,
    is_psd,
    min_eig,
    psd_factor,
    psd_tolerance,
    spectral_norm,
)
from ..exceptions import DimensionError, SingularMatrixError, WellPosednessError
from .uncertainty import (
    DeltaRealization,
    UncertaintyBlock,
    expand_delta,
    sample_delta,
    structure_dims,
)

logger = logging.getLogger(__name__)

SINGULAR_COND = 1e12
FACTOR_TOL = 1e-8


def _shape_check(name: str, arr: np.ndarray, rows: int, cols: int) -> None:
    if arr.shape != (rows, cols):
        raise DimensionError(f"{name} has shape {arr.shape}, expected ({rows}, {cols})")


@dataclass(frozen=True)
class UncertainSystem:
    """Plant matrices and uncertainty block structure."""
    a: np.ndarray
    bu: np.ndarray
    bw: np.ndarray
    cy: np.ndarray
    dyw: np.ndarray
    cz: np.ndarray
    dzu: np.ndarray
    dzw: np.ndarray
    structure: Tuple[UncertaintyBlock, ...] = ()

    def __post_init__(self):
        structure = tuple(self.structure)
        object.__setattr__(self, 'structure', structure)
        n_p, n_q = structure_dims(structure)
        a = as_matrix(self.a, "A")
        bu = as_matrix(self.bu, "B^u")
        cy = as_matrix(self.cy, "C_y")
        n_x, n_u, n_y = a.shape[0], bu.shape[1], cy.shape[0]
        _shape_check("A", a, n_x, n_x)
        _shape_check("B^u", bu, n_x, n_u)
        _shape_check("C_y", cy, n_y, n_x)
        for name, attr, rows, cols in (
            ("B^w", 'bw', n_x, n_p),
            ("D_y^w", 'dyw', n_y, n_p),
            ("C_z", 'cz', n_q, n_x),
            ("D_z^u", 'dzu', n_q, n_u),
            ("D_z^w", 'dzw', n_q, n_p),
        ):
            arr = np.array(getattr(self, attr), dtype=float)
            if arr.size == 0:
                arr = np.zeros((rows, cols))
            arr = as_matrix(arr, name, allow_empty=True)
            if arr.shape != (rows, cols):
                raise DimensionError(
                    f"{name} has shape {arr.shape}, expected ({rows}, {cols}); "
                    f"the uncertainty structure implies n_p = sum(repeats*rows) = {n_p} "
                    f"and n_q = sum(repeats*cols) = {n_q}"
                )
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'bu', bu)
        object.__setattr__(self, 'cy', cy)

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.bu.shape[1]

    @property
    def n_y(self) -> int:
        return self.cy.shape[0]

    @property
    def n_p(self) -> int:
        return self.bw.shape[1]

    @property
    def n_q(self) -> int:
        return self.cz.shape[0]

    @property
    def is_state_feedback(self) -> bool:
        return self.n_y == self.n_x and np.array_equal(self.cy, np.eye(self.n_x))

    def with_structure(self, structure: Sequence[UncertaintyBlock]) -> 'UncertainSystem':
        """Same matrices under a different block structure with equal n_p, n_q."""
        return replace(self, structure=tuple(structure))

    def with_uncertainty_zeroed(self) -> 'UncertainSystem':
        """Keep the structure but zero every uncertainty channel."""
        return replace(
            self,
            bw=np.zeros_like(self.bw),
            dyw=np.zeros_like(self.dyw),
            cz=np.zeros_like(self.cz),
            dzu=np.zeros_like(self.dzu),
            dzw=np.zeros_like(self.dzw)
        )

    def nominal(self) -> 'UncertainSystem':
        """Drop the uncertainty channels entirely (n_p = n_q = 0)."""
        return UncertainSystem(
            a=self.a, bu=self.bu,
            bw=np.zeros((self.n_x, 0)), cy=self.cy,
            dyw=np.zeros((self.n_y, 0)), cz=np.zeros((0, self.n_x)),
            dzu=np.zeros((0, self.n_u)), dzw=np.zeros((0, 0)),
            structure=()
        )


@dataclass(frozen=True)
class CostFunctional:
    """Stage cost x'Qx + 2x'Nu + u'Ru with factor [C_c D_c^u]."""
    q: np.ndarray
    n: np.ndarray
    r: np.ndarray
    cc: np.ndarray
    dcu: np.ndarray

    def __post_init__(self):
        q = as_symmetric(self.q, "Q")
        r = as_symmetric(self.r, "R")
        n = as_matrix(self.n, "N")
        _shape_check("N", n, q.shape[0], r.shape[0])
        cc = as_matrix(self.cc, "C_c")
        dcu = as_matrix(self.dcu, "D_c^u")
        _shape_check("C_c", cc, cc.shape[0], q.shape[0])
        _shape_check("D_c^u", dcu, cc.shape[0], r.shape[0])
        if not is_psd(q):
            raise ValueError("Q must be positive semidefinite")
        if min_eig(r) <= 0:
            raise ValueError("R must be positive definite")
        joint = self.weight_matrix_of(q, n, r)
        if not is_psd(joint):
            raise ValueError("[[Q, N], [N', R]] must be positive semidefinite")
        factor = np.hstack([cc, dcu])
        if np.max(np.abs(factor.T @ factor - joint)) > FACTOR_TOL * (1 + np.max(np.abs(joint))):
            raise ValueError("[C_c D_c^u]'[C_c D_c^u] does not reproduce [[Q, N], [N', R]]")
        for attr, value in (('q', q), ('n', n), ('r', r), ('cc', cc), ('dcu', dcu)):
            object.__setattr__(self, attr, value)

    @staticmethod
    def weight_matrix_of(q: np.ndarray, n: np.ndarray, r: np.ndarray) -> np.ndarray:
        return np.block([[q, n], [n.T, r]])

    @classmethod
    def from_weights(cls, q, r, n=None) -> 'CostFunctional':
        """Build the cost and its square factorization from Q, N, R."""
        q = as_symmetric(q, "Q")
        r = as_symmetric(r, "R")
        n = np.zeros((q.shape[0], r.shape[0])) if n is None else as_matrix(n, "N")
        _shape_check("N", n, q.shape[0], r.shape[0])
        factor = psd_factor(cls.weight_matrix_of(q, n, r))
        return cls(q=q, n=n, r=r, cc=factor[:, :q.shape[0]], dcu=factor[:, q.shape[0]:])

    @property
    def n_c(self) -> int:
        return self.cc.shape[0]

    @property
    def weight_matrix(self) -> np.ndarray:
        return self.weight_matrix_of(self.q, self.n, self.r)


@dataclass(frozen=True)
class ClosedLoop:
    """Closed-loop matrices under u = -K y."""
    abar: np.ndarray
    bwbar: np.ndarray
    czbar: np.ndarray
    dzwbar: np.ndarray
    ccbar: np.ndarray
    dcwbar: np.ndarray
    k: np.ndarray
    structure: Tuple[UncertaintyBlock, ...] = ()

    @property
    def n_x(self) -> int:
        return self.abar.shape[0]

    @property
    def n_p(self) -> int:
        return self.bwbar.shape[1]


def check_compatible(sys: UncertainSystem, cost: CostFunctional) -> None:
    if cost.q.shape[0] != sys.n_x:
        raise DimensionError(f"Q is {cost.q.shape}, system has n_x = {sys.n_x}")
    if cost.r.shape[0] != sys.n_u:
        raise DimensionError(f"R is {cost.r.shape}, system has n_u = {sys.n_u}")


def close_loop(sys: UncertainSystem, cost: CostFunctional, k: np.ndarray) -> ClosedLoop:
    """Form A-bar, B-bar^w, C-bar_z, D-bar_z^w, C-bar_c, D-bar_c^w for gain K."""
    check_compatible(sys, cost)
    k = as_matrix(k, "K")
    _shape_check("K", k, sys.n_u, sys.n_y)
    return ClosedLoop(
        abar=sys.a - sys.bu @ k @ sys.cy,
        bwbar=sys.bw - sys.bu @ k @ sys.dyw,
        czbar=sys.cz - sys.dzu @ k @ sys.cy,
        dzwbar=sys.dzw - sys.dzu @ k @ sys.dyw,
        ccbar=cost.cc - cost.dcu @ k @ sys.cy,
        dcwbar=-cost.dcu @ k @ sys.dyw,
        k=k,
        structure=sys.structure
    )


def _lft(delta: np.ndarray, feedthrough: np.ndarray) -> np.ndarray:
    """Delta (I - D Delta)^{-1}."""
    n_q = feedthrough.shape[0]
    if n_q == 0:
        return delta.copy()
    m = np.eye(n_q) - feedthrough @ delta
    cond = condition_number(m)
    if cond > SINGULAR_COND:
        raise SingularMatrixError(
            f"I - D_z^w Delta is singular (cond {cond:.2e}); well-posedness violated",
            condition=cond
        )
    # Delta M^{-1} = (M^{-T} Delta^T)^T
    return np.linalg.solve(m.T, delta.T).T


def delta_bar(sys: UncertainSystem, d: DeltaRealization) -> np.ndarray:
    """Open-loop Delta-bar = Delta (I - D_z^w Delta)^{-1}."""
    return _lft(expand_delta(sys.structure, d), sys.dzw)


def closed_loop_delta_bar(cl: ClosedLoop, d: DeltaRealization) -> np.ndarray:
    """Closed-loop Delta (I - D-bar_z^w Delta)^{-1}."""
    return _lft(expand_delta(cl.structure, d), cl.dzwbar)


def step(cl: ClosedLoop, dbar: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    One closed-loop step x+ = (A-bar + B-bar^w Delta-bar C-bar_z) x.

    dbar must be the closed-loop Delta-bar; with w = Delta-bar C-bar_z x this
    is exactly the plant under u = -K y.
    """
    x = np.asarray(x, dtype=float)
    if dbar.shape != (cl.bwbar.shape[1], cl.czbar.shape[0]):
        raise DimensionError(
            f"Delta-bar has shape {dbar.shape}, expected "
            f"({cl.bwbar.shape[1]}, {cl.czbar.shape[0]})"
        )
    if x.shape != (cl.n_x,):
        raise DimensionError(f"State has shape {x.shape}, expected ({cl.n_x},)")
    return cl.abar @ x + cl.bwbar @ (dbar @ (cl.czbar @ x))


def stage_cost(cost: CostFunctional, x: np.ndarray, u: np.ndarray) -> float:
    """x'Qx + 2x'Nu + u'Ru."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (cost.q.shape[0],) or u.shape != (cost.r.shape[0],):
        raise DimensionError(
            f"Stage cost expects x of length {cost.q.shape[0]} and u of length "
            f"{cost.r.shape[0]}, got {x.shape} and {u.shape}"
        )
    return float(x @ cost.q @ x + 2.0 * x @ cost.n @ u + u @ cost.r @ u)


@dataclass
class ValidationReport:
    """Outcome of the well-posedness and assumption checks."""
    well_posed: bool
    dzw_norm: float
    stabilizable: bool
    observable: bool
    feedthrough_free: bool
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'well_posed': self.well_posed,
            'dzw_norm': self.dzw_norm,
            'stabilizable': self.stabilizable,
            'observable': self.observable,
            'feedthrough_free': self.feedthrough_free,
            'warnings': list(self.warnings)
        }


def _pbh_stabilizable(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if abs(lam) < 1.0:
            continue
        test = np.hstack([a - lam * np.eye(n), b.astype(complex)])
        if np.linalg.matrix_rank(test, tol=tol * (1 + np.abs(test).max())) < n:
            return False
    return True


def _pbh_observable(a: np.ndarray, c: np.ndarray, tol: float = 1e-9) -> bool:
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        test = np.vstack([a - lam * np.eye(n), c.astype(complex)])
        if np.linalg.matrix_rank(test, tol=tol * (1 + np.abs(test).max())) < n:
            return False
    return True


def feedthrough_free(sys: UncertainSystem, rng: Optional[np.random.Generator] = None,
                     samples: int = 100, tol: float = 1e-10) -> bool:
    """
    Structural check that D_y^w Delta D_z^u vanishes for every admissible Delta,
    backed by random samples of D_y^w Delta-bar D_z^u.
    """
    if sys.n_p == 0:
        return True
    indicator = DeltaRealization(blocks=tuple(
        np.ones((b.rows, b.cols)) / np.sqrt(b.rows * b.cols) for b in sys.structure
    ))
    pattern = np.abs(sys.dyw) @ np.abs(expand_delta(sys.structure, indicator)) @ np.abs(sys.dzu)
    if np.any(pattern > 0.0):
        return False
    rng = np.random.default_rng(0) if rng is None else rng
    scale = 1.0 + spectral_norm(sys.dyw) * spectral_norm(sys.dzu)
    for _ in range(samples):
        product = sys.dyw @ delta_bar(sys, sample_delta(sys.structure, rng)) @ sys.dzu
        if np.max(np.abs(product), initial=0.0) > tol * scale:
            return False
    return True


def validate(sys: UncertainSystem, cost: CostFunctional) -> ValidationReport:
    """
    Check the standing assumptions.

    Well-posedness (||D_z^w|| < 1) is a hard error. Stabilizability and
    observability are only tested at Delta = 0 and reported as warnings. The
    feed-through flag is consumed by the dilated synthesis path.
    """
    check_compatible(sys, cost)
    dzw_norm = spectral_norm(sys.dzw)
    if dzw_norm >= 1.0:
        raise WellPosednessError(
            f"||D_z^w||_2 = {dzw_norm:.6f} must be < 1 for a well-posed uncertainty loop"
        )
    warnings = []
    stabilizable = _pbh_stabilizable(sys.a, sys.bu)
    if not stabilizable:
        warnings.append("nominal (A, B^u) is not stabilizable")
    q_root = psd_factor(cost.q, tol=psd_tolerance(cost.q))
    observable = _pbh_observable(sys.a, q_root)
    if not observable:
        warnings.append("nominal (A, Q^1/2) is not observable")
    free = feedthrough_free(sys)
    if not free:
        warnings.append("feed-through D_y^w Delta D_z^u is not identically zero")
    for message in warnings:
        logger.warning(f"Validation: {message}")
    return ValidationReport(
        well_posed=True,
        dzw_norm=dzw_norm,
        stabilizable=stabilizable,
        observable=observable,
        feedthrough_free=free,
        warnings=warnings
    )
