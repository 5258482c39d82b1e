"""
Standard-form semidefinite programs built from affine matrix expressions.

Decision variables are a flat vector x. Matrix variables are views onto
contiguous index ranges of x; symmetric variables use the svec convention of
``core.linalg``. Every LMI block has the form

    F(x) = F0 + sum_i x_i F_i  <=  -margin * I

where the margin is applied by the solver for blocks declared strict.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np
import scipy.linalg

from ..core.linalg import smat, svec_length, svec_indices
from ..exceptions import DimensionError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10

Operand = Union['AffineExpr', np.ndarray, float, int]


class AffineExpr:
    """
    Matrix-valued affine function const + sum_k x[idx[k]] * coef[k].

    ``idx`` is sorted and unique; ``coef`` has shape (len(idx), rows, cols).
    """

    # Make ndarray @ AffineExpr dispatch to __rmatmul__.
    __array_ufunc__ = None

    def __init__(self, const, idx=None, coef=None):
        self.const = np.array(const, dtype=float, ndmin=2)
        if self.const.ndim != 2:
            raise DimensionError(f"Affine expressions are 2-D, got shape {self.const.shape}")
        rows, cols = self.const.shape
        if idx is None:
            self.idx = np.zeros(0, dtype=np.int64)
            self.coef = np.zeros((0, rows, cols))
        else:
            self.idx = np.asarray(idx, dtype=np.int64)
            self.coef = np.asarray(coef, dtype=float).reshape(len(self.idx), rows, cols)

    @staticmethod
    def lift(value: Operand) -> 'AffineExpr':
        if isinstance(value, AffineExpr):
            return value
        return AffineExpr(value)

    @property
    def shape(self):
        return self.const.shape

    @property
    def is_constant(self) -> bool:
        return self.idx.size == 0

    def _combine(self, other: 'AffineExpr', sign: float) -> 'AffineExpr':
        if self.shape != other.shape:
            raise DimensionError(f"Cannot add expressions of shapes {self.shape} and {other.shape}")
        idx = np.union1d(self.idx, other.idx)
        coef = np.zeros((idx.size,) + self.shape)
        coef[np.searchsorted(idx, self.idx)] += self.coef
        coef[np.searchsorted(idx, other.idx)] += sign * other.coef
        return AffineExpr(self.const + sign * other.const, idx, coef)

    def __add__(self, other: Operand) -> 'AffineExpr':
        return self._combine(AffineExpr.lift(other), 1.0)

    def __radd__(self, other: Operand) -> 'AffineExpr':
        return AffineExpr.lift(other)._combine(self, 1.0)

    def __sub__(self, other: Operand) -> 'AffineExpr':
        return self._combine(AffineExpr.lift(other), -1.0)

    def __rsub__(self, other: Operand) -> 'AffineExpr':
        return AffineExpr.lift(other)._combine(self, -1.0)

    def __neg__(self) -> 'AffineExpr':
        return AffineExpr(-self.const, self.idx, -self.coef)

    def __mul__(self, scalar) -> 'AffineExpr':
        if isinstance(scalar, AffineExpr) or np.ndim(scalar) != 0:
            raise TypeError("AffineExpr only supports multiplication by a scalar; use @")
        scalar = float(scalar)
        return AffineExpr(scalar * self.const, self.idx, scalar * self.coef)

    __rmul__ = __mul__

    def __matmul__(self, other: Operand) -> 'AffineExpr':
        if isinstance(other, AffineExpr):
            if not other.is_constant:
                if not self.is_constant:
                    raise TypeError("Product of two non-constant expressions is not affine")
                return self.const @ other
            other = other.const
        right = np.array(other, dtype=float, ndmin=2)
        return AffineExpr(self.const @ right, self.idx, self.coef @ right)

    def __rmatmul__(self, other) -> 'AffineExpr':
        left = np.array(other, dtype=float, ndmin=2)
        return AffineExpr(left @ self.const, self.idx, np.matmul(left, self.coef))

    @property
    def T(self) -> 'AffineExpr':
        return AffineExpr(self.const.T, self.idx, self.coef.transpose(0, 2, 1))

    def trace(self) -> 'AffineExpr':
        if self.shape[0] != self.shape[1]:
            raise DimensionError(f"Trace of non-square expression {self.shape}")
        return AffineExpr(
            np.trace(self.const),
            self.idx,
            np.trace(self.coef, axis1=1, axis2=2).reshape(-1, 1, 1)
        )

    def kron_identity(self, n: int) -> 'AffineExpr':
        """X (x) I_n."""
        eye = np.eye(n)
        k, rows, cols = self.coef.shape
        coef = np.einsum('kij,ab->kiajb', self.coef, eye).reshape(k, rows * n, cols * n)
        return AffineExpr(np.kron(self.const, eye), self.idx, coef)

    def value(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at a full decision vector."""
        x = np.asarray(x, dtype=float)
        if self.idx.size == 0:
            return self.const.copy()
        return self.const + np.tensordot(x[self.idx], self.coef, axes=1)

    def symmetry_error(self) -> float:
        err = np.max(np.abs(self.const - self.const.T), initial=0.0)
        if self.coef.size:
            err = max(err, float(np.max(np.abs(self.coef - self.coef.transpose(0, 2, 1)))))
        return float(err)

    def __repr__(self) -> str:
        return f"AffineExpr(shape={self.shape}, nterms={self.idx.size})"


def zeros(rows: int, cols: int) -> AffineExpr:
    return AffineExpr(np.zeros((rows, cols)))


def bmat(blocks: Sequence[Sequence[Optional[Operand]]]) -> AffineExpr:
    """
    Assemble a block matrix. ``None`` entries are zero blocks whose size is
    taken from the other blocks in the same block row and column.
    """
    lifted = [[None if b is None else AffineExpr.lift(b) for b in row] for row in blocks]
    n_rows, n_cols = len(lifted), len(lifted[0])
    if any(len(row) != n_cols for row in lifted):
        raise DimensionError("bmat rows have different numbers of blocks")
    heights = [None] * n_rows
    widths = [None] * n_cols
    for i, row in enumerate(lifted):
        for j, b in enumerate(row):
            if b is None:
                continue
            r, c = b.shape
            if heights[i] not in (None, r) or widths[j] not in (None, c):
                raise DimensionError(f"bmat block ({i}, {j}) has inconsistent shape {b.shape}")
            heights[i], widths[j] = r, c
    if None in heights or None in widths:
        raise DimensionError("bmat cannot infer the size of an all-zero block row or column")
    row_off = np.concatenate([[0], np.cumsum(heights)])
    col_off = np.concatenate([[0], np.cumsum(widths)])
    idx = np.zeros(0, dtype=np.int64)
    for row in lifted:
        for b in row:
            if b is not None:
                idx = np.union1d(idx, b.idx)
    const = np.zeros((row_off[-1], col_off[-1]))
    coef = np.zeros((idx.size, row_off[-1], col_off[-1]))
    for i, row in enumerate(lifted):
        for j, b in enumerate(row):
            if b is None:
                continue
            rs = slice(row_off[i], row_off[i + 1])
            cs = slice(col_off[j], col_off[j + 1])
            const[rs, cs] = b.const
            if b.idx.size:
                coef[np.searchsorted(idx, b.idx), rs, cs] = b.coef
    return AffineExpr(const, idx, coef)


def block_diag(*blocks: Operand) -> AffineExpr:
    """Block-diagonal expression."""
    lifted = [AffineExpr.lift(b) for b in blocks]
    grid = [[None] * len(lifted) for _ in lifted]
    for i, b in enumerate(lifted):
        grid[i][i] = b
    return bmat(grid)


@dataclass(frozen=True)
class VariableInfo:
    name: str
    kind: str
    shape: tuple
    start: int
    size: int


@dataclass
class AffineBlock:
    """F0 + sum_i x_i F_i <= -margin I, with F_i stacked as fi[i]."""
    name: str
    f0: np.ndarray
    fi: np.ndarray
    strict: bool = True

    def __post_init__(self):
        d = self.f0.shape[0]
        if self.f0.shape != (d, d) or self.fi.shape[1:] != (d, d):
            raise DimensionError(f"LMI block '{self.name}' has inconsistent matrix sizes")

    @property
    def dim(self) -> int:
        return self.f0.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.f0 + np.tensordot(x, self.fi, axes=1)

    def coefficient_norm(self) -> float:
        """Largest spectral norm among the F_i, i >= 1."""
        if self.fi.shape[0] == 0:
            return 0.0
        nz = np.any(self.fi != 0.0, axis=(1, 2))
        if not np.any(nz):
            return 0.0
        return float(np.max(np.linalg.norm(self.fi[nz], ord=2, axis=(1, 2))))


class SdpProblem:
    """Mutable builder; ``seal()`` freezes it into dense standard form."""

    def __init__(self, name: str = "sdp"):
        self.name = name
        self.nvars = 0
        self.var_names: List[str] = []
        self.variables: Dict[str, VariableInfo] = {}
        self._lmis: List[tuple] = []
        self._eq_rows: List[np.ndarray] = []
        self._eq_rhs: List[float] = []
        self._objective: Optional[AffineExpr] = None
        self.sealed = False
        self.blocks: List[AffineBlock] = []
        self.c = np.zeros(0)
        self.objective_offset = 0.0
        self.eq_matrix = np.zeros((0, 0))
        self.eq_rhs = np.zeros(0)

    def _check_open(self):
        if self.sealed:
            raise RuntimeError(f"SDP '{self.name}' is sealed")

    def _allocate(self, name: str, kind: str, shape: tuple, size: int) -> int:
        self._check_open()
        if name in self.variables:
            raise ValueError(f"Variable '{name}' already exists")
        start = self.nvars
        self.variables[name] = VariableInfo(name, kind, shape, start, size)
        self.nvars += size
        return start

    def add_sym_var(self, dim: int, name: str) -> AffineExpr:
        """Symmetric dim x dim variable; allocates dim*(dim+1)/2 scalars."""
        size = svec_length(dim)
        start = self._allocate(name, 'sym', (dim, dim), size)
        rows, cols = svec_indices(dim)
        coef = np.zeros((size, dim, dim))
        k = np.arange(size)
        off = 1.0 / np.sqrt(2.0)
        weight = np.where(rows == cols, 1.0, off)
        coef[k, rows, cols] = weight
        coef[k, cols, rows] = weight
        for r, c in zip(rows, cols):
            self.var_names.append(f"{name}[{r},{c}]")
        return AffineExpr(np.zeros((dim, dim)), start + k, coef)

    def add_mat_var(self, rows: int, cols: int, name: str) -> AffineExpr:
        """Full rows x cols variable, row-major; allocates rows*cols scalars."""
        size = rows * cols
        start = self._allocate(name, 'mat', (rows, cols), size)
        coef = np.zeros((size, rows, cols))
        k = np.arange(size)
        coef[k, k // cols, k % cols] = 1.0
        for i in range(rows):
            for j in range(cols):
                self.var_names.append(f"{name}[{i},{j}]")
        return AffineExpr(np.zeros((rows, cols)), start + k, coef)

    def add_scalar_var(self, name: str) -> AffineExpr:
        return self.add_mat_var(1, 1, name)

    def add_lmi(self, expr: AffineExpr, strict: bool = True, name: Optional[str] = None) -> None:
        """expr <= 0, or expr <= -margin I when strict."""
        self._check_open()
        expr = AffineExpr.lift(expr)
        if expr.shape[0] != expr.shape[1]:
            raise DimensionError(f"LMI must be square, got {expr.shape}")
        scale = 1.0 + max(np.max(np.abs(expr.const), initial=0.0),
                          np.max(np.abs(expr.coef), initial=0.0))
        if expr.symmetry_error() > SYMMETRY_TOL * scale:
            raise DimensionError(f"LMI '{name}' is not symmetric")
        self._lmis.append((name or f"lmi{len(self._lmis)}", expr, strict))

    def add_psd(self, expr: AffineExpr, strict: bool = True, name: Optional[str] = None) -> None:
        """expr >= 0, or expr >= margin I when strict."""
        self.add_lmi(-AffineExpr.lift(expr), strict=strict, name=name)

    def add_equality(self, lhs: Operand, rhs: Operand = 0.0, name: Optional[str] = None) -> None:
        """Entrywise lhs == rhs."""
        self._check_open()
        lhs = AffineExpr.lift(lhs)
        if not isinstance(rhs, AffineExpr) and np.ndim(rhs) == 0:
            rhs = np.full(lhs.shape, float(rhs))
        diff = lhs - rhs
        rows, cols = diff.shape
        for i in range(rows):
            for j in range(cols):
                row = np.zeros(self.nvars)
                row[diff.idx] = diff.coef[:, i, j]
                rhs_ij = -diff.const[i, j]
                if not np.any(row) and rhs_ij == 0.0:
                    continue
                self._eq_rows.append(row)
                self._eq_rhs.append(rhs_ij)

    def minimize(self, expr: Operand) -> None:
        self._check_open()
        expr = AffineExpr.lift(expr)
        if expr.shape != (1, 1):
            raise DimensionError(f"Objective must be scalar, got shape {expr.shape}")
        self._objective = expr

    def seal(self) -> 'SdpProblem':
        """Freeze into dense standard form. Idempotent."""
        if self.sealed:
            return self
        n = self.nvars
        self.blocks = []
        for name, expr, strict in self._lmis:
            fi = np.zeros((n,) + expr.shape)
            fi[expr.idx] = expr.coef
            fi = 0.5 * (fi + fi.transpose(0, 2, 1))
            f0 = 0.5 * (expr.const + expr.const.T)
            self.blocks.append(AffineBlock(name=name, f0=f0, fi=fi, strict=strict))
        self.c = np.zeros(n)
        if self._objective is not None:
            self.c[self._objective.idx] = self._objective.coef[:, 0, 0]
            self.objective_offset = float(self._objective.const[0, 0])
        if self._eq_rows:
            self.eq_matrix = np.vstack([np.pad(r, (0, n - r.size)) for r in self._eq_rows])
            self.eq_rhs = np.array(self._eq_rhs)
        else:
            self.eq_matrix = np.zeros((0, n))
            self.eq_rhs = np.zeros(0)
        self.sealed = True
        logger.debug(
            f"Sealed SDP '{self.name}': {n} variables, {len(self.blocks)} LMI blocks "
            f"(dims {[b.dim for b in self.blocks]}), {self.eq_rhs.size} equalities"
        )
        return self

    def variable_value(self, name: str, x: np.ndarray) -> np.ndarray:
        """Matrix value of a named variable at decision vector x."""
        info = self.variables[name]
        flat = np.asarray(x, dtype=float)[info.start:info.start + info.size]
        if info.kind == 'sym':
            return smat(flat)
        return flat.reshape(info.shape)

    def objective(self, x: np.ndarray) -> float:
        self.seal()
        return float(self.c @ x + self.objective_offset)

    def max_constraint_eig(self, x: np.ndarray) -> float:
        """Largest eigenvalue over all LMI blocks at x (feasibility measure)."""
        self.seal()
        worst = -np.inf
        for block in self.blocks:
            worst = max(worst, float(np.linalg.eigvalsh(block.evaluate(x))[-1]))
        return worst

    def equality_residual(self, x: np.ndarray) -> float:
        self.seal()
        if self.eq_rhs.size == 0:
            return 0.0
        return float(np.linalg.norm(self.eq_matrix @ x - self.eq_rhs))


@dataclass
class ReducedProblem:
    """Problem in the free coordinates z, with x = x0 + basis @ z."""
    x0: np.ndarray
    basis: np.ndarray
    c: np.ndarray
    offset: float
    g0: List[np.ndarray] = field(default_factory=list)
    g: List[np.ndarray] = field(default_factory=list)
    consistent: bool = True
    residual: float = 0.0

    @property
    def nfree(self) -> int:
        return self.basis.shape[1]

    def lift(self, z: np.ndarray) -> np.ndarray:
        return self.x0 + self.basis @ z


def reduce(problem: SdpProblem, eq_tol: float = 1e-8) -> ReducedProblem:
    """
    Eliminate Ex = f by x = x0 + N z with x0 the minimum-norm least-squares
    solution and N an orthonormal basis of null(E). Redundant consistent rows
    are absorbed; inconsistent ones flag the result.
    """
    problem.seal()
    n = problem.nvars
    e, f = problem.eq_matrix, problem.eq_rhs
    if f.size == 0:
        x0 = np.zeros(n)
        basis = np.eye(n)
        residual = 0.0
    else:
        x0 = np.linalg.lstsq(e, f, rcond=None)[0]
        basis = scipy.linalg.null_space(e)
        residual = float(np.linalg.norm(e @ x0 - f))
    consistent = residual <= eq_tol * (1.0 + float(np.linalg.norm(f)))
    if not consistent:
        logger.info(f"Equality constraints of '{problem.name}' are inconsistent (residual {residual:.3e})")
    g0 = [b.f0 + np.tensordot(x0, b.fi, axes=1) for b in problem.blocks]
    g = [np.tensordot(basis.T, b.fi, axes=1) for b in problem.blocks]
    logger.debug(
        f"Reduced '{problem.name}' from {n} to {basis.shape[1]} free variables "
        f"({n - basis.shape[1]} independent equalities)"
    )
    return ReducedProblem(
        x0=x0,
        basis=basis,
        c=basis.T @ problem.c,
        offset=float(problem.c @ x0 + problem.objective_offset),
        g0=g0,
        g=g,
        consistent=consistent,
        residual=residual
    )
