"""Linear operators: forward/adjoint application, norm estimation, SVD, file I/O.

Three operator kinds are supported:

* ``diagonal``  -- infinite-dimensional diagonal operator truncated to n modes,
  stored as its singular values (positive, non-increasing).
* ``dense``     -- an explicit m-by-n real matrix.
* ``kernel-quadrature`` -- an integral operator on [0,1] discretized by the
  midpoint rule; the dense matrix is materialized at construction, the nodes
  and weights are kept for provenance.

Operators are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Full dense SVD is only attempted below this size; beyond it use the
# diagonal kind or skip spectral verification.
SVD_SIZE_LIMIT = 2048

# Singular values below this fraction of sigma_1 are numerically void.
DEFAULT_SV_FLOOR = 1e-14

_POWER_ITER_SEED = 74025  # fixed seed so the step-size choice is reproducible


class ConvergenceError(RuntimeError):
    """Iterative computation did not reach tolerance; carries the best iterate."""

    def __init__(self, message: str, best: float | None = None, residual: float | None = None):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class LinearOperator:
    """A bounded linear map between finite-dimensional Hilbert spaces.

    Attributes:
        kind: "diagonal", "dense", or "kernel-quadrature".
        shape: (m, n) output/input dimensions.
        sigmas: singular values, diagonal kind only.
        matrix: dense matrix, dense and kernel kinds.
        nodes, weights: quadrature data, kernel kind only.
    """

    kind: str
    shape: tuple[int, int]
    sigmas: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    nodes: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return A x."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise ValueError(f"expected input of length {self.shape[1]}, got shape {x.shape}")
        if self.kind == "diagonal":
            return self.sigmas * x
        return self.matrix @ x

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        """Return A* y (transpose action for matrix kinds)."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.shape[0],):
            raise ValueError(f"expected input of length {self.shape[0]}, got shape {y.shape}")
        if self.kind == "diagonal":
            return self.sigmas * y
        return self.matrix.T @ y

    def to_dense(self) -> "LinearOperator":
        """Materialize as a plain dense operator (identity for dense kind)."""
        if self.kind == "dense":
            return self
        if self.kind == "diagonal":
            return dense_operator(np.diag(self.sigmas))
        return dense_operator(self.matrix.copy())


@dataclass(frozen=True)
class SpectralDecomposition:
    """Truncated singular system {sigma_i, u_i, v_i} with orthonormal columns."""

    sigmas: np.ndarray
    left_vectors: np.ndarray   # m x r, columns u_i
    right_vectors: np.ndarray  # n x r, columns v_i


def diagonal_operator(sigmas) -> LinearOperator:
    """Operator acting componentwise as x_i -> sigma_i x_i.

    The sigmas must be strictly positive and non-increasing.
    """
    s = np.asarray(sigmas, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("sigmas must be a non-empty 1-d array")
    if not np.all(s > 0):
        raise ValueError("diagonal singular values must be strictly positive")
    if np.any(np.diff(s) > 0):
        raise ValueError("diagonal singular values must be non-increasing")
    n = s.size
    return LinearOperator(kind="diagonal", shape=(n, n), sigmas=s)


def dense_operator(matrix) -> LinearOperator:
    """Operator backed by an explicit m-by-n matrix."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-d")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains non-finite entries")
    return LinearOperator(kind="dense", shape=a.shape, matrix=a)


def kernel_operator(kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    n: int) -> LinearOperator:
    """Integral operator on [0,1] with the given kernel, midpoint rule, n cells.

    (A x)(s_i) ~= sum_j kernel(s_i, t_j) x(t_j) / n with s, t at cell midpoints.
    The dense matrix is built once here; all later math needs only matvecs.
    """
    if n < 2:
        raise ValueError("need at least 2 quadrature cells")
    t = (np.arange(n) + 0.5) / n
    w = np.full(n, 1.0 / n)
    s_grid, t_grid = np.meshgrid(t, t, indexing="ij")
    a = np.asarray(kernel(s_grid, t_grid), dtype=float) * w
    return LinearOperator(kind="kernel-quadrature", shape=(n, n),
                          matrix=a, nodes=t, weights=w)


def operator_norm(op: LinearOperator, tol: float = 1e-10, max_iters: int = 10000) -> float:
    """Estimate ||A|| = sigma_1.

    Exact for the diagonal kind; power iteration on A*A otherwise, started
    from a fixed pseudo-random vector so repeated runs give identical steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if op.kind == "diagonal":
        return float(op.sigmas.max())
    rng = np.random.default_rng(_POWER_ITER_SEED)
    v = rng.standard_normal(op.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iters):
        with np.errstate(over="ignore", invalid="ignore"):
            w = op.apply_adjoint(op.apply(v))
            nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0  # v in the null space of a rank-deficient A
        if not np.isfinite(nw):
            raise ConvergenceError("operator norm overflowed during power iteration")
        new_est = np.sqrt(nw)  # ||A*A v|| with unit v converges to sigma_1^2
        v = w / nw
        if est > 0 and abs(new_est - est) <= tol * new_est:
            return float(new_est)
        est = new_est
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations", best=float(est))


def svd(op: LinearOperator, floor: float = DEFAULT_SV_FLOOR) -> SpectralDecomposition:
    """Full singular value decomposition, truncated at floor * sigma_1.

    Diagonal operators return their stored sigmas with canonical basis
    vectors, untruncated: those values are exact data, not the output of a
    numerical factorization. The identity bases are materialized densely
    (n^2 memory), which is fine at desk scale. Kernel-quadrature operators
    must be materialized to dense first (``op.to_dense()``).
    """
    if op.kind == "kernel-quadrature":
        raise TypeError("kernel-quadrature operator: call .to_dense() before svd()")
    if op.kind == "diagonal":
        n = op.shape[0]
        eye = np.eye(n)
        return SpectralDecomposition(sigmas=op.sigmas.copy(),
                                     left_vectors=eye, right_vectors=eye.copy())
    m, n = op.shape
    if min(m, n) > SVD_SIZE_LIMIT:
        raise ValueError(
            f"dense SVD supported up to min(m,n) <= {SVD_SIZE_LIMIT}; got {min(m, n)}")
    try:
        u, s, vt = np.linalg.svd(op.matrix, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed to converge: {exc}") from exc
    if s[0] == 0.0:
        return SpectralDecomposition(sigmas=s[:0], left_vectors=u[:, :0],
                                     right_vectors=vt.T[:, :0])
    keep = s >= floor * s[0]
    r = int(keep.sum())
    return SpectralDecomposition(sigmas=s[:r], left_vectors=u[:, :r],
                                 right_vectors=vt.T[:, :r])


# ---------------------------------------------------------------------------
# File formats: MatrixMarket for matrices, one-value-per-line for vectors.
# Writers use 17 significant digits so write+read round-trips bit-exactly.
# ---------------------------------------------------------------------------

def write_matrix_market(path, matrix) -> None:
    """Write a dense matrix in MatrixMarket array format."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError("matrix must be 2-d")
    m, n = a.shape
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{m} {n}\n")
        for j in range(n):          # array format is column-major
            for i in range(m):
                fh.write(f"{a[i, j]:.17g}\n")


def read_matrix_market(path) -> np.ndarray:
    """Read a real matrix in MatrixMarket array or coordinate format.

    Parse errors report the offending 1-based line number.
    """
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) < 4 or header[0] != "%%MatrixMarket" or header[1] != "matrix":
        raise ValueError(f"{path}: line 1: not a MatrixMarket matrix header")
    fmt = header[2].lower()
    if fmt not in ("array", "coordinate"):
        raise ValueError(f"{path}: line 1: unsupported format {fmt!r}")
    qualifiers = [h.lower() for h in header[3:]]
    if "complex" in qualifiers:
        raise ValueError(f"{path}: line 1: complex matrices not supported")
    if len(header) >= 5 and header[4].lower() != "general":
        raise ValueError(f"{path}: line 1: only 'general' symmetry is supported")
    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ValueError(f"{path}: missing size line")
    size_lineno, size_line = body[0]
    parts = size_line.split()
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"{path}: line {size_lineno}: bad size line {size_line!r}") from None
    if fmt == "array":
        if len(dims) != 2:
            raise ValueError(f"{path}: line {size_lineno}: array size line needs 2 integers")
        m, n = dims
        entries = body[1:]
        if len(entries) != m * n:
            raise ValueError(f"{path}: expected {m * n} entries, found {len(entries)}")
        a = np.empty((m, n))
        for idx, (lineno, text) in enumerate(entries):
            try:
                val = float(text.split()[0])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad value {text!r}") from None
            a[idx % m, idx // m] = val
        return a
    if len(dims) != 3:
        raise ValueError(f"{path}: line {size_lineno}: coordinate size line needs 3 integers")
    m, n, nnz = dims
    entries = body[1:]
    if len(entries) != nnz:
        raise ValueError(f"{path}: expected {nnz} entries, found {len(entries)}")
    a = np.zeros((m, n))
    for lineno, text in entries:
        parts = text.split()
        try:
            i, j = int(parts[0]), int(parts[1])
            val = float(parts[2]) if len(parts) > 2 else 1.0
        except (ValueError, IndexError):
            raise ValueError(f"{path}: line {lineno}: bad coordinate entry {text!r}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise ValueError(f"{path}: line {lineno}: index ({i},{j}) out of range")
        a[i - 1, j - 1] = val
    return a


def write_vector(path, vec) -> None:
    """Write a vector as one full-precision decimal per line."""
    v = np.asarray(vec, dtype=float)
    if v.ndim != 1:
        raise ValueError("vector must be 1-d")
    with open(path, "w") as fh:
        for x in v:
            fh.write(f"{x:.17g}\n")


def read_vector(path) -> np.ndarray:
    """Read a one-value-per-line vector; errors carry the line number."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith(("%", "#")):
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad value {text!r}") from None
    if not values:
        raise ValueError(f"{path}: no values found")
    return np.asarray(values)
