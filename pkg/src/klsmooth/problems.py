"""Benchmark problem generators, noise injection, and external-file ingestion.

Every generator returns a :class:`ProblemSpec` whose clean data ``y_clean``
is computed by applying the discretized operator to the exact solution, so
the pair is consistent by construction. For the power-law family the
source-condition exponent has the closed form mu = (2*eta - 1) / (4*beta)
and the preimage w with x = (A*A)^mu w is stored alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import (LinearOperator, diagonal_operator, kernel_operator,
                        dense_operator, read_matrix_market, read_vector)

# sigma_i = e^{-i} squares to e^{-2i}, which flushes to zero past i ~ 370;
# the cap keeps every sigma_i^2 representable.
EXP_OPERATOR_MAX_N = 400

DEFAULT_GRAVITY_DEPTH = 0.25


@dataclass(frozen=True)
class ProblemSpec:
    """An inverse problem instance with optional ground truth.

    Attributes:
        operator: the forward map A.
        x_true: exact solution, when known.
        y_clean: consistent clean data A x_true (or loaded data).
        mu_exact: analytic source-condition exponent, when one exists.
        source_w: preimage w with x_true = (A*A)^mu_exact w, when available.
        label: human-readable problem name.
        params: generator parameters for provenance.
    """

    operator: LinearOperator
    y_clean: np.ndarray
    x_true: Optional[np.ndarray] = None
    mu_exact: Optional[float] = None
    source_w: Optional[np.ndarray] = None
    label: str = ""
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NoisyData:
    """Data perturbed by white Gaussian noise rescaled to an exact norm."""

    y_delta: np.ndarray
    delta_abs: float
    rel_level: float
    seed: int


def make_power_law(n: int, eta: float, beta: float) -> ProblemSpec:
    """Diagonal benchmark sigma_i = i^-beta, x_i = i^-eta.

    Requires eta > 1/2 so the solution is square-summable in the limit;
    mu_exact = (2*eta - 1) / (4*beta).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if eta <= 0.5:
        raise ValueError("eta must exceed 1/2")
    if beta <= 0:
        raise ValueError("beta must be positive")
    i = np.arange(1, n + 1, dtype=float)
    sigmas = i ** (-beta)
    x_true = i ** (-eta)
    mu = (2.0 * eta - 1.0) / (4.0 * beta)
    w = x_true * sigmas ** (-2.0 * mu)
    op = diagonal_operator(sigmas)
    return ProblemSpec(operator=op, y_clean=sigmas * x_true, x_true=x_true,
                       mu_exact=mu, source_w=w,
                       label=f"power-law(eta={eta:g}, beta={beta:g}, n={n})",
                       params={"generator": "power_law", "n": n, "eta": eta, "beta": beta})


def make_exp_solution(n: int, beta: float) -> ProblemSpec:
    """Supersmooth benchmark: sigma_i = i^-beta, x_i = e^-i.

    The solution lies in the range of (A*A)^mu for every mu > 0, so no
    single exponent describes it; mu_exact is left unset.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if beta <= 0:
        raise ValueError("beta must be positive")
    i = np.arange(1, n + 1, dtype=float)
    sigmas = i ** (-beta)
    x_true = np.exp(-i)
    op = diagonal_operator(sigmas)
    return ProblemSpec(operator=op, y_clean=sigmas * x_true, x_true=x_true,
                       label=f"supersmooth(beta={beta:g}, n={n})",
                       params={"generator": "exp_solution", "n": n, "beta": beta})


def make_exp_operator(n: int, eta: float) -> ProblemSpec:
    """Violated-smoothness benchmark: sigma_i = e^-i, x_i = i^-eta.

    The solution misses the range of (A*A)^mu for every mu > 0.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if n > EXP_OPERATOR_MAX_N:
        raise ValueError(f"n capped at {EXP_OPERATOR_MAX_N} to keep sigma_i^2 above underflow")
    if eta <= 0:
        raise ValueError("eta must be positive")
    i = np.arange(1, n + 1, dtype=float)
    sigmas = np.exp(-i)
    x_true = i ** (-eta)
    op = diagonal_operator(sigmas)
    return ProblemSpec(operator=op, y_clean=sigmas * x_true, x_true=x_true,
                       label=f"exp-operator(eta={eta:g}, n={n}), source condition violated",
                       params={"generator": "exp_operator", "n": n, "eta": eta})


def deriv2_kernel(s, t):
    """Green's function of the second derivative with zero boundary values."""
    return np.where(s <= t, s * (t - 1.0), t * (s - 1.0))


def make_deriv2(n: int) -> ProblemSpec:
    """Second-derivative integral equation on [0,1], exact solution x(t) = t."""
    if n < 8:
        raise ValueError("n must be >= 8")
    op = kernel_operator(deriv2_kernel, n)
    x_true = op.nodes.copy()
    return ProblemSpec(operator=op, y_clean=op.apply(x_true), x_true=x_true,
                       label=f"deriv2(n={n})",
                       params={"generator": "deriv2", "n": n})


def make_gravity(n: int, depth: float = DEFAULT_GRAVITY_DEPTH) -> ProblemSpec:
    """Gravity surveying kernel depth*(depth^2 + (s-t)^2)^(-3/2) on [0,1].

    Severely (exponentially) ill-posed; the smooth trigonometric solution
    sin(pi t) + 0.5 sin(2 pi t) keeps the data consistent by construction.
    """
    if n < 8:
        raise ValueError("n must be >= 8")
    if depth <= 0:
        raise ValueError("depth must be positive")
    op = kernel_operator(lambda s, t: depth * (depth ** 2 + (s - t) ** 2) ** (-1.5), n)
    t = op.nodes
    x_true = np.sin(np.pi * t) + 0.5 * np.sin(2.0 * np.pi * t)
    return ProblemSpec(operator=op, y_clean=op.apply(x_true), x_true=x_true,
                       label=f"gravity(n={n}, depth={depth:g}), severely ill-posed candidate",
                       params={"generator": "gravity", "n": n, "depth": depth})


def add_noise(p: ProblemSpec, rel_level: float, seed: int) -> NoisyData:
    """Add white Gaussian noise rescaled so ||y - y_delta|| = rel_level * ||y|| exactly."""
    if rel_level < 0:
        raise ValueError("rel_level must be non-negative")
    y = p.y_clean
    if rel_level == 0.0:
        return NoisyData(y_delta=y.copy(), delta_abs=0.0, rel_level=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(y.size)
    delta_abs = rel_level * float(np.linalg.norm(y))
    e *= delta_abs / np.linalg.norm(e)
    return NoisyData(y_delta=y + e, delta_abs=delta_abs, rel_level=rel_level, seed=seed)


def load_external(matrix_path, y_path, x_true_path=None) -> ProblemSpec:
    """Build a dense problem from a MatrixMarket matrix and plain-text vectors."""
    a = read_matrix_market(matrix_path)
    y = read_vector(y_path)
    if y.size != a.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {a.shape[0]}x{a.shape[1]}, y has length {y.size}")
    x_true = None
    if x_true_path is not None:
        x_true = read_vector(x_true_path)
        if x_true.size != a.shape[1]:
            raise ValueError(
                f"dimension mismatch: matrix is {a.shape[0]}x{a.shape[1]}, "
                f"x_true has length {x_true.size}")
    op = dense_operator(a)
    return ProblemSpec(operator=op, y_clean=y, x_true=x_true,
                       label=f"external({matrix_path})",
                       params={"generator": "external", "matrix_path": str(matrix_path),
                               "y_path": str(y_path),
                               "x_true_path": None if x_true_path is None else str(x_true_path)})
