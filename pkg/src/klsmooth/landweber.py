"""Landweber iteration with per-iteration residual/gradient/error logging.

The iteration x_{k+1} = x_k - beta A*(A x_k - y) is gradient descent on the
squared residual. After every update the trace records

    R_k = ||A x_k - y||,   G_k = ||A*(A x_k - y)||,   R_k^2 / G_k,

and, when the exact solution is known, ||x_k - x_true||. The ratio R^2/G is
an observable lower bound on the reconstruction error (Cauchy-Schwarz) and
drives the downstream diagnostics.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .operators import operator_norm
from .problems import NoisyData, ProblemSpec

# Residual/gradient norms below this are treated as exact convergence so the
# log-log regression never sees log(0).
EARLY_STOP_FLOOR = 1e-300


@dataclass(frozen=True)
class LandweberConfig:
    """Run parameters.

    step_beta "auto" resolves to 1 / ||A||_est^2, the midpoint of the safe
    range (0, 2/||A||^2); explicit values are validated against that range.
    x0 "zero" starts from the origin. record_iterates keeps snapshots of x_k
    at stride ceil(K/100).
    """

    step_beta: Union[float, str] = "auto"
    max_iters: int = 2000
    x0: Union[np.ndarray, str] = "zero"
    record_iterates: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if isinstance(self.step_beta, str) and self.step_beta != "auto":
            raise ValueError('step_beta must be a float or "auto"')


@dataclass(frozen=True)
class IterationTrace:
    """Per-iteration record, index-aligned over k = 1..K (after each update)."""

    residuals: np.ndarray
    gradient_norms: np.ndarray
    lower_bounds: np.ndarray
    errors: Optional[np.ndarray] = None
    step_beta: float = 0.0
    problem_label: str = ""
    noise_meta: Optional[dict] = None
    iterates: tuple = ()   # ((k, x_k), ...) snapshots when requested

    def __len__(self) -> int:
        return self.residuals.size

    @property
    def k_values(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)


def resolve_step(cfg: LandweberConfig, norm_est: float) -> float:
    """Resolve the configured step against the estimated operator norm."""
    if norm_est <= 0.0:
        raise ValueError("operator norm is zero; the iteration cannot move")
    upper = 2.0 / norm_est ** 2
    if cfg.step_beta == "auto":
        return 1.0 / norm_est ** 2
    beta = float(cfg.step_beta)
    if not 0.0 < beta < upper:
        raise ValueError(f"step_beta must lie in (0, {upper:.6g}); got {beta:g}")
    return beta


def landweber_run(p: ProblemSpec, data: np.ndarray,
                  cfg: Optional[LandweberConfig] = None,
                  noise: Optional[NoisyData] = None) -> IterationTrace:
    """Run Landweber iteration on A x = data and log the trace.

    Stops early once the residual or gradient norm underflows (exact
    normal-equation solution reached). Non-finite values abort with the
    offending iteration index.
    """
    cfg = cfg or LandweberConfig()
    op = p.operator
    data = np.asarray(data, dtype=float)
    if data.shape != (op.shape[0],):
        raise ValueError(f"data must have length {op.shape[0]}, got shape {data.shape}")
    beta = resolve_step(cfg, operator_norm(op))

    if isinstance(cfg.x0, str):
        x = np.zeros(op.shape[1])
    else:
        x = np.asarray(cfg.x0, dtype=float).copy()
        if x.shape != (op.shape[1],):
            raise ValueError(f"x0 must have length {op.shape[1]}")

    K = cfg.max_iters
    stride = max(1, -(-K // 100))  # ceil(K/100)
    R = np.empty(K)
    G = np.empty(K)
    E = np.empty(K) if p.x_true is not None else None
    snapshots = []

    n_done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        g = op.apply_adjoint(op.apply(x) - data)
    for k in range(1, K + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = x - beta * g
            r = op.apply(x) - data
            g = op.apply_adjoint(r)
            rn = float(np.linalg.norm(r))
            gn = float(np.linalg.norm(g))
        if not (np.isfinite(rn) and np.isfinite(gn)):
            raise RuntimeError(f"non-finite residual/gradient at iteration {k}")
        R[k - 1] = rn
        G[k - 1] = gn
        if E is not None:
            E[k - 1] = float(np.linalg.norm(x - p.x_true))
        if cfg.record_iterates and (k % stride == 0 or k == K):
            snapshots.append((k, x.copy()))
        n_done = k
        if rn < EARLY_STOP_FLOOR or gn < EARLY_STOP_FLOOR:
            break

    R = R[:n_done]
    G = G[:n_done]
    with np.errstate(divide="ignore", invalid="ignore"):
        lb = np.where(G > 0.0, R ** 2 / np.where(G > 0.0, G, 1.0), np.nan)
    noise_meta = None
    if noise is not None:
        noise_meta = {"rel_level": noise.rel_level, "delta_abs": noise.delta_abs,
                      "seed": noise.seed}
    return IterationTrace(residuals=R, gradient_norms=G, lower_bounds=lb,
                          errors=None if E is None else E[:n_done],
                          step_beta=beta, problem_label=p.label,
                          noise_meta=noise_meta, iterates=tuple(snapshots))


def trace_to_csv(trace: IterationTrace,
                 mu_k: Optional[np.ndarray] = None,
                 c_k: Optional[np.ndarray] = None,
                 k_values: Optional[np.ndarray] = None,
                 upper_bounds: Optional[np.ndarray] = None) -> str:
    """Render the trace as CSV at 17 significant digits.

    The estimator's per-prefix columns are sparse (they start at k_min), so
    undefined cells are left empty. An upper-bound column is appended when
    bound curves were computed.
    """
    header = "k,residual,gradient_norm,lower_bound,error,mu_k,c_k"
    if upper_bounds is not None:
        header += ",upper_bound"
    mu_map = {}
    c_map = {}
    if mu_k is not None:
        kv = k_values if k_values is not None else np.arange(1, len(mu_k) + 1)
        mu_map = dict(zip(kv.tolist(), mu_k.tolist()))
        if c_k is not None:
            c_map = dict(zip(kv.tolist(), c_k.tolist()))

    def fmt(x) -> str:
        if x is None or (isinstance(x, float) and not np.isfinite(x)):
            return ""
        return f"{x:.17g}"

    out = io.StringIO()
    out.write(header + "\n")
    for idx in range(len(trace)):
        k = idx + 1
        cells = [str(k), fmt(trace.residuals[idx]), fmt(trace.gradient_norms[idx]),
                 fmt(trace.lower_bounds[idx]),
                 fmt(trace.errors[idx]) if trace.errors is not None else "",
                 fmt(mu_map.get(k)), fmt(c_map.get(k))]
        if upper_bounds is not None:
            cells.append(fmt(upper_bounds[idx]))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def write_trace_csv(path, trace: IterationTrace, **kwargs) -> None:
    """Write :func:`trace_to_csv` output to a file."""
    with open(path, "w") as fh:
        fh.write(trace_to_csv(trace, **kwargs))
