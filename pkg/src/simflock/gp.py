"""Gaussian-process surrogate: SE-ARD kernel, Cholesky factorization,
log-marginal-likelihood hyperparameter search, posterior, and expected
improvement.

Hyperparameters are tuned by a multi-start coordinate search on the log
marginal likelihood rather than a gradient method, so the whole surrogate
needs nothing beyond dense linear algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import ndtr

from .errors import SingularKernelError

NOISE_FLOOR = 1e-10
JITTER_CEIL = 1e-4

LENGTHSCALE_BOUNDS = (1e-3, 10.0)
SIGNAL_VAR_BOUNDS = (1e-4, 1e4)
NOISE_VAR_BOUNDS = (NOISE_FLOOR, 1e-1)

N_RESTARTS = 8
N_SWEEPS = 64


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential ARD hyperparameters."""

    lengthscales: tuple[float, ...]
    signal_var: float = 1.0
    noise_var: float = 1e-6

    def check(self) -> str | None:
        if any(l <= 0 for l in self.lengthscales):
            return "lengthscales must be positive"
        if self.signal_var <= 0:
            return "signal_var must be positive"
        if self.noise_var < NOISE_FLOOR:
            return f"noise_var must be >= {NOISE_FLOOR}"
        return None


def default_kernel(d: int) -> KernelParams:
    return KernelParams(lengthscales=(0.5,) * d)


def kernel_matrix(params: KernelParams, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """K[i, j] = signal_var * exp(-0.5 * sum_k (xa_ik - xb_jk)^2 / l_k^2)."""
    ls = np.asarray(params.lengthscales)
    diff = xa[:, None, :] - xb[None, :, :]
    sq = np.sum((diff / ls) ** 2, axis=-1)
    return params.signal_var * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class SurrogateState:
    """Fitted surrogate: training data, kernel, and factorized covariance.

    y is stored standardized (mean 0, var 1 when the values vary); y_mean
    and y_scale undo the transform for reporting. Immutable once fitted, so
    it is safe to read from multiple threads.
    """

    x: np.ndarray
    y: np.ndarray  # standardized
    y_mean: float
    y_scale: float
    kernel: KernelParams
    chol: np.ndarray  # lower-triangular factor of K + noise*I
    alpha: np.ndarray  # (K + noise*I)^-1 y


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(np.mean(y))
    scale = float(np.std(y))
    if scale < 1e-12 or len(y) < 2:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def _factorize(params: KernelParams, x: np.ndarray) -> tuple[np.ndarray, KernelParams]:
    """Cholesky of K + noise*I, escalating jitter x10 up to the ceiling."""
    base = kernel_matrix(params, x, x)
    jitter = max(params.noise_var, NOISE_FLOOR)
    while True:
        try:
            chol = cholesky(base + jitter * np.eye(len(x)), lower=True)
            return chol, replace(params, noise_var=jitter)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_CEIL:
                raise SingularKernelError(
                    f"kernel matrix not SPD even with jitter {JITTER_CEIL}"
                ) from None


def log_marginal_likelihood(params: KernelParams, x: np.ndarray, y: np.ndarray) -> float:
    """LML of standardized targets; -inf when the kernel is numerically singular."""
    k = kernel_matrix(params, x, x)
    k[np.diag_indices_from(k)] += params.noise_var
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return -math.inf
    half = solve_triangular(chol, y, lower=True, check_finite=False)
    return float(
        -0.5 * half @ half - np.sum(np.log(np.diag(chol)))
        - 0.5 * len(x) * math.log(2 * math.pi)
    )


def _clip_theta(theta: np.ndarray, bounds: list[tuple[float, float]]) -> np.ndarray:
    lo = np.log10([b[0] for b in bounds])
    hi = np.log10([b[1] for b in bounds])
    return np.clip(theta, lo, hi)


def _optimize_hyperparams(
    x: np.ndarray,
    y: np.ndarray,
    start: KernelParams,
    rng: np.random.Generator,
) -> KernelParams:
    """Multi-start coordinate search on log10 hyperparameters.

    One restart starts from `start`; the rest are log-uniform in the bounds.
    Each restart runs up to N_SWEEPS coordinate sweeps with a step that
    halves whenever a full sweep fails to improve.
    """
    d = x.shape[1]
    bounds = [LENGTHSCALE_BOUNDS] * d + [SIGNAL_VAR_BOUNDS, NOISE_VAR_BOUNDS]

    def theta_to_params(theta: np.ndarray) -> KernelParams:
        vals = 10.0 ** theta
        return KernelParams(
            lengthscales=tuple(vals[:d]),
            signal_var=float(vals[d]),
            noise_var=float(vals[d + 1]),
        )

    def objective(theta: np.ndarray) -> float:
        return log_marginal_likelihood(theta_to_params(theta), x, y)

    starts = [
        _clip_theta(
            np.log10(np.array([*start.lengthscales, start.signal_var, start.noise_var])),
            bounds,
        )
    ]
    lo = np.log10([b[0] for b in bounds])
    hi = np.log10([b[1] for b in bounds])
    for _ in range(N_RESTARTS - 1):
        starts.append(lo + rng.random(len(bounds)) * (hi - lo))

    best_theta, best_val = starts[0], objective(starts[0])
    for theta0 in starts:
        theta = theta0.copy()
        val = objective(theta)
        step = 0.5
        for _ in range(N_SWEEPS):
            before = val
            for i in range(len(theta)):
                for direction in (1.0, -1.0):
                    cand = theta.copy()
                    cand[i] = min(hi[i], max(lo[i], cand[i] + direction * step))
                    cand_val = objective(cand)
                    if cand_val > val:
                        theta, val = cand, cand_val
                        break
            if val - before < 1e-6:  # plateau: refine or stop
                step *= 0.5
                if step < 1e-3:
                    break
        if val > best_val:
            best_theta, best_val = theta, val
    return theta_to_params(best_theta)


def gp_fit(
    x: np.ndarray,
    y: np.ndarray,
    kernel: KernelParams | None = None,
    optimize: bool = True,
    rng: np.random.Generator | None = None,
) -> SurrogateState:
    """Fit the surrogate on unit-cube rows x and objective values y.

    With optimize=True (the default) the kernel argument only seeds the
    hyperparameter search; pass optimize=False to fit at fixed
    hyperparameters.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError(f"{len(x)} rows vs {len(y)} targets")
    if len(x) < 2:
        raise ValueError("need at least 2 observations to fit")
    kernel = kernel or default_kernel(x.shape[1])
    bad = kernel.check()
    if bad:
        raise ValueError(bad)

    y_std, y_mean, y_scale = _standardize(y)
    if optimize:
        rng = rng or np.random.default_rng(0)
        kernel = _optimize_hyperparams(x, y_std, kernel, rng)
    chol, kernel = _factorize(kernel, x)
    alpha = solve_triangular(
        chol.T, solve_triangular(chol, y_std, lower=True), lower=False
    )
    return SurrogateState(
        x=x, y=y_std, y_mean=y_mean, y_scale=y_scale,
        kernel=kernel, chol=chol, alpha=alpha,
    )


def gp_posterior(state: SurrogateState, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query rows, destandardized.

    var = k(x,x) - ||L^-1 k(x,X)||^2, clamped at 0, scaled by y_scale^2.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k_star = kernel_matrix(state.kernel, x, state.x)  # q x n
    mean_std = k_star @ state.alpha
    v = solve_triangular(state.chol, k_star.T, lower=True)  # n x q
    var_std = state.kernel.signal_var - np.sum(v**2, axis=0)
    var_std = np.maximum(var_std, 0.0)
    return state.y_mean + state.y_scale * mean_std, state.y_scale**2 * var_std


def expected_improvement(
    state: SurrogateState, x: np.ndarray, best: float, mode: str = "min"
) -> np.ndarray:
    """Closed-form EI against the incumbent; zero wherever variance is zero."""
    mean, var = gp_posterior(state, x)
    sigma = np.sqrt(var)
    improve = best - mean if mode == "min" else mean - best
    out = np.zeros_like(mean)
    pos = sigma > 0
    z = improve[pos] / sigma[pos]
    pdf = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
    out[pos] = improve[pos] * ndtr(z) + sigma[pos] * pdf
    return np.maximum(out, 0.0)
