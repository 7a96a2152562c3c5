"""
gp.py — Exact Gaussian-process regression oracle with an RBF kernel.

Model:
  k(a, b) = output_scale · exp(-‖a - b‖² / (2 · length_scale²))
  K = k(X, X) + jitter · I,  L Lᵀ = K,  α = K⁻¹ (y - ȳ)

Hyperparameters (length_scale, output_scale) are fit by gradient descent on
the negative log marginal likelihood in log-parameter space. Steps are
length-limited, clipped into THETA_BOUNDS and halved whenever they would
increase the objective or leave it undefined. The jitter is fixed
unless the Cholesky factorization fails, in which case it is escalated ×10
up to MAX_JITTER.

Inputs can be mapped to normalized domain units ([-1, 1] per axis) by
passing the grid bounds to fit().
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from . import PROJECT_NAME
from .surface import Dataset, GridSpec, Position, PosteriorField

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.gp")

DEFAULT_ITERATIONS = 100
DEFAULT_STEP_SIZE = 0.1
DEFAULT_MAX_HALVINGS = 10
DEFAULT_LENGTH_SCALE = 1.0
DEFAULT_JITTER = 1e-6
MIN_OUTPUT_SCALE = 1e-4
MAX_JITTER = 1e-2
# [log length_scale, log output_scale] box the optimizer stays inside
THETA_BOUNDS = (np.log([1e-3, 1e-8]), np.log([1e3, 1e8]))
_LOG_2PI = math.log(2 * math.pi)
_CANDIDATE_FAILURES = (LinAlgError, ValueError, FloatingPointError, OverflowError)


class GPNumericalError(RuntimeError):
    """Cholesky factorization failed at every jitter level tried."""

    def __init__(self, jitters: Sequence[float]):
        tried = ", ".join(f"{j:g}" for j in jitters)
        super().__init__(f"kernel matrix not positive definite (jitter tried: {tried})")
        self.jitters = list(jitters)


@dataclass(frozen=True)
class KernelParams:
    length_scale: float = DEFAULT_LENGTH_SCALE
    output_scale: float = 1.0
    noise_jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if not self.length_scale > 0 or not self.output_scale > 0:
            raise ValueError(f"length_scale and output_scale must be > 0, got {self}")
        if not self.noise_jitter >= 0:
            raise ValueError(f"noise_jitter must be >= 0, got {self.noise_jitter}")

    @property
    def theta(self) -> np.ndarray:
        """Optimized parameters in log space: [log length_scale, log output_scale]."""
        return np.array([math.log(self.length_scale), math.log(self.output_scale)])

    def with_theta(self, theta: np.ndarray) -> KernelParams:
        return KernelParams(float(np.exp(theta[0])), float(np.exp(theta[1])), self.noise_jitter)

    def with_jitter(self, jitter: float) -> KernelParams:
        return KernelParams(self.length_scale, self.output_scale, jitter)


def rbf_kernel(a: Position, b: Position, params: KernelParams) -> float:
    d2 = (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2
    return params.output_scale * math.exp(-d2 / (2.0 * params.length_scale**2))


def kernel_matrix(A: np.ndarray, B: np.ndarray, params: KernelParams) -> np.ndarray:
    """RBF covariance between the rows of A and B (no jitter)."""
    D = cdist(np.atleast_2d(A), np.atleast_2d(B), metric="sqeuclidean")
    return params.output_scale * np.exp(-D / (2.0 * params.length_scale**2))


def default_params(training: Dataset, jitter: float = DEFAULT_JITTER) -> KernelParams:
    """Unit length scale, output scale = variance of the observed values."""
    variance = float(np.var(training.values)) if len(training) else 0.0
    return KernelParams(DEFAULT_LENGTH_SCALE, max(variance, MIN_OUTPUT_SCALE), jitter)


@dataclass(frozen=True, eq=False)
class GPModel:
    """A GP conditioned on its training set at fixed hyperparameters."""

    params: KernelParams
    training: Dataset
    chol: np.ndarray  # lower-triangular L, L Lᵀ = K + jitter·I
    alpha: np.ndarray
    y_mean: float
    input_center: np.ndarray
    input_scale: np.ndarray

    @property
    def inputs(self) -> np.ndarray:
        """Training inputs in the model's (possibly normalized) units."""
        return _normalize(self.training.positions, self.input_center, self.input_scale)


# ---------------------------------------------------------------------------
# Internals
# ---------------------------------------------------------------------------


def _input_transform(bounds: Optional[GridSpec]) -> Tuple[np.ndarray, np.ndarray]:
    if bounds is None:
        return np.zeros(2), np.ones(2)
    center = np.array([(bounds.x1_min + bounds.x1_max) / 2, (bounds.x2_min + bounds.x2_max) / 2])
    half = np.array([(bounds.x1_max - bounds.x1_min) / 2, (bounds.x2_max - bounds.x2_min) / 2])
    half[half == 0] = 1.0
    return center, half


def _normalize(X: np.ndarray, center: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(np.asarray(X, dtype=float)) - center) / scale


def _next_jitter(jitter: float) -> float:
    return jitter * 10 if jitter > 0 else 1e-10


def _objective(theta: np.ndarray, D: np.ndarray, y: np.ndarray, jitter: float) -> Tuple[float, np.ndarray]:
    """NLML and its gradient w.r.t. [log length_scale, log output_scale].

    Raises LinAlgError when K is not positive definite and FloatingPointError
    when θ maps to a kernel or objective that is not finite.
    """
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        ell2 = float(np.exp(2.0 * theta[0]))
        s = float(np.exp(theta[1]))
        if not (np.isfinite(ell2) and np.isfinite(s) and ell2 > 0 and s > 0):
            raise FloatingPointError(f"kernel parameters out of range at theta={theta}")
        E = s * np.exp(-D / (2.0 * ell2))
    if not np.all(np.isfinite(E)):
        raise FloatingPointError(f"non-finite kernel matrix at theta={theta}")
    K = E.copy()
    K[np.diag_indices_from(K)] += jitter
    L = cholesky(K, lower=True)
    alpha = cho_solve((L, True), y)
    n = y.shape[0]
    value = 0.5 * float(y @ alpha) + float(np.log(np.diag(L)).sum()) + 0.5 * n * _LOG_2PI

    K_inv = cho_solve((L, True), np.eye(n))
    dK_dlog_ell = E * (D / ell2)
    dK_dlog_s = E
    # dNLML/dθ = ½ tr(K⁻¹ ∂K) − ½ αᵀ ∂K α
    grad = np.array(
        [
            0.5 * float(np.einsum("ij,ji->", K_inv, dK_dlog_ell)) - 0.5 * float(alpha @ dK_dlog_ell @ alpha),
            0.5 * float(np.einsum("ij,ji->", K_inv, dK_dlog_s)) - 0.5 * float(alpha @ dK_dlog_s @ alpha),
        ]
    )
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise FloatingPointError(f"non-finite NLML at theta={theta}")
    return value, grad


def nlml_and_gradient(theta: np.ndarray, X: np.ndarray, y: np.ndarray, jitter: float) -> Tuple[float, np.ndarray]:
    """Public form of the fit objective for already-transformed inputs and centered targets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    D = cdist(X, X, metric="sqeuclidean")
    return _objective(np.asarray(theta, dtype=float), D, np.asarray(y, dtype=float), jitter)


def _factorize(K: np.ndarray, jitter: float) -> Tuple[np.ndarray, float]:
    attempts: List[float] = []
    while True:
        attempts.append(jitter)
        Kj = K.copy()
        Kj[np.diag_indices_from(Kj)] += jitter
        try:
            return cholesky(Kj, lower=True), jitter
        except LinAlgError:
            nxt = _next_jitter(jitter)
            if nxt > MAX_JITTER * (1 + 1e-12):
                raise GPNumericalError(attempts) from None
            logger.warning(f"Cholesky failed at jitter {jitter:g}, retrying with {nxt:g}")
            jitter = nxt


def _start_objective(params: KernelParams, D: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray, float]:
    """Objective at ``params``, escalating the jitter until K factorizes."""
    attempts = []
    jitter = params.noise_jitter
    while True:
        attempts.append(jitter)
        try:
            value, grad = _objective(params.theta, D, y, jitter)
            return value, grad, jitter
        except LinAlgError:
            nxt = _next_jitter(jitter)
            if nxt > MAX_JITTER * (1 + 1e-12):
                raise GPNumericalError(attempts) from None
            logger.warning(f"Cholesky failed at jitter {jitter:g}, retrying with {nxt:g}")
            jitter = nxt


def _prepare(training: Dataset, bounds: Optional[GridSpec]) -> Tuple[np.ndarray, np.ndarray]:
    center, scale = _input_transform(bounds)
    X = _normalize(training.positions, center, scale)
    y = training.values - float(np.mean(training.values))
    return cdist(X, X, metric="sqeuclidean"), y


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def condition(training: Dataset, params: KernelParams, bounds: Optional[GridSpec] = None) -> GPModel:
    """Condition a GP on ``training`` at fixed hyperparameters."""
    if len(training) == 0:
        raise ValueError("GP training set is empty")
    center, scale = _input_transform(bounds)
    X = _normalize(training.positions, center, scale)
    y_raw = training.values
    y_mean = float(np.mean(y_raw))
    y = y_raw - y_mean

    L, jitter = _factorize(kernel_matrix(X, X, params), params.noise_jitter)
    if jitter != params.noise_jitter:
        params = params.with_jitter(jitter)
    alpha = cho_solve((L, True), y)
    return GPModel(params, training, L, alpha, y_mean, center, scale)


def best_start(
    training: Dataset, candidates: Sequence[KernelParams], bounds: Optional[GridSpec] = None
) -> KernelParams:
    """The candidate with the lowest NLML on ``training`` (first on ties).

    Candidates whose kernel cannot be factorized at their own jitter are
    skipped; when none can, the first candidate is returned.
    """
    if not candidates:
        raise ValueError("best_start needs at least one candidate")
    D, y = _prepare(training, bounds)
    best, best_value = candidates[0], math.inf
    for params in candidates:
        try:
            value, _ = _objective(params.theta, D, y, params.noise_jitter)
        except _CANDIDATE_FAILURES:
            continue
        if value < best_value:
            best, best_value = params, value
    return best


def fit(
    training: Dataset,
    init: Optional[KernelParams] = None,
    iterations: int = DEFAULT_ITERATIONS,
    bounds: Optional[GridSpec] = None,
    step_size: float = DEFAULT_STEP_SIZE,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
) -> GPModel:
    """Fit length_scale and output_scale by gradient descent on the NLML.

    Each iteration moves θ against the gradient by at most ``step_size`` (the
    gradient is rescaled when its norm exceeds 1) and clips it into
    THETA_BOUNDS. The step is halved, at most ``max_halvings`` times, while
    the candidate increases the NLML or cannot be evaluated. When no step
    improves, the optimization stops early since later iterations would
    retry the same point.
    """
    if len(training) == 0:
        raise ValueError("GP training set is empty")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    params = init if init is not None else default_params(training)

    D, y = _prepare(training, bounds)
    value, grad, jitter = _start_objective(params, D, y)
    if jitter != params.noise_jitter:
        params = params.with_jitter(jitter)

    lower, upper = THETA_BOUNDS
    start_value = value
    theta = params.theta
    taken = 0
    for _ in range(iterations):
        direction = grad / max(1.0, float(np.linalg.norm(grad)))
        step = step_size
        accepted = False
        for _ in range(max_halvings + 1):
            candidate = np.clip(theta - step * direction, lower, upper)
            try:
                cand_value, cand_grad = _objective(candidate, D, y, jitter)
            except _CANDIDATE_FAILURES:
                cand_value = math.inf
            if cand_value <= value:
                accepted = True
                break
            step /= 2
        if not accepted or np.array_equal(candidate, theta):
            break
        theta, value, grad = candidate, cand_value, cand_grad
        params = params.with_theta(theta)
        taken += 1

    logger.debug(
        f"GP fit: n={len(training)} steps={taken}/{iterations} nlml {start_value:.6g} -> {value:.6g} "
        f"(length_scale={params.length_scale:.4g}, output_scale={params.output_scale:.4g})"
    )
    return condition(training, params, bounds)


def nlml(model: GPModel) -> float:
    """½ yᵀα + Σ log Lᵢᵢ + (n/2) log 2π, with y centered on the training mean."""
    y = model.training.values - model.y_mean
    n = y.shape[0]
    return 0.5 * float(y @ model.alpha) + float(np.log(np.diag(model.chol)).sum()) + 0.5 * n * _LOG_2PI


def predict(model: GPModel, targets) -> PosteriorField:
    """Posterior mean and (diagonal) variance at ``targets``, in target order."""
    T = _normalize(np.asarray(targets, dtype=float), model.input_center, model.input_scale)
    if T.shape[0] == 0:
        raise ValueError("predict needs at least one target")
    Ks = kernel_matrix(model.inputs, T, model.params)
    means = Ks.T @ model.alpha + model.y_mean
    v = solve_triangular(model.chol, Ks, lower=True)
    variances = model.params.output_scale - np.einsum("ij,ij->j", v, v)
    return PosteriorField(means, variances)
