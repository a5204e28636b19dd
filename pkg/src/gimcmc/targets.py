"""Target distributions for the samplers and estimators.

Every target exposes the same minimal surface: ``dim``, ``log_density(x)``
(up to an additive constant), ``grad_log_density(x)``, and optionally a
``curvature_hook(x)`` returning a symmetric positive-definite matrix that
equals the covariance whenever the target is Gaussian.  Concrete targets
cover the benchmark problems: Bayesian logistic regression with a flat
prior, latent Gaussian models (GP classification / regression, log-Gaussian
Cox on a grid), a univariate Student-t, and a two-component Gaussian
mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.special import expit, gammaln, logsumexp

__all__ = [
    "TargetModel",
    "GaussianTarget",
    "LatentGaussianTarget",
    "BinaryLogisticLikelihood",
    "PoissonCoxLikelihood",
    "GaussianRegressionLikelihood",
    "ZeroLikelihood",
    "StudentTTarget",
    "GaussianMixtureTarget",
    "make_logistic_regression_target",
    "make_latent_gaussian_target",
    "squared_exponential_kernel",
    "exponential_grid_kernel",
    "student_t_preconditioner",
    "mixture_preconditioner",
    "logistic_mle",
]

KERNEL_JITTER = 1e-8


@dataclass(frozen=True)
class TargetModel:
    """Generic target: log-density, score, and optional curvature.

    ``log_density`` may drop additive constants; only differences enter
    acceptance ratios.  ``curvature_hook``, when present, maps a state to
    an SPD preconditioning matrix.
    """

    dim: int
    log_density: Callable[[np.ndarray], float]
    grad_log_density: Callable[[np.ndarray], np.ndarray]
    curvature_hook: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _check_spd_symmetric(cov: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.all(np.abs(cov - cov.T) <= tol * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be symmetric")
    return cov


class GaussianTarget:
    """Multivariate Gaussian with known mean and covariance."""

    def __init__(self, mean, covariance):
        self.mean = np.asarray(mean, dtype=float)
        self.covariance = _check_spd_symmetric(covariance)
        if self.mean.shape != (self.covariance.shape[0],):
            raise ValueError("mean/covariance dimension mismatch")
        self.dim = self.mean.shape[0]
        # raises LinAlgError if not positive definite
        self.chol = cholesky(self.covariance, lower=True)
        self._cho = cho_factor(self.covariance, lower=True)

    def log_density(self, x) -> float:
        r = np.asarray(x, dtype=float) - self.mean
        return -0.5 * float(r @ cho_solve(self._cho, r))

    def grad_log_density(self, x) -> np.ndarray:
        r = self.mean - np.asarray(x, dtype=float)
        return cho_solve(self._cho, r)

    def curvature_hook(self, x) -> np.ndarray:
        return self.covariance

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            return self.mean + self.chol @ rng.standard_normal(self.dim)
        eps = rng.standard_normal((n, self.dim))
        return self.mean + eps @ self.chol.T


# ---------------------------------------------------------------------------
# Likelihood terms for latent Gaussian models.  Observations are
# conditionally independent given the latent vector, so the negative
# log-likelihood Hessian is diagonal.
# ---------------------------------------------------------------------------


class BinaryLogisticLikelihood:
    """g(x) = sum_i y_i log sigmoid(x_i) + (1-y_i) log(1-sigmoid(x_i))."""

    kind = "binary-logistic"

    def __init__(self, labels):
        labels = np.asarray(labels, dtype=float)
        if not np.all((labels == 0.0) | (labels == 1.0)):
            raise ValueError("labels must be binary 0/1")
        self.labels = labels
        self.dim = labels.shape[0]

    def g(self, x) -> float:
        x = np.asarray(x, dtype=float)
        # y*x - log(1 + e^x), stable for both signs of x
        return float(np.sum(self.labels * x - np.logaddexp(0.0, x)))

    def grad(self, x) -> np.ndarray:
        return self.labels - expit(np.asarray(x, dtype=float))

    def curvature_diag(self, x) -> np.ndarray:
        p = expit(np.asarray(x, dtype=float))
        return p * (1.0 - p)

    def constant_curvature_diag(self) -> np.ndarray:
        return np.zeros(self.dim)


class PoissonCoxLikelihood:
    """Poisson counts on a grid: y_i ~ Poisson(m * exp(x_i + v))."""

    kind = "poisson-cox"

    def __init__(self, counts, cell_area: float, offset: float):
        counts = np.asarray(counts, dtype=float)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        self.counts = counts
        self.cell_area = float(cell_area)
        self.offset = float(offset)
        self.dim = counts.shape[0]

    def g(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.counts * (x + self.offset)
                            - self.cell_area * np.exp(x + self.offset)))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.counts - self.cell_area * np.exp(x + self.offset)

    def curvature_diag(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.cell_area * np.exp(x + self.offset)

    def constant_curvature_diag(self) -> np.ndarray:
        return np.zeros(self.dim)


class GaussianRegressionLikelihood:
    """g(x) = -||y - x||^2 / (2 sigma^2): fully constant curvature I/sigma^2."""

    kind = "gaussian-regression"

    def __init__(self, observations, noise_variance: float):
        if noise_variance <= 0:
            raise ValueError("noise variance must be positive")
        self.observations = np.asarray(observations, dtype=float)
        self.noise_variance = float(noise_variance)
        self.dim = self.observations.shape[0]

    def g(self, x) -> float:
        r = self.observations - np.asarray(x, dtype=float)
        return -0.5 * float(r @ r) / self.noise_variance

    def grad(self, x) -> np.ndarray:
        return (self.observations - np.asarray(x, dtype=float)) / self.noise_variance

    def curvature_diag(self, x) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.noise_variance)

    def constant_curvature_diag(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.noise_variance)


class ZeroLikelihood:
    """g identically zero: the target degenerates to the Gaussian prior."""

    kind = "zero"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def g(self, x) -> float:
        return 0.0

    def grad(self, x) -> np.ndarray:
        return np.zeros(self.dim)

    def curvature_diag(self, x) -> np.ndarray:
        return np.zeros(self.dim)

    def constant_curvature_diag(self) -> np.ndarray:
        return np.zeros(self.dim)


class _ResidualLikelihood:
    """Likelihood with its constant curvature removed.

    If -grad^2 g = -grad^2 g_tilde + C with C constant diagonal, then
    g_tilde(x) = g(x) + x' diag(C) x / 2 has zero constant curvature and C
    is absorbed into the prior covariance.
    """

    def __init__(self, base, const_diag: np.ndarray):
        self.base = base
        self.kind = base.kind
        self.dim = base.dim
        self.const_diag = const_diag

    def g(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.base.g(x) + 0.5 * float(x @ (self.const_diag * x))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.grad(x) + self.const_diag * x

    def curvature_diag(self, x) -> np.ndarray:
        return self.base.curvature_diag(x) - self.const_diag

    def constant_curvature_diag(self) -> np.ndarray:
        return np.zeros(self.dim)


class LatentGaussianTarget:
    """pi(x) proportional to exp{g(x)} N(x | 0, Sigma0).

    Any constant part of the likelihood curvature has already been absorbed
    into ``prior_covariance`` by :func:`make_latent_gaussian_target`, so the
    stored ``likelihood`` has zero constant curvature.
    """

    def __init__(self, prior_covariance: np.ndarray, likelihood):
        self.prior_covariance = _check_spd_symmetric(prior_covariance, tol=1e-10)
        self.likelihood = likelihood
        self.dim = likelihood.dim
        if self.prior_covariance.shape[0] != self.dim:
            raise ValueError("prior/likelihood dimension mismatch")
        self._prior_cho = cho_factor(self.prior_covariance, lower=True)
        self.prior_chol = cholesky(self.prior_covariance, lower=True)

    def prior_solve(self, v) -> np.ndarray:
        return cho_solve(self._prior_cho, np.asarray(v, dtype=float))

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.likelihood.g(x) - 0.5 * float(x @ self.prior_solve(x))

    def grad_log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.likelihood.grad(x) - self.prior_solve(x)

    def delta(self, x) -> float:
        """Mean diagonal curvature of -grad^2 g, clamped away from zero."""
        from .latent_gaussian import compute_delta

        return compute_delta(self.likelihood.curvature_diag(x))

    def curvature_hook(self, x) -> np.ndarray:
        """Dense (Sigma0^-1 + delta_x I)^-1; O(d^3), for small-d reference use."""
        delta = self.delta(x)
        prec = np.linalg.inv(self.prior_covariance) + delta * np.eye(self.dim)
        return np.linalg.inv(prec)


def make_latent_gaussian_target(prior_covariance, likelihood) -> LatentGaussianTarget:
    """Build a latent Gaussian target, absorbing constant curvature.

    A constant diagonal component C of the negative likelihood Hessian is
    folded into the prior, Sigma0 <- (Sigma0^-1 + C)^-1, and the residual
    likelihood keeps only the state-dependent part.
    """
    prior_covariance = _check_spd_symmetric(prior_covariance, tol=1e-10)
    if prior_covariance.shape[0] != likelihood.dim:
        raise ValueError("prior covariance does not match likelihood dimension")
    const = np.asarray(likelihood.constant_curvature_diag(), dtype=float)
    if np.any(const != 0.0):
        prec = np.linalg.inv(prior_covariance) + np.diag(const)
        prior_covariance = np.linalg.inv(prec)
        prior_covariance = 0.5 * (prior_covariance + prior_covariance.T)
        likelihood = _ResidualLikelihood(likelihood, const)
    return LatentGaussianTarget(prior_covariance, likelihood)


class StudentTTarget:
    """Univariate Student-t with nu degrees of freedom (normalized)."""

    def __init__(self, degrees_of_freedom: float):
        if degrees_of_freedom <= 0:
            raise ValueError("degrees of freedom must be positive")
        self.nu = float(degrees_of_freedom)
        self.dim = 1
        self._log_norm = (gammaln((self.nu + 1.0) / 2.0)
                          - gammaln(self.nu / 2.0)
                          - 0.5 * math.log(self.nu * math.pi))

    def log_density(self, x) -> float:
        x0 = float(np.asarray(x).reshape(()) if np.ndim(x) == 0 else np.asarray(x)[0])
        return self._log_norm - 0.5 * (self.nu + 1.0) * math.log1p(x0 * x0 / self.nu)

    def grad_log_density(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return -(self.nu + 1.0) * x / (self.nu + x * x)

    def curvature_hook(self, x) -> np.ndarray:
        return np.array([[student_t_preconditioner(self.nu)]])


def student_t_preconditioner(nu: float) -> float:
    """Inverse Fisher information of the Student-t location: (nu+3)/(nu+1)."""
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    return (nu + 3.0) / (nu + 1.0)


class GaussianMixtureTarget:
    """Finite Gaussian mixture with full component covariances."""

    def __init__(self, weights, means, covariances):
        self.weights = np.asarray(weights, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights <= 0):
            raise ValueError("weights must be positive and sum to 1")
        self.means = np.asarray(means, dtype=float)
        self.covariances = np.asarray(covariances, dtype=float)
        self.n_components = self.weights.shape[0]
        self.dim = self.means.shape[1]
        chos = [cho_factor(_check_spd_symmetric(c), lower=True)
                for c in self.covariances]
        self._precisions = np.stack([cho_solve(cho, np.eye(self.dim))
                                     for cho in chos])
        self._log_consts = np.array(
            [math.log(w) - np.sum(np.log(np.diag(cho[0])))
             - 0.5 * self.dim * math.log(2.0 * math.pi)
             for w, cho in zip(self.weights, chos)])

    def _component_logpdfs(self, x) -> np.ndarray:
        r = np.asarray(x, dtype=float) - self.means
        quads = np.einsum("ki,kij,kj->k", r, self._precisions, r)
        return self._log_consts - 0.5 * quads

    def log_density(self, x) -> float:
        return float(logsumexp(self._component_logpdfs(x)))

    def responsibilities(self, x) -> np.ndarray:
        lp = self._component_logpdfs(x)
        lp = lp - logsumexp(lp)
        return np.exp(lp)

    def grad_log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        resp = self.responsibilities(x)
        pulls = np.einsum("kij,kj->ki", self._precisions, self.means - x)
        return resp @ pulls

    def curvature_hook(self, x) -> np.ndarray:
        return mixture_preconditioner(self, x)


def mixture_preconditioner(target: GaussianMixtureTarget, x) -> np.ndarray:
    """Posterior-weighted average of the component covariances.

    Reduces to the common covariance when all components share one, so it
    is a valid Gaussian-optimal preconditioning.
    """
    resp = target.responsibilities(x)
    return np.tensordot(resp, target.covariances, axes=1)


# ---------------------------------------------------------------------------
# Bayesian logistic regression with a flat prior.
# ---------------------------------------------------------------------------


def make_logistic_regression_target(design_matrix, labels) -> TargetModel:
    """Posterior of logistic-regression coefficients under a flat prior.

    The design matrix is expected to include an intercept column.  The
    curvature hook returns the inverse observed Fisher information
    (X' W X)^-1 at the query point.
    """
    X = np.asarray(design_matrix, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-d")
    if y.shape != (X.shape[0],):
        raise ValueError("labels length must match design matrix rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary 0/1")
    d = X.shape[1]

    def log_density(theta):
        z = X @ np.asarray(theta, dtype=float)
        return float(np.sum(y * z - np.logaddexp(0.0, z)))

    def grad_log_density(theta):
        z = X @ np.asarray(theta, dtype=float)
        return X.T @ (y - expit(z))

    def curvature_hook(theta):
        p = expit(X @ np.asarray(theta, dtype=float))
        w = p * (1.0 - p)
        fisher = (X * w[:, None]).T @ X
        return np.linalg.inv(fisher)

    return TargetModel(dim=d, log_density=log_density,
                       grad_log_density=grad_log_density,
                       curvature_hook=curvature_hook)


def logistic_mle(design_matrix, labels, tol: float = 1e-10,
                 max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Newton iterations for the logistic MLE.

    Returns ``(theta_hat, covariance)`` where the covariance is the inverse
    Fisher information at the MLE, the usual constant preconditioner for
    posterior sampling.
    """
    X = np.asarray(design_matrix, dtype=float)
    y = np.asarray(labels, dtype=float)
    theta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        z = X @ theta
        p = expit(z)
        grad = X.T @ (y - p)
        w = np.clip(p * (1.0 - p), 1e-10, None)
        fisher = (X * w[:, None]).T @ X
        step = np.linalg.solve(fisher, grad)
        theta = theta + step
        if np.max(np.abs(grad)) < tol:
            break
    z = X @ theta
    p = expit(z)
    w = np.clip(p * (1.0 - p), 1e-10, None)
    fisher = (X * w[:, None]).T @ X
    return theta, np.linalg.inv(fisher)


# ---------------------------------------------------------------------------
# Covariance kernels for the latent Gaussian experiments.
# ---------------------------------------------------------------------------


def squared_exponential_kernel(inputs, sigma2: float, lengthscale: float) -> np.ndarray:
    """K_ij = sigma2 * exp(-||z_i - z_j||^2 / (2 l^2)) with diagonal jitter."""
    if sigma2 <= 0 or lengthscale <= 0:
        raise ValueError("kernel hyperparameters must be positive")
    Z = np.asarray(inputs, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    sq = np.sum(Z * Z, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    K = sigma2 * np.exp(-0.5 * d2 / (lengthscale * lengthscale))
    K[np.diag_indices_from(K)] += KERNEL_JITTER * sigma2
    return K


def exponential_grid_kernel(grid_size: int, sigma2: float, beta: float) -> np.ndarray:
    """Exponential covariance over a regular grid of unit cells.

    K((i,j),(i',j')) = sigma2 * exp(-dist / (grid_size * beta)); normalizing
    the distance by the grid side keeps the correlation length proportional
    to the domain so smaller grids stay statistically comparable.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if sigma2 <= 0 or beta <= 0:
        raise ValueError("kernel hyperparameters must be positive")
    ii, jj = np.meshgrid(np.arange(grid_size), np.arange(grid_size), indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)
    sq = np.sum(coords * coords, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (coords @ coords.T)
    np.maximum(d2, 0.0, out=d2)
    K = sigma2 * np.exp(-np.sqrt(d2) / (grid_size * beta))
    K[np.diag_indices_from(K)] += KERNEL_JITTER * sigma2
    return K
