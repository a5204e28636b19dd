"""Control variates from Poisson-equation solutions of the GI kernels.

On a Gaussian target N(mu, Sigma) the n-step transition of a GI proposal
with step size gamma (beta = 1 - gamma) is the autoregression
N(beta^n x + (1 - beta^n) mu, (1 - beta^{2n}) Sigma), which makes the
Poisson equation P G - G = -F + pi(F) solvable in closed form for several
functions F:

    F(x) = x                    G(x) = x / gamma
    F(x) = x x'                 G(x) = [x x' + (1-g)(x mu' + mu x')] / (2g - g^2)
    F(x) = (x-mu)(x-mu)'        G(x) = (x-mu)(x-mu)' / (2g - g^2)
    F(x) = exp(a'x)             truncated N-term series (each term a Gaussian MGF)
    F(x) = 1{a'x > b}           truncated N-term series of normal CDFs

On a non-Gaussian target the same G still yields the unbiased estimator

    mu_nG(F) = (1/n) sum F(X_i) + b1 * alpha_i (G(Y_i) - G(X_i))
                               + b2 * (G(Y_i) - E_{q(.|X_i)}[G])

with the two zero-mean control variates weighted by coefficients (b1, b2)
estimated per output component to minimize the variance.  When the target
is Gaussian, (b1, b2) = (1, -1) recovers the exact zero-variance estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

__all__ = [
    "PoissonSolution",
    "ControlVariatePair",
    "EstimatorReport",
    "solution_linear",
    "solution_quadratic",
    "solution_indicator",
    "solution_exp",
    "control_variates",
    "estimate_beta",
    "cv_estimator",
    "zero_variance_estimator_gaussian",
    "gi_proposal_cov",
    "f_identity",
    "f_quadratic",
    "f_indicator",
    "f_exp",
]

KN_COND_LIMIT = 1e12
KN_RIDGE = 1e-10


def _check_gamma(gamma: float) -> float:
    if not 0.0 < gamma < 2.0:
        raise ValueError("gamma must lie in (0, 2)")
    return float(gamma)


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def gi_proposal_cov(gamma: float, precond: np.ndarray) -> np.ndarray:
    """Proposal covariance (2g - g^2) * precond of a GI kernel."""
    g = _check_gamma(gamma)
    return (2.0 * g - g * g) * np.asarray(precond, dtype=float)


def _proj_var(cov, a: np.ndarray, n: int) -> np.ndarray:
    """a' C a per state.

    ``cov`` is a shared (d, d) matrix, per-state (n, d, d) matrices, or an
    (n,) vector of already-projected variances (the only quantity the
    scalar solutions need when the preconditioner is position-dependent).
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        if cov.shape[0] != n:
            raise ValueError("projected variances must have one entry per state")
        return cov
    if cov.ndim == 2:
        return np.full(n, float(a @ cov @ a))
    if cov.ndim == 3:
        return np.einsum("i,nij,j->n", a, cov, a)
    raise ValueError("cov must be (n,), (d, d) or (n, d, d)")


class PoissonSolution:
    """A function G with the closed form of its proposal expectation.

    ``evaluate`` maps states (n, d) to per-component values (n, k);
    ``proposal_expectation`` maps proposal means (n, d), plus the proposal
    covariance where the solution needs it, to E_{q}[G] of the same shape.
    """

    kind: str
    gamma: float
    needs_cov = False

    def n_outputs(self, dim: int) -> int:
        raise NotImplementedError

    def evaluate(self, states) -> np.ndarray:
        raise NotImplementedError

    def proposal_expectation(self, means, cov=None) -> np.ndarray:
        raise NotImplementedError


class _LinearSolution(PoissonSolution):
    kind = "linear"

    def __init__(self, gamma: float):
        self.gamma = _check_gamma(gamma)

    def n_outputs(self, dim):
        return dim

    def evaluate(self, states):
        return _rows(states) / self.gamma

    def proposal_expectation(self, means, cov=None):
        return _rows(means) / self.gamma


class _QuadraticSolution(PoissonSolution):
    needs_cov = True

    def __init__(self, gamma: float, mu, raw: bool):
        self.gamma = _check_gamma(gamma)
        self.mu = np.asarray(mu, dtype=float)
        self.raw = bool(raw)
        self.kind = "quadratic-raw" if raw else "quadratic-centered"
        self._scale = 2.0 * self.gamma - self.gamma * self.gamma

    def n_outputs(self, dim):
        return dim * dim

    def _form(self, x2, cross):
        # x2 is E[y y'] (or y y'); cross the (x mu' + mu x') correction
        if self.raw:
            return (x2 + (1.0 - self.gamma) * cross) / self._scale
        return x2 / self._scale

    def evaluate(self, states):
        x = _rows(states)
        n, d = x.shape
        if self.raw:
            outer = np.einsum("ni,nj->nij", x, x)
            cross = np.einsum("ni,j->nij", x, self.mu)
            cross = cross + cross.transpose(0, 2, 1)
            vals = self._form(outer, cross)
        else:
            r = x - self.mu
            vals = np.einsum("ni,nj->nij", r, r) / self._scale
        return vals.reshape(n, d * d)

    def proposal_expectation(self, means, cov=None):
        if cov is None:
            raise ValueError("quadratic solution needs the proposal covariance")
        m = _rows(means)
        n, d = m.shape
        cov = np.asarray(cov, dtype=float)
        cov_n = np.broadcast_to(cov, (n, d, d)) if cov.ndim == 2 else cov
        second = cov_n + np.einsum("ni,nj->nij", m, m)
        if self.raw:
            cross = np.einsum("ni,j->nij", m, self.mu)
            cross = cross + cross.transpose(0, 2, 1)
            vals = self._form(second, cross)
        else:
            r = m - self.mu
            vals = (cov_n + np.einsum("ni,nj->nij", r, r)) / self._scale
        return vals.reshape(n, d * d)


class _ExpSolution(PoissonSolution):
    """Truncated series for F(x) = exp(a'x), evaluated in log space."""

    kind = "exp-truncated"
    needs_cov = True

    def __init__(self, gamma: float, mu, sigma, a, truncation: int):
        self.gamma = _check_gamma(gamma)
        if truncation < 1:
            raise ValueError("truncation level must be >= 1")
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        self.a = np.asarray(a, dtype=float)
        self.truncation = int(truncation)
        beta = 1.0 - self.gamma
        self._beta_pows = beta ** np.arange(self.truncation + 1)  # n = 0..N
        self._asa = float(self.a @ self.sigma @ self.a)

    def n_outputs(self, dim):
        return 1

    def _log_terms(self, proj, extra_var):
        """log of each series term; proj = a'x or a'm, extra_var = a'Ca or 0."""
        bp = self._beta_pows[None, :]
        a_mu = float(self.a @ self.mu)
        logs = (bp * proj[:, None]
                + (1.0 - bp) * a_mu
                + 0.5 * (1.0 - bp ** 2) * self._asa
                + 0.5 * bp ** 2 * extra_var[:, None])
        return logs

    def evaluate(self, states):
        x = _rows(states)
        proj = x @ self.a
        logs = self._log_terms(proj, np.zeros(x.shape[0]))
        with np.errstate(over="ignore"):
            vals = np.exp(logsumexp(logs, axis=1))
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("exp-truncated solution overflowed")
        return vals[:, None]

    def proposal_expectation(self, means, cov=None):
        if cov is None:
            raise ValueError("exp solution needs the proposal covariance")
        m = _rows(means)
        proj = m @ self.a
        extra = _proj_var(cov, self.a, m.shape[0])
        logs = self._log_terms(proj, extra)
        with np.errstate(over="ignore"):
            vals = np.exp(logsumexp(logs, axis=1))
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("exp-truncated expectation overflowed")
        return vals[:, None]


class _IndicatorSolution(PoissonSolution):
    """Truncated series for F(x) = 1{a'x > b}.

    Series terms use Phi((a'{beta^n x + (1-beta^n) mu} - b) / s_n) with
    s_n^2 = (1 - beta^{2n}) a' Sigma a; the proposal expectation closes
    each term with E[Phi((u'y + v)/s)] = Phi((u'm + v)/sqrt(s^2 + u'Cu)).
    """

    kind = "indicator-truncated"
    needs_cov = True

    def __init__(self, gamma: float, mu, sigma, a, b: float, truncation: int):
        self.gamma = _check_gamma(gamma)
        if truncation < 1:
            raise ValueError("truncation level must be >= 1")
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.truncation = int(truncation)
        asa = float(self.a @ self.sigma @ self.a)
        if asa <= 0.0:
            raise ValueError("a' Sigma a must be positive")
        beta = 1.0 - self.gamma
        ns = np.arange(1, self.truncation + 1)
        self._bp = beta ** ns                      # beta^n, n = 1..N
        self._s2 = (1.0 - beta ** (2 * ns)) * asa  # s_n^2 > 0

    def n_outputs(self, dim):
        return 1

    def evaluate(self, states):
        x = _rows(states)
        proj = x @ self.a
        a_mu = float(self.a @ self.mu)
        args = (self._bp[None, :] * proj[:, None]
                + (1.0 - self._bp[None, :]) * a_mu - self.b)
        vals = (proj > self.b).astype(float) + np.sum(
            ndtr(args / np.sqrt(self._s2)[None, :]), axis=1)
        return vals[:, None]

    def proposal_expectation(self, means, cov=None):
        if cov is None:
            raise ValueError("indicator solution needs the proposal covariance")
        m = _rows(means)
        proj = m @ self.a
        aca = _proj_var(cov, self.a, m.shape[0])
        a_mu = float(self.a @ self.mu)
        # n = 0 term: E[1{a'y > b}]
        vals = ndtr((proj - self.b) / np.sqrt(aca))
        args = (self._bp[None, :] * proj[:, None]
                + (1.0 - self._bp[None, :]) * a_mu - self.b)
        scales = np.sqrt(self._s2[None, :] + (self._bp[None, :] ** 2) * aca[:, None])
        vals = vals + np.sum(ndtr(args / scales), axis=1)
        return vals[:, None]


def solution_linear(gamma: float) -> PoissonSolution:
    """Exact solution G(x) = x/gamma for F(x) = x."""
    return _LinearSolution(gamma)


def solution_quadratic(gamma: float, mu, raw: bool = False) -> PoissonSolution:
    """Exact solution for F(x) = x x' (raw) or (x-mu)(x-mu)' (centered)."""
    return _QuadraticSolution(gamma, mu, raw)


def solution_exp(gamma: float, mu, sigma, a, truncation: int = 2) -> PoissonSolution:
    """Truncated solution for F(x) = exp(a'x)."""
    return _ExpSolution(gamma, mu, sigma, a, truncation)


def solution_indicator(gamma: float, mu, sigma, a, b: float,
                       truncation: int = 2) -> PoissonSolution:
    """Truncated solution for F(x) = 1{a'x > b}."""
    return _IndicatorSolution(gamma, mu, sigma, a, b, truncation)


# ---------------------------------------------------------------------------
# Estimators over a completed trace.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlVariatePair:
    """The two zero-mean control-variate sequences, per output component."""

    h1: np.ndarray  # (n, k) alpha_i (G(Y_i) - G(X_i))
    h2: np.ndarray  # (n, k) G(Y_i) - E_{q(.|X_i)}[G]


@dataclass(frozen=True)
class EstimatorReport:
    """Plain and variance-reduced estimates with their coefficients."""

    plain: np.ndarray
    cv: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    n: int

    def to_csv(self, path) -> None:
        body = np.column_stack([np.arange(self.plain.shape[0]), self.plain,
                                self.cv, self.beta1, self.beta2])
        np.savetxt(path, body, delimiter=",",
                   header="component,plain,cv,beta1,beta2", comments="")


def _check_solution_gamma(trace, solution: PoissonSolution) -> None:
    if abs(solution.gamma - trace.gamma_final) > 1e-9:
        raise ValueError(
            f"solution gamma {solution.gamma} does not match trace gamma "
            f"{trace.gamma_final}")


def control_variates(trace, solution: PoissonSolution, cov=None) -> ControlVariatePair:
    """Evaluate H1 and H2 along the trace."""
    _check_solution_gamma(trace, solution)
    if solution.needs_cov and cov is None:
        raise ValueError(f"{solution.kind} solution requires the proposal covariance")
    g_x = solution.evaluate(trace.states)
    g_y = solution.evaluate(trace.proposals)
    e_q = solution.proposal_expectation(trace.proposal_means, cov)
    h1 = trace.alphas[:, None] * (g_y - g_x)
    h2 = g_y - e_q
    return ControlVariatePair(h1=h1, h2=h2)


def _solve_beta(h1, h2, f_values):
    """Variance-minimizing (b1, b2) per component.

    Solves the 2x2 system K b = -cov(F, H) built from sample second moments
    of H = (H1, H2); ill-conditioned K gets a small ridge.
    """
    n = h1.shape[0]
    if n < 3:
        raise ValueError("need at least 3 samples to estimate beta")
    k11 = np.sum(h1 * h1, axis=0) / (n - 1)
    k12 = np.sum(h1 * h2, axis=0) / (n - 1)
    k22 = np.sum(h2 * h2, axis=0) / (n - 1)
    f_mean = f_values.mean(axis=0)
    r1 = np.mean(f_values * h1, axis=0) - f_mean * h1.mean(axis=0)
    r2 = np.mean(f_values * h2, axis=0) - f_mean * h2.mean(axis=0)

    # condition number of the symmetric 2x2 via its eigenvalues
    tr = k11 + k22
    disc = np.sqrt(np.maximum((k11 - k22) ** 2 + 4.0 * k12 ** 2, 0.0))
    lam_max = 0.5 * (tr + disc)
    lam_min = 0.5 * (tr - disc)
    bad = (lam_min <= 0.0) | (lam_max > KN_COND_LIMIT * np.maximum(lam_min, 0.0))
    ridge = np.where(bad, KN_RIDGE * tr / 2.0 + np.finfo(float).tiny, 0.0)
    k11 = k11 + ridge
    k22 = k22 + ridge

    det = k11 * k22 - k12 * k12
    beta1 = -(k22 * r1 - k12 * r2) / det
    beta2 = -(k11 * r2 - k12 * r1) / det
    return beta1, beta2


def estimate_beta(trace, f_values, solution: PoissonSolution, cov=None,
                  use: slice = slice(None)):
    """Estimate the control-variate coefficients from a trace.

    ``f_values`` holds F evaluated at the trace states, shape (n, k) with k
    matching the solution's output components.  ``use`` restricts the fit
    to part of the trace (split-trace diagnostics).
    """
    pair = control_variates(trace, solution, cov=cov)
    f_values = np.asarray(f_values, dtype=float)
    if f_values.ndim == 1:
        f_values = f_values[:, None]
    if f_values.shape != pair.h1.shape:
        raise ValueError("F values do not match the solution's output shape")
    return _solve_beta(pair.h1[use], pair.h2[use], f_values[use])


def cv_estimator(trace, f_values, solution: PoissonSolution, beta1=None,
                 beta2=None, cov=None, split: bool = False) -> EstimatorReport:
    """Plain and variance-reduced ergodic averages over a trace.

    With ``beta1``/``beta2`` omitted they are estimated from the trace
    itself (plug-in); ``split=True`` instead fits them on the first half
    and averages over the second half only.
    """
    f_values = np.asarray(f_values, dtype=float)
    if f_values.ndim == 1:
        f_values = f_values[:, None]
    pair = control_variates(trace, solution, cov=cov)
    if f_values.shape != pair.h1.shape:
        raise ValueError("F values do not match the solution's output shape")

    n = f_values.shape[0]
    fit = slice(0, n // 2) if split else slice(None)
    keep = slice(n // 2, n) if split else slice(None)
    if beta1 is None or beta2 is None:
        beta1, beta2 = _solve_beta(pair.h1[fit], pair.h2[fit], f_values[fit])
    beta1 = np.broadcast_to(np.asarray(beta1, dtype=float), f_values.shape[1:]).copy()
    beta2 = np.broadcast_to(np.asarray(beta2, dtype=float), f_values.shape[1:]).copy()

    plain = f_values[keep].mean(axis=0)
    cv = plain + beta1 * pair.h1[keep].mean(axis=0) + beta2 * pair.h2[keep].mean(axis=0)
    return EstimatorReport(plain=plain, cv=cv, beta1=beta1, beta2=beta2,
                           n=f_values[keep].shape[0])


def zero_variance_estimator_gaussian(trace, target) -> np.ndarray:
    """Exact-mean estimator for a Gaussian target sampled by a GI kernel.

    With no rejections the optimal control variate collapses pointwise:
    F(X) - (G(X) - E_q[G]) = X - (X - m_X)/gamma, which equals the target
    mean exactly for every sample, for gi-rwm and gi-mala alike.
    """
    if not (trace.kind.startswith("gi-") or trace.kind == "pcn"):
        raise ValueError("zero-variance estimator requires a GI-kind trace")
    if not np.all(trace.accepted):
        raise ValueError("trace contains rejections; target is not the "
                         "invariant Gaussian of the proposal")
    g = trace.gamma_final
    vals = trace.states - (trace.states - trace.proposal_means) / g
    return vals.mean(axis=0)


# ---------------------------------------------------------------------------
# The F functions paired with the solutions above.
# ---------------------------------------------------------------------------


def f_identity(states) -> np.ndarray:
    return _rows(states).copy()


def f_quadratic(states) -> np.ndarray:
    x = _rows(states)
    n, d = x.shape
    return np.einsum("ni,nj->nij", x, x).reshape(n, d * d)


def f_indicator(states, a, b: float) -> np.ndarray:
    proj = _rows(states) @ np.asarray(a, dtype=float)
    return (proj > b).astype(float)[:, None]


def f_exp(states, a) -> np.ndarray:
    proj = _rows(states) @ np.asarray(a, dtype=float)
    return np.exp(proj)[:, None]
