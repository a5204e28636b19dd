"""Metropolis-Hastings engine.

Proposal families, with step size gamma and preconditioner Sigma or A_x:

* ``gi-rwm``            N(y | (1-g)x + g*mu, (2g - g^2) Sigma), g in (0,2)
* ``gi-mala-const``     N(y | x + g Sigma grad, (2g - g^2) Sigma)
* ``gi-mala-precond``   N(y | x + g A_x grad,  (2g - g^2) A_x)
* ``rwm``               N(y | x, 2g Sigma)
* ``mala-const``        N(y | x + g Sigma grad, 2g Sigma)
* ``mala-precond``      N(y | x + g A_x grad,  2g A_x)
* ``pcn``               gi-rwm with mu = 0 against the prior covariance;
                        the acceptance ratio uses the likelihood term only.

The first three are reversible with respect to any Gaussian with matching
covariance (and mean, for gi-rwm), so on such targets every proposal is
accepted.  Step sizes are tuned during burn-in by a Robbins-Monro recursion
on log(gamma) targeting a configured acceptance rate.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

__all__ = [
    "GI_KINDS",
    "ALL_KINDS",
    "DEFAULT_TARGET_RATES",
    "ProposalSpec",
    "TransitionRecord",
    "ChainTrace",
    "girwm_propose",
    "gimala_propose",
    "mala_propose",
    "rwm_propose",
    "pcn_propose",
    "mh_log_ratio",
    "mh_step",
    "adapt_step_size",
    "run_chain",
]

GI_KINDS = frozenset({"gi-rwm", "gi-mala-const", "gi-mala-precond", "pcn"})
CONST_PRECOND_KINDS = frozenset({"gi-rwm", "gi-mala-const", "rwm", "mala-const", "pcn"})
POSITION_KINDS = frozenset({"gi-mala-precond", "mala-precond"})
GRADIENT_KINDS = frozenset({"gi-mala-const", "gi-mala-precond", "mala-const", "mala-precond"})
ALL_KINDS = CONST_PRECOND_KINDS | POSITION_KINDS

# gi samplers aim at the 0.75-0.85 band; rwm/mala at their classical optima.
DEFAULT_TARGET_RATES = {
    "gi-rwm": 0.8,
    "gi-mala-const": 0.8,
    "gi-mala-precond": 0.8,
    "pcn": 0.234,
    "rwm": 0.234,
    "mala-const": 0.574,
    "mala-precond": 0.574,
}

GAMMA_FLOOR = 1e-6
GI_GAMMA_CEIL = 2.0 - 1e-6


def _validate_gamma(kind: str, gamma: float) -> None:
    if kind in GI_KINDS:
        if not 0.0 < gamma < 2.0:
            raise ValueError(f"{kind} requires gamma in (0, 2), got {gamma}")
    elif gamma <= 0.0:
        raise ValueError(f"{kind} requires gamma > 0, got {gamma}")


@dataclass
class ProposalSpec:
    """Which proposal to run and with what parameters.

    ``precond_const`` is the constant covariance/preconditioner Sigma for
    the constant kinds; ``precond_fn`` maps a state to A_x for the
    position-dependent kinds.  ``mean_param`` is the Gaussian mean used by
    gi-rwm (pcn fixes it to zero).
    """

    kind: str
    step_size: float
    mean_param: Optional[np.ndarray] = None
    precond_const: Optional[np.ndarray] = None
    precond_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    target_rate: Optional[float] = None
    _chol: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        _validate_gamma(self.kind, self.step_size)
        if self.kind in CONST_PRECOND_KINDS:
            if self.precond_const is None:
                raise ValueError(f"{self.kind} requires precond_const")
            self.precond_const = np.asarray(self.precond_const, dtype=float)
            self._chol = cholesky(self.precond_const, lower=True)
            self._cho = cho_factor(self.precond_const, lower=True)
        else:
            if self.precond_fn is None:
                raise ValueError(f"{self.kind} requires precond_fn")
        if self.kind == "gi-rwm":
            if self.mean_param is None:
                raise ValueError("gi-rwm requires mean_param")
            self.mean_param = np.asarray(self.mean_param, dtype=float)
        if self.kind == "pcn":
            self.mean_param = np.zeros(self.precond_const.shape[0])
        if self.target_rate is None:
            self.target_rate = DEFAULT_TARGET_RATES[self.kind]

    @property
    def chol(self) -> Optional[np.ndarray]:
        return self._chol

    def cov_scale(self) -> float:
        """Scalar multiplying the preconditioner in the proposal covariance."""
        g = self.step_size
        return 2.0 * g - g * g if self.kind in GI_KINDS else 2.0 * g

    def with_step_size(self, gamma: float) -> "ProposalSpec":
        return ProposalSpec(self.kind, gamma, mean_param=self.mean_param,
                            precond_const=self.precond_const,
                            precond_fn=self.precond_fn,
                            target_rate=self.target_rate)

    def describe(self) -> dict:
        return {"kind": self.kind, "step_size": self.step_size,
                "target_rate": self.target_rate}


@dataclass(frozen=True)
class TransitionRecord:
    """One MH step: state, proposal, its mean, alpha, and the outcome."""

    x: np.ndarray
    y: np.ndarray
    proposal_mean: np.ndarray
    alpha: float
    accepted: bool

    @property
    def next_state(self) -> np.ndarray:
        return self.y if self.accepted else self.x


@dataclass
class ChainTrace:
    """Post-burn-in transitions of one chain, stored columnwise."""

    states: np.ndarray          # (n, d) X_i
    proposals: np.ndarray       # (n, d) Y_i
    proposal_means: np.ndarray  # (n, d) E[y | X_i]
    alphas: np.ndarray          # (n,)
    accepted: np.ndarray        # (n,) bool
    n_burnin: int
    seed: Optional[int]
    gamma_final: float
    accept_rate: float
    burnin_accept_rate: float
    kind: str
    sampling_seconds: float = 0.0
    burnin_states: Optional[np.ndarray] = None  # kept only on request

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def next_states(self) -> np.ndarray:
        return np.where(self.accepted[:, None], self.proposals, self.states)

    def record(self, i: int) -> TransitionRecord:
        return TransitionRecord(self.states[i], self.proposals[i],
                                self.proposal_means[i], float(self.alphas[i]),
                                bool(self.accepted[i]))

    def __iter__(self) -> Iterator[TransitionRecord]:
        return (self.record(i) for i in range(len(self)))

    def sidecar(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "gamma_final": self.gamma_final,
            "accept_rate": self.accept_rate,
            "burnin_accept_rate": self.burnin_accept_rate,
            "n_burnin": self.n_burnin,
            "n_samples": len(self),
            "sampling_seconds": self.sampling_seconds,
        }

    def save(self, path) -> None:
        """Binary dump plus a JSON sidecar next to it."""
        np.savez_compressed(path, states=self.states, proposals=self.proposals,
                            proposal_means=self.proposal_means, alphas=self.alphas,
                            accepted=self.accepted)
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "ChainTrace":
        data = np.load(str(path) if str(path).endswith(".npz") else str(path) + ".npz")
        with open(str(path).removesuffix(".npz") + ".json") as fh:
            meta = json.load(fh)
        return cls(states=data["states"], proposals=data["proposals"],
                   proposal_means=data["proposal_means"], alphas=data["alphas"],
                   accepted=data["accepted"].astype(bool),
                   n_burnin=meta["n_burnin"], seed=meta["seed"],
                   gamma_final=meta["gamma_final"], accept_rate=meta["accept_rate"],
                   burnin_accept_rate=meta["burnin_accept_rate"], kind=meta["kind"],
                   sampling_seconds=meta.get("sampling_seconds", 0.0))

    def to_csv(self, path) -> None:
        n, d = self.states.shape
        cols = ([f"x{j}" for j in range(d)] + [f"y{j}" for j in range(d)]
                + ["alpha", "accepted"])
        body = np.column_stack([self.states, self.proposals, self.alphas,
                                self.accepted.astype(float)])
        np.savetxt(path, body, delimiter=",", header=",".join(cols), comments="")


# ---------------------------------------------------------------------------
# Proposal draws.  All of them consume the generator as mean + scale * L @ eps
# with eps ~ N(0, I), so samplers sharing (seed, L) share randomness.
# ---------------------------------------------------------------------------


def girwm_propose(x, mu, sigma_chol, gamma, rng):
    """Autoregressive draw toward mu; reversible w.r.t. N(mu, Sigma)."""
    if not 0.0 < gamma < 2.0:
        raise ValueError("gamma must lie in (0, 2)")
    x = np.asarray(x, dtype=float)
    mean = (1.0 - gamma) * x + gamma * np.asarray(mu, dtype=float)
    eps = rng.standard_normal(x.shape[0])
    y = mean + math.sqrt(2.0 * gamma - gamma * gamma) * (sigma_chol @ eps)
    return y, mean


def gimala_propose(x, grad, precond, gamma, rng, precond_chol=None):
    """Gradient drift with covariance (2g - g^2) A_x."""
    if not 0.0 < gamma < 2.0:
        raise ValueError("gamma must lie in (0, 2)")
    x = np.asarray(x, dtype=float)
    L = cholesky(precond, lower=True) if precond_chol is None else precond_chol
    mean = x + gamma * (precond @ np.asarray(grad, dtype=float))
    eps = rng.standard_normal(x.shape[0])
    y = mean + math.sqrt(2.0 * gamma - gamma * gamma) * (L @ eps)
    return y, mean


def mala_propose(x, grad, precond, gamma, rng, precond_chol=None):
    """Same drift as gimala_propose but covariance 2g A_x."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    L = cholesky(precond, lower=True) if precond_chol is None else precond_chol
    mean = x + gamma * (precond @ np.asarray(grad, dtype=float))
    eps = rng.standard_normal(x.shape[0])
    y = mean + math.sqrt(2.0 * gamma) * (L @ eps)
    return y, mean


def rwm_propose(x, sigma_chol, gamma, rng):
    """Symmetric random walk, covariance 2g Sigma."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    eps = rng.standard_normal(x.shape[0])
    y = x + math.sqrt(2.0 * gamma) * (sigma_chol @ eps)
    return y, x.copy()


def pcn_propose(x, prior_chol, gamma, rng):
    """girwm_propose with mu = 0 against the prior covariance."""
    d = np.asarray(x).shape[0]
    return girwm_propose(x, np.zeros(d), prior_chol, gamma, rng)


# ---------------------------------------------------------------------------
# Acceptance ratio and stepping.
# ---------------------------------------------------------------------------


def _quad(cho, v) -> float:
    return float(v @ cho_solve(cho, v))


def mh_log_ratio(spec: ProposalSpec, target, x, y, proposal_mean) -> float:
    """log pi(y) - log pi(x) + log q(x|y) - log q(y|x).

    Reverse-move quantities (gradient and preconditioner at y) are
    recomputed exactly; position-dependent kinds include the log-det
    difference of the two proposal covariances.  A non-finite log-density
    at y yields -inf (automatic rejection).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    if spec.kind == "pcn":
        g_diff = target.likelihood.g(y) - target.likelihood.g(x)
        return g_diff if math.isfinite(g_diff) else -math.inf

    log_pi_y = target.log_density(y)
    if not math.isfinite(log_pi_y):
        return -math.inf
    diff = log_pi_y - target.log_density(x)

    if spec.kind == "rwm":
        return diff

    c = spec.cov_scale()
    if spec.kind == "gi-rwm":
        g = spec.step_size
        mean_rev = (1.0 - g) * y + g * spec.mean_param
        quad_fwd = _quad(spec._cho, y - proposal_mean)
        quad_rev = _quad(spec._cho, x - mean_rev)
        return diff - 0.5 * (quad_rev - quad_fwd) / c

    grad_y = target.grad_log_density(y)
    if not np.all(np.isfinite(grad_y)):
        return -math.inf
    g = spec.step_size
    if spec.kind in ("gi-mala-const", "mala-const"):
        mean_rev = y + g * (spec.precond_const @ grad_y)
        quad_fwd = _quad(spec._cho, y - proposal_mean)
        quad_rev = _quad(spec._cho, x - mean_rev)
        return diff - 0.5 * (quad_rev - quad_fwd) / c

    # position-dependent preconditioner
    a_x = np.asarray(spec.precond_fn(x), dtype=float)
    a_y = np.asarray(spec.precond_fn(y), dtype=float)
    cho_x = cho_factor(a_x, lower=True)
    cho_y = cho_factor(a_y, lower=True)
    mean_rev = y + g * (a_y @ grad_y)
    quad_fwd = _quad(cho_x, y - proposal_mean)
    quad_rev = _quad(cho_y, x - mean_rev)
    logdet_x = 2.0 * np.sum(np.log(np.diag(cho_x[0])))
    logdet_y = 2.0 * np.sum(np.log(np.diag(cho_y[0])))
    return diff - 0.5 * (quad_rev - quad_fwd) / c - 0.5 * (logdet_y - logdet_x)


def _propose(spec: ProposalSpec, target, x, rng):
    kind = spec.kind
    if kind == "gi-rwm":
        return girwm_propose(x, spec.mean_param, spec.chol, spec.step_size, rng)
    if kind == "pcn":
        return pcn_propose(x, spec.chol, spec.step_size, rng)
    if kind == "rwm":
        return rwm_propose(x, spec.chol, spec.step_size, rng)
    grad = target.grad_log_density(x)
    if kind == "gi-mala-const":
        return gimala_propose(x, grad, spec.precond_const, spec.step_size, rng,
                              precond_chol=spec.chol)
    if kind == "mala-const":
        return mala_propose(x, grad, spec.precond_const, spec.step_size, rng,
                            precond_chol=spec.chol)
    a_x = np.asarray(spec.precond_fn(x), dtype=float)
    if kind == "gi-mala-precond":
        return gimala_propose(x, grad, a_x, spec.step_size, rng)
    return mala_propose(x, grad, a_x, spec.step_size, rng)


def mh_step(spec: ProposalSpec, target, x, rng) -> TransitionRecord:
    """Draw a proposal, accept or reject, and report the transition."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("current state is not finite")
    y, mean = _propose(spec, target, x, rng)
    log_ratio = mh_log_ratio(spec, target, x, y, mean)
    alpha = math.exp(min(log_ratio, 0.0)) if math.isfinite(log_ratio) else 0.0
    accepted = bool(rng.uniform() < alpha)
    return TransitionRecord(x=x, y=y, proposal_mean=mean, alpha=alpha,
                            accepted=accepted)


class _ChainState:
    """Current-state quantities carried between steps of one chain.

    Caching the log-density, gradient, and preconditioner factorization of
    the current state halves the per-step work relative to stateless
    mh_step calls; the cached values are exactly the ones computed when the
    state was last proposed, so the chain law is unchanged.
    """

    __slots__ = ("x", "log_pi", "grad", "precond", "chol", "cho", "logdet")

    def __init__(self, x, log_pi=None, grad=None, precond=None, chol=None,
                 cho=None, logdet=None):
        self.x = x
        self.log_pi = log_pi
        self.grad = grad
        self.precond = precond
        self.chol = chol
        self.cho = cho
        self.logdet = logdet


def _init_state(spec: ProposalSpec, target, x) -> _ChainState:
    kind = spec.kind
    state = _ChainState(np.asarray(x, dtype=float))
    if kind == "pcn":
        state.log_pi = target.likelihood.g(state.x)
        return state
    state.log_pi = target.log_density(state.x)
    if kind in GRADIENT_KINDS:
        state.grad = target.grad_log_density(state.x)
    if kind in POSITION_KINDS:
        state.precond = np.asarray(spec.precond_fn(state.x), dtype=float)
        state.cho = cho_factor(state.precond, lower=True)
        state.chol = None
        state.logdet = 2.0 * float(np.sum(np.log(np.diag(state.cho[0]))))
    return state


def _step_cached(spec: ProposalSpec, target, state: _ChainState, rng):
    """One MH transition reusing the cached current-state quantities."""
    kind = spec.kind
    g = spec.step_size
    x = state.x
    d = x.shape[0]
    eps = rng.standard_normal(d)

    # --- propose ---------------------------------------------------------
    if kind in POSITION_KINDS:
        if state.chol is None:
            # cho_factor left the factor in the lower triangle
            state.chol = np.tril(state.cho[0])
        scale = math.sqrt(spec.cov_scale())
        mean = x + g * (state.precond @ state.grad)
        y = mean + scale * (state.chol @ eps)
    elif kind in ("gi-mala-const", "mala-const"):
        scale = math.sqrt(spec.cov_scale())
        mean = x + g * (spec.precond_const @ state.grad)
        y = mean + scale * (spec._chol @ eps)
    elif kind == "rwm":
        mean = x
        y = x + math.sqrt(spec.cov_scale()) * (spec._chol @ eps)
    else:  # gi-rwm / pcn
        mean = (1.0 - g) * x + g * spec.mean_param
        y = mean + math.sqrt(spec.cov_scale()) * (spec._chol @ eps)

    # --- log ratio -------------------------------------------------------
    new = None
    if kind == "pcn":
        log_pi_y = target.likelihood.g(y)
        log_ratio = log_pi_y - state.log_pi if math.isfinite(log_pi_y) else -math.inf
        if math.isfinite(log_pi_y):
            new = _ChainState(y, log_pi=log_pi_y)
    else:
        log_pi_y = target.log_density(y)
        if not math.isfinite(log_pi_y):
            log_ratio = -math.inf
        elif kind == "rwm":
            log_ratio = log_pi_y - state.log_pi
            new = _ChainState(y, log_pi=log_pi_y)
        elif kind == "gi-rwm":
            mean_rev = (1.0 - g) * y + g * spec.mean_param
            quad_fwd = _quad(spec._cho, y - mean)
            quad_rev = _quad(spec._cho, x - mean_rev)
            log_ratio = (log_pi_y - state.log_pi
                         - 0.5 * (quad_rev - quad_fwd) / spec.cov_scale())
            new = _ChainState(y, log_pi=log_pi_y)
        else:
            grad_y = target.grad_log_density(y)
            if not np.all(np.isfinite(grad_y)):
                log_ratio = -math.inf
            elif kind in ("gi-mala-const", "mala-const"):
                mean_rev = y + g * (spec.precond_const @ grad_y)
                quad_fwd = _quad(spec._cho, y - mean)
                quad_rev = _quad(spec._cho, x - mean_rev)
                log_ratio = (log_pi_y - state.log_pi
                             - 0.5 * (quad_rev - quad_fwd) / spec.cov_scale())
                new = _ChainState(y, log_pi=log_pi_y, grad=grad_y)
            else:
                a_y = np.asarray(spec.precond_fn(y), dtype=float)
                cho_y = cho_factor(a_y, lower=True)
                logdet_y = 2.0 * float(np.sum(np.log(np.diag(cho_y[0]))))
                mean_rev = y + g * (a_y @ grad_y)
                quad_fwd = _quad(state.cho, y - mean)
                quad_rev = _quad(cho_y, x - mean_rev)
                log_ratio = (log_pi_y - state.log_pi
                             - 0.5 * (quad_rev - quad_fwd) / spec.cov_scale()
                             - 0.5 * (logdet_y - state.logdet))
                new = _ChainState(y, log_pi=log_pi_y, grad=grad_y,
                                  precond=a_y, cho=cho_y, logdet=logdet_y)

    alpha = math.exp(min(log_ratio, 0.0)) if math.isfinite(log_ratio) else 0.0
    accepted = bool(rng.uniform() < alpha)
    next_state = new if (accepted and new is not None) else state
    return y, mean, alpha, accepted, next_state


def adapt_step_size(accept, gamma: float, target_rate: float, t: int,
                    kind: str = "gi-mala-const") -> float:
    """Robbins-Monro update of log(gamma) toward a target acceptance rate.

    ``accept`` is the latest acceptance signal (the probability alpha, or a
    0/1 indicator); the t^-0.6 schedule satisfies diminishing adaptation.
    """
    if t < 1:
        raise ValueError("iteration index must be >= 1")
    log_gamma = math.log(gamma) + t ** (-0.6) * (float(accept) - target_rate)
    gamma_new = math.exp(log_gamma)
    hi = GI_GAMMA_CEIL if kind in GI_KINDS else math.inf
    return min(max(gamma_new, GAMMA_FLOOR), hi)


def run_chain(spec: ProposalSpec, target, x0, n_burnin: int, n_samples: int,
              adapt: bool = True, target_rate: Optional[float] = None,
              rng: Optional[np.random.Generator] = None,
              seed: Optional[int] = None, keep_burnin: bool = False) -> ChainTrace:
    """Run one chain: adaptive burn-in, then fixed-gamma sampling.

    The step size is tuned only during burn-in and frozen afterwards; the
    returned trace holds only post-burn-in transitions (burn-in states are
    retained separately when ``keep_burnin`` is set, e.g. to fit the
    Gaussian parameters of a truncated solution).  A non-finite current
    state aborts with a diagnostic.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    rate = spec.target_rate if target_rate is None else target_rate
    spec = spec.with_step_size(spec.step_size)  # private copy; caller's spec stays put

    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise RuntimeError("initial state is not finite")
    d = x.shape[0]
    state = _init_state(spec, target, x)
    if not math.isfinite(state.log_pi):
        raise RuntimeError("log-density is not finite at the initial state")
    burn_accepts = 0
    burn_states = np.empty((n_burnin, d)) if keep_burnin else None
    for t in range(1, n_burnin + 1):
        y, mean, alpha, was_accepted, state = _step_cached(spec, target, state, rng)
        if not np.all(np.isfinite(state.x)):
            raise RuntimeError(f"chain state became non-finite at burn-in step {t}")
        if keep_burnin:
            burn_states[t - 1] = state.x
        burn_accepts += was_accepted
        if adapt:
            spec.step_size = adapt_step_size(alpha, spec.step_size, rate, t,
                                             kind=spec.kind)

    states = np.empty((n_samples, d))
    proposals = np.empty((n_samples, d))
    means = np.empty((n_samples, d))
    alphas = np.empty(n_samples)
    accepted = np.empty(n_samples, dtype=bool)
    t0 = time.perf_counter()
    for i in range(n_samples):
        states[i] = state.x
        y, mean, alpha, was_accepted, state = _step_cached(spec, target, state, rng)
        proposals[i] = y
        means[i] = mean
        alphas[i] = alpha
        accepted[i] = was_accepted
        if not np.all(np.isfinite(state.x)):
            raise RuntimeError(f"chain state became non-finite at sample {i}")
    elapsed = time.perf_counter() - t0

    return ChainTrace(states=states, proposals=proposals, proposal_means=means,
                      alphas=alphas, accepted=accepted, n_burnin=n_burnin,
                      seed=seed, gamma_final=spec.step_size,
                      accept_rate=float(accepted.mean()),
                      burnin_accept_rate=(burn_accepts / n_burnin if n_burnin else 0.0),
                      kind=spec.kind, sampling_seconds=elapsed,
                      burnin_states=burn_states)
