"""Effective sample size and repeated-run variance-ratio diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.fft import next_fast_len, rfft, irfft

__all__ = [
    "EssReport",
    "VarianceRatioReport",
    "ess",
    "ess_report",
    "variance_ratio",
    "RATIO_SENTINEL",
]

RATIO_SENTINEL = 1e12


def _autocorrelations(x: np.ndarray) -> np.ndarray:
    """Empirical autocorrelations rho_0..rho_{n-1} of a 1-d series via FFT."""
    n = x.shape[0]
    centered = x - x.mean()
    nfft = next_fast_len(2 * n)
    f = rfft(centered, nfft)
    acov = irfft(f * np.conj(f), nfft)[:n] / n
    if acov[0] <= 0.0:
        return None  # constant series
    return acov / acov[0]


def _iact_geyer(rho: np.ndarray) -> float:
    """Integrated autocorrelation time, truncated by Geyer's initial
    positive sequence: sum consecutive-lag pairs while they stay positive."""
    n = rho.shape[0]
    tau = 0.0
    m = 0
    while True:
        k = 2 * m
        if k + 1 >= n:
            break
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    return tau - 1.0


def ess(samples: np.ndarray) -> np.ndarray:
    """Per-component effective sample size, capped at n.

    ESS = n / (1 + 2 sum_k rho_k) with the autocorrelation sum truncated by
    the initial-positive-sequence rule.  A constant component is reported
    as ESS = n (degenerate; see :func:`ess_report` for the flag).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n, d = samples.shape
    if n < 10:
        raise ValueError("need at least 10 samples for an ESS estimate")
    out = np.empty(d)
    for j in range(d):
        rho = _autocorrelations(samples[:, j])
        if rho is None:
            out[j] = float(n)
            continue
        tau = _iact_geyer(rho)
        out[j] = float(n) if tau <= 0.0 else min(float(n), n / tau)
    return out


@dataclass(frozen=True)
class EssReport:
    """ESS summary with timing, in the layout of the comparison tables."""

    ess: np.ndarray
    seconds: float
    n: int
    degenerate: np.ndarray = field(default=None)

    @property
    def ess_min(self) -> float:
        return float(np.min(self.ess))

    @property
    def ess_median(self) -> float:
        return float(np.median(self.ess))

    @property
    def ess_max(self) -> float:
        return float(np.max(self.ess))

    @property
    def min_ess_per_second(self) -> float:
        return self.ess_min / self.seconds if self.seconds > 0 else float("inf")

    def to_csv(self, path) -> None:
        body = np.column_stack([np.arange(self.ess.shape[0]), self.ess])
        np.savetxt(path, body, delimiter=",", header="component,ess", comments="")


def ess_report(samples: np.ndarray, seconds: float) -> EssReport:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    values = ess(samples)
    degenerate = samples.std(axis=0) == 0.0
    return EssReport(ess=values, seconds=float(seconds), n=samples.shape[0],
                     degenerate=degenerate)


@dataclass(frozen=True)
class VarianceRatioReport:
    """Variance of the plain vs variance-reduced estimator over T repeats.

    Ratios above the sentinel (zero-variance paths) are capped and flagged.
    """

    var_plain: np.ndarray
    var_cv: np.ndarray
    ratio: np.ndarray
    capped: np.ndarray
    repeats: int
    failures: int = 0

    def to_csv(self, path) -> None:
        body = np.column_stack([np.arange(self.var_plain.shape[0]),
                                self.var_plain, self.var_cv, self.ratio,
                                self.capped.astype(float)])
        np.savetxt(path, body, delimiter=",",
                   header="component,var_plain,var_cv,ratio,capped", comments="")


def variance_ratio(experiment: Callable[[int], tuple], repeats: int,
                   seed: Optional[int] = None,
                   max_workers: int = 1) -> VarianceRatioReport:
    """Repeat an experiment under independent seeds and compare variances.

    ``experiment(seed)`` must return one (plain, cv) estimate pair.  Each
    estimator's variance across repeats is (1/(T-1)) sum (v - vbar)^2; the
    report carries the per-component ratio plain/cv.  A repeat that raises
    is skipped and counted; at least two must survive.  Repeats run in a
    thread pool when ``max_workers`` > 1; the seed ladder makes the result
    order-independent.
    """
    if repeats < 2:
        raise ValueError("need at least 2 repeats")
    child_seeds = np.random.SeedSequence(seed).spawn(repeats)
    run_seeds = [int(ss.generate_state(1)[0]) for ss in child_seeds]
    plains, cvs = [], []
    failures = 0
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        def _safe(s):
            try:
                return experiment(s)
            except Exception:
                return None

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_safe, run_seeds))
    else:
        results = []
        for s in run_seeds:
            try:
                results.append(experiment(s))
            except Exception:
                results.append(None)
    for res in results:
        if res is None:
            failures += 1
            continue
        plain, cv = res
        plains.append(np.atleast_1d(np.asarray(plain, dtype=float)))
        cvs.append(np.atleast_1d(np.asarray(cv, dtype=float)))
    if len(plains) < 2:
        raise RuntimeError(f"only {len(plains)} repeats succeeded")
    plains = np.stack(plains)
    cvs = np.stack(cvs)
    var_plain = plains.var(axis=0, ddof=1)
    var_cv = cvs.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = var_plain / var_cv
    capped = ~np.isfinite(raw) | (raw > RATIO_SENTINEL)
    ratio = np.where(capped, RATIO_SENTINEL, raw)
    # 0/0 (both estimators exactly constant) counts as ratio 1, not capped
    both_zero = (var_plain == 0.0) & (var_cv == 0.0)
    ratio = np.where(both_zero, 1.0, ratio)
    capped = capped & ~both_zero
    return VarianceRatioReport(var_plain=var_plain, var_cv=var_cv, ratio=ratio,
                               capped=capped, repeats=len(plains),
                               failures=failures)
