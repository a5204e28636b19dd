"""Bundled benchmark datasets and CSV handling.

The binary-classification benchmarks (heart, australian, german, pima,
ripley) ship as deterministic synthetic stand-ins that match the row and
column counts of the classic UCI/Ripley versions; the exact provenance of
the originals is not pinned, so the stand-ins are regenerated from fixed
seeds by :func:`synthesize` and committed under ``data/``.  CSV layout:
one row per observation, covariates first, label/response last, no header
(a header row can be skipped via ``has_header``).
"""

from __future__ import annotations

import importlib.resources
import math
from pathlib import Path

import numpy as np

from .targets import exponential_grid_kernel

__all__ = [
    "DATASET_SHAPES",
    "available_datasets",
    "dataset_path",
    "load_dataset",
    "load_dataset_csv",
    "standardize_columns",
    "design_matrix",
    "synthesize",
    "simulate_cox",
    "write_cox_dataset",
    "load_cox_dataset",
]

# name -> (rows N, covariate columns p, generator seed)
_SPECS = {
    "heart": (270, 12, 20101),
    "australian": (690, 13, 20102),
    "german": (1000, 23, 20103),
    "pima": (532, 7, 20104),
    "ripley": (250, 2, 20105),
}

DATASET_SHAPES = {name: (n, p) for name, (n, p, _) in _SPECS.items()}


def available_datasets() -> dict:
    return dict(DATASET_SHAPES)


def synthesize(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Regenerate a bundled stand-in dataset from its fixed seed.

    Covariates mix correlated continuous columns with a few dichotomized
    ones; labels follow a logistic model with moderate signal so the
    classes overlap and the MLE stays finite.
    """
    if name not in _SPECS:
        raise KeyError(f"unknown dataset {name!r}")
    n, p, seed = _SPECS[name]
    rng = np.random.default_rng(seed)
    n_factors = max(2, p // 3)
    loadings = rng.normal(scale=0.6, size=(n_factors, p))
    X = rng.standard_normal((n, n_factors)) @ loadings
    X += rng.standard_normal((n, p))
    # dichotomize roughly a quarter of the columns
    for j in range(0, p, 4):
        X[:, j] = (X[:, j] > 0.0).astype(float)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Xs = (X - X.mean(axis=0)) / scale
    theta = rng.normal(scale=0.7, size=p)
    intercept = rng.normal(scale=0.3)
    logits = intercept + Xs @ theta
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-logits))).astype(float)
    return X, y


def dataset_path(name: str) -> Path:
    if name not in _SPECS:
        raise KeyError(f"unknown dataset {name!r}")
    return Path(importlib.resources.files("gimcmc").joinpath(f"data/{name}.csv"))


def load_dataset_csv(path, has_header: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Read a covariates-then-label CSV into (X, y)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0,
                      ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("dataset needs at least one covariate column and a label")
    return data[:, :-1], data[:, -1]


def load_dataset(name_or_path, has_header: bool = False):
    """Load a bundled dataset by name, or any CSV by path."""
    name = str(name_or_path)
    if name in _SPECS:
        X, y = load_dataset_csv(dataset_path(name))
        expected = DATASET_SHAPES[name]
        if X.shape != expected:
            raise ValueError(f"bundled dataset {name} has shape {X.shape}, "
                             f"expected {expected}")
        return X, y
    return load_dataset_csv(name_or_path, has_header=has_header)


def standardize_columns(X: np.ndarray):
    """Zero-mean, unit-variance columns; constant columns are left centered."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds == 0.0, 1.0, stds)
    return (X - means) / stds, means, stds


def design_matrix(X: np.ndarray) -> np.ndarray:
    """Standardized covariates with a leading intercept column."""
    Xs, _, _ = standardize_columns(X)
    return np.column_stack([np.ones(Xs.shape[0]), Xs])


def write_dataset_csv(path, X: np.ndarray, y: np.ndarray) -> None:
    body = np.column_stack([X, y])
    np.savetxt(path, body, delimiter=",", fmt="%.10g")


# ---------------------------------------------------------------------------
# Log-Gaussian Cox simulation on a regular grid.
# ---------------------------------------------------------------------------


def simulate_cox(grid_size: int, sigma2: float = 1.91, beta: float = 1.0 / 33.0,
                 mean_count: float = 126.0, seed: int | None = None) -> dict:
    """Draw a latent Gaussian field and Poisson counts on a grid.

    Counts y_i ~ Poisson(m exp(x_i + v)) with cell area m = 1/grid_size^2
    and offset v = log(mean_count) - sigma2/2, so the expected total count
    is mean_count regardless of the grid size.
    """
    if not 2 <= grid_size:
        raise ValueError("grid_size must be at least 2")
    rng = np.random.default_rng(seed)
    cov = exponential_grid_kernel(grid_size, sigma2, beta)
    chol = np.linalg.cholesky(cov)
    d = grid_size * grid_size
    latent = chol @ rng.standard_normal(d)
    offset = math.log(mean_count) - sigma2 / 2.0
    cell_area = 1.0 / d
    intensity = cell_area * np.exp(latent + offset)
    counts = rng.poisson(intensity).astype(float)
    return {
        "grid_size": grid_size,
        "counts": counts,
        "latent": latent,
        "cell_area": cell_area,
        "offset": offset,
        "sigma2": sigma2,
        "beta": beta,
        "seed": seed,
    }


def _grid_coords(grid_size: int) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(grid_size), np.arange(grid_size), indexing="ij")
    return np.column_stack([ii.ravel(), jj.ravel()]).astype(float)


def write_cox_dataset(out_dir, sim: dict) -> dict:
    """Write counts and ground-truth latent CSVs; returns the file map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    coords = _grid_coords(sim["grid_size"])
    counts_path = out_dir / "cox_counts.csv"
    latent_path = out_dir / "cox_latent_truth.csv"
    np.savetxt(counts_path, np.column_stack([coords, sim["counts"]]),
               delimiter=",", fmt="%.10g")
    np.savetxt(latent_path, np.column_stack([coords, sim["latent"]]),
               delimiter=",", fmt="%.10g")
    return {"counts": counts_path, "latent": latent_path}


def load_cox_dataset(path) -> tuple[int, np.ndarray]:
    """Read a grid counts CSV back into (grid_size, counts)."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    d = data.shape[0]
    grid = int(round(math.sqrt(d)))
    if grid * grid != d:
        raise ValueError("cox dataset rows do not form a square grid")
    return grid, data[:, -1]
