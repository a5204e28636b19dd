import numpy as np
import pytest


def finite_difference_gradient(f, x, rel_step=1e-5):
    """Central differences with per-coordinate step rel_step * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def assert_gradient_matches(target, points, rtol=1e-5):
    for x in points:
        analytic = np.asarray(target.grad_log_density(x), dtype=float)
        numeric = finite_difference_gradient(target.log_density, x)
        scale = np.maximum(np.abs(numeric), 1.0)
        np.testing.assert_allclose(analytic, numeric, atol=rtol * scale.max(),
                                   rtol=rtol)


def random_spd(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T / dim + np.eye(dim))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
