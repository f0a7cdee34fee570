import numpy as np
import pytest


def central_diff(fn, x, h=1e-5):
    """Central finite-difference gradient of a scalar function of a flat
    vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return np.linalg.norm((a - b).ravel()) / scale


def nn_margin(points, refs):
    """Smallest gap between the two closest reference distances over a batch
    of query points; used to reject gradient-check samples sitting on a
    nearest-neighbor decision boundary."""
    points = np.atleast_2d(points)
    refs = np.atleast_2d(refs)
    if len(refs) < 2:
        return np.inf
    d = np.linalg.norm(points[:, None, :] - refs[None, :, :], axis=2)
    d.sort(axis=1)
    return float(np.min(d[:, 1] - d[:, 0]))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
