"""Shared fixtures for the unit tests."""

import numpy as np

from tlsph.domain import generate_lattice
from tlsph.kernel import eval_kernel, first_order_terms


def jittered_lattice(dim, n, jitter, seed, h_ratio=1.3):
    """``n`` cells per side on the unit box, positions jittered by ``jitter * spacing``."""
    d = generate_lattice([1.0] * dim, 1.0 / n, h_ratio=h_ratio)
    rng = np.random.default_rng(seed)
    d.ref_positions = d.ref_positions + rng.uniform(-jitter, jitter, d.ref_positions.shape) * d.spacing
    return d


def corrected_kernel_at(domain, nb, i, j, shift):
    """First-order corrected kernel of particle i's stencil, evaluated at ``X_i + shift``
    against sample j; every sample stays where it is."""
    X = domain.ref_positions
    sl = slice(nb.offsets[i], nb.offsets[i + 1])
    js = nb.j[sl]
    xij = X[i] + shift - X[js]
    r = np.linalg.norm(xij, axis=1)
    W = eval_kernel(r, domain.smoothing_length, domain.dim)
    t = first_order_terms(xij, domain.volumes[js], W, np.array([0, js.size]),
                          np.zeros(js.size, int))
    return t.W1[np.flatnonzero(js == j)[0]]
