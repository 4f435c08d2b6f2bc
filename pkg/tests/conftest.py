import numpy as np
import pytest

from ricciforge.identities import make_rng


@pytest.fixture
def rng():
    return make_rng(20240601, 99)


def fd_christoffel(metric, x, step=1e-4):
    """Gamma^k_ij of a closed-form metric by central differences."""
    x = np.asarray(x, dtype=float)
    n = x.size
    dg = np.zeros((n, n, n))  # dg[l, i, j] = d_l g_ij
    for l in range(n):
        e = np.zeros(n)
        e[l] = step
        dg[l] = (metric(x + e) - metric(x - e)) / (2 * step)
    ginv = np.linalg.inv(metric(x))
    first = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            for l in range(n):
                first[i, j, l] = 0.5 * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
    return np.einsum("kl,ijl->kij", ginv, first)


def fd_ricci(metric, x, step=1e-3):
    """Ricci tensor of a closed-form metric from nested central differences."""
    x = np.asarray(x, dtype=float)
    n = x.size
    G = fd_christoffel(metric, x)
    dG = np.zeros((n, n, n, n))  # dG[i, l, j, k] = d_i Gamma^l_jk
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        dG[i] = (fd_christoffel(metric, x + e) - fd_christoffel(metric, x - e)) / (2 * step)
    R = np.zeros((n, n, n, n))  # R[l, k, i, j]
    for l in range(n):
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    R[l, k, i, j] = (dG[i, l, j, k] - dG[j, l, i, k]
                                     + sum(G[l, i, m] * G[m, j, k] - G[l, j, m] * G[m, i, k] for m in range(n)))
    return np.einsum("ikij->kj", R)
