"""Shared test fixtures: graph generators and independent dense oracles.

Oracles here deliberately avoid the library's spectral code paths: they work
from dense numpy/scipy primitives (eigh, expm, solve) so that agreement is
evidence, not circularity.
"""

import numpy as np
import scipy.linalg

from graph_matern import WeightedGraph, build_laplacian


def random_graph(rng, n, p=0.3, wmin=0.2, wmax=2.0):
    """Erdos-Renyi style weighted graph; may be disconnected."""
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((i, j, float(rng.uniform(wmin, wmax))))
    return WeightedGraph.from_edges(edges, node_count=n)


def random_connected_graph(rng, n, extra=0.15, wmin=0.2, wmax=2.0):
    """Random spanning tree plus extra edges: always one component."""
    edges = []
    order = rng.permutation(n)
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        edges.append((int(parent), int(order[k]), float(rng.uniform(wmin, wmax))))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                edges.append((i, j, float(rng.uniform(wmin, wmax))))
    return WeightedGraph.from_edges(edges, node_count=n)


def path_graph(n, weight=1.0):
    return WeightedGraph.from_edges(
        [(i, i + 1, weight) for i in range(n - 1)], node_count=n
    )


def complete_graph(n, weight=1.0):
    return WeightedGraph.from_edges(
        [(i, j, weight) for i in range(n) for j in range(i + 1, n)], node_count=n
    )


def star_graph(n_leaves, weight=1.0):
    """Hub is node 0."""
    return WeightedGraph.from_edges(
        [(0, i, weight) for i in range(1, n_leaves + 1)], node_count=n_leaves + 1
    )


def two_cliques(k=10, bridge_weight=1.0):
    """Two k-cliques joined by one edge (0..k-1 and k..2k-1, bridge k-1 to k)."""
    edges = []
    for base in (0, k):
        for i in range(k):
            for j in range(i + 1, k):
                edges.append((base + i, base + j, 1.0))
    edges.append((k - 1, k, bridge_weight))
    return WeightedGraph.from_edges(edges, node_count=2 * k)


def dense_laplacian(graph, kind):
    return build_laplacian(graph, kind).matrix.toarray()


def dense_spectral_kernel(l_dense, profile, sigma2=1.0, normalize=True):
    """Reference kernel built straight from scipy.linalg.eigh."""
    lam, u = scipy.linalg.eigh(l_dense)
    lam = np.maximum(lam, 0.0)
    w = profile(lam)
    c = l_dense.shape[0] / np.sum(w) if normalize else 1.0
    k = (u * (sigma2 * c * w)) @ u.T
    return (k + k.T) / 2.0


def matern_profile(nu, kappa):
    return lambda lam: (2.0 * nu / kappa**2 + lam) ** (-nu)


def diffusion_profile(kappa):
    return lambda lam: np.exp(-0.5 * kappa**2 * lam)


def conditional_gaussian(k_full, train, query, y, noise2):
    """Brute-force GP conditioning on a dense joint kernel matrix."""
    kxx = k_full[np.ix_(train, train)] + noise2 * np.eye(len(train))
    kqx = k_full[np.ix_(query, train)]
    kqq = k_full[np.ix_(query, query)]
    solve = np.linalg.solve(kxx, np.eye(len(train)))
    mean = kqx @ solve @ y
    cov = kqq - kqx @ solve @ kqx.T
    return mean, (cov + cov.T) / 2.0
