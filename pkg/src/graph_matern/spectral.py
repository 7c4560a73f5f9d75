"""Eigendecomposition of graph Laplacians and functional calculus.

A :class:`SpectralBasis` holds the lowest ``l`` eigenpairs of a Laplacian in
ascending order with a deterministic sign convention. Any function of the
operator is then ``U f(diag(lambda)) U^T`` on the retained subspace; with the
full basis this is exact, truncated it is the best rank-l approximation in
the retained eigenspace.

Bases can be cached on disk in a small binary format keyed by a content hash
of the Laplacian, so repeated runs skip the eigensolve.
"""

import hashlib
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.sparse.linalg import ArpackNoConvergence

from .graphs import LaplacianOperator

__all__ = [
    "SpectralBasis",
    "EigensolverError",
    "eigendecompose_full",
    "eigendecompose_truncated",
    "apply_spectral_function",
    "heat_propagate",
    "laplacian_hash",
    "save_basis",
    "load_basis",
    "cached_eigendecomposition",
    "CACHE_ENV_VAR",
]

DENSE_SIZE_LIMIT = 4096
CACHE_ENV_VAR = "GRAPH_MATERN_CACHE_DIR"

_MAGIC = b"GMEIG\x00\x00\x00"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQQ")


class EigensolverError(RuntimeError):
    """Iterative eigensolver failure, carrying per-pair residual norms."""

    def __init__(self, message, residual_norms=None):
        super().__init__(message)
        self.residual_norms = residual_norms


@dataclass(frozen=True)
class SpectralBasis:
    """Lowest eigenpairs of a Laplacian.

    eigenvalues: (l,) ascending, nonnegative (tiny negatives are clamped).
    eigenvectors: (n, l) with orthonormal columns; each column's first entry
        of meaningful magnitude is positive, fixing the sign.
    total_dim: n, the node count of the source operator.
    laplacian_kind: kind tag of the source operator.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    total_dim: int
    laplacian_kind: str

    @property
    def n_retained(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def is_full(self) -> bool:
        return self.n_retained == self.total_dim


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry with non-negligible magnitude is > 0."""
    vectors = np.array(vectors, copy=True)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        peak = np.max(np.abs(col))
        if peak == 0.0:
            continue
        lead = np.argmax(np.abs(col) > 1e-8 * peak)
        if col[lead] < 0:
            vectors[:, j] = -col
    return vectors


def _finalize(values, vectors, total_dim, kind) -> SpectralBasis:
    values = np.asarray(values, dtype=float)
    vectors = np.asarray(vectors, dtype=float)
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    scale = max(float(values[-1]), 1.0) if values.size else 1.0
    if values.size and values[0] < -1e-8 * scale:
        raise EigensolverError(
            f"laplacian eigenvalue {values[0]:.3e} is negative beyond tolerance"
        )
    values = np.maximum(values, 0.0)
    vectors = _canonical_signs(vectors)
    values.setflags(write=False)
    vectors.setflags(write=False)
    return SpectralBasis(
        eigenvalues=values,
        eigenvectors=vectors,
        total_dim=int(total_dim),
        laplacian_kind=kind,
    )


def eigendecompose_full(
    operator: LaplacianOperator, size_limit: int = DENSE_SIZE_LIMIT
) -> SpectralBasis:
    """Dense symmetric eigendecomposition (all n pairs).

    Guarded by ``size_limit`` to keep dense O(n^3) work at desk scale; larger
    operators should go through :func:`eigendecompose_truncated`.
    """
    n = operator.node_count
    if n > size_limit:
        raise ValueError(
            f"node count {n} exceeds dense limit {size_limit}; "
            "use eigendecompose_truncated for a partial basis"
        )
    dense = operator.matrix.toarray()
    values, vectors = scipy.linalg.eigh(dense)
    return _finalize(values, vectors, n, operator.kind)


def eigendecompose_truncated(operator: LaplacianOperator, n_pairs: int) -> SpectralBasis:
    """Lowest ``n_pairs`` eigenpairs via shift-invert Lanczos.

    Falls back to the dense path for tiny problems or a full request, where
    ARPACK either cannot run (k = n) or is not worth it.
    """
    n = operator.node_count
    if not 1 <= n_pairs <= n:
        raise ValueError(f"n_pairs={n_pairs} out of range for n={n}")
    if n_pairs == n or n < 8:
        full = eigendecompose_full(operator, size_limit=max(n, DENSE_SIZE_LIMIT))
        return truncate_basis(full, n_pairs)

    mat = operator.matrix.tocsc()
    gershgorin = float(np.max(np.abs(mat).sum(axis=1))) if n else 1.0
    sigma = -1e-3 * max(gershgorin, 1.0)
    v0 = np.random.default_rng(0x5EED).standard_normal(n)
    try:
        values, vectors = scipy.sparse.linalg.eigsh(
            mat,
            k=n_pairs,
            sigma=sigma,
            which="LM",
            maxiter=10 * n_pairs + 200,
            tol=1e-10,
            v0=v0,
        )
    except ArpackNoConvergence as exc:
        converged = exc.eigenvalues.shape[0] if exc.eigenvalues is not None else 0
        residuals = None
        if converged:
            r = mat @ exc.eigenvectors - exc.eigenvectors * exc.eigenvalues
            residuals = np.linalg.norm(r, axis=0)
        raise EigensolverError(
            f"ARPACK converged {converged}/{n_pairs} pairs"
            + (
                f"; residual norms of converged pairs: {np.array2string(residuals, precision=2)}"
                if residuals is not None
                else ""
            ),
            residual_norms=residuals,
        ) from exc
    return _finalize(values, vectors, n, operator.kind)


def truncate_basis(basis: SpectralBasis, n_pairs: int) -> SpectralBasis:
    """Keep the lowest ``n_pairs`` pairs of an existing basis."""
    if not 1 <= n_pairs <= basis.n_retained:
        raise ValueError(
            f"n_pairs={n_pairs} out of range for basis with {basis.n_retained} pairs"
        )
    return SpectralBasis(
        eigenvalues=basis.eigenvalues[:n_pairs],
        eigenvectors=basis.eigenvectors[:, :n_pairs],
        total_dim=basis.total_dim,
        laplacian_kind=basis.laplacian_kind,
    )


def apply_spectral_function(basis: SpectralBasis, fn) -> np.ndarray:
    """Evaluate ``U f(diag(lambda)) U^T`` on the retained subspace.

    ``fn`` maps eigenvalues to spectral values, either vectorized over an
    array or entrywise. Non-finite spectral values are rejected with the
    offending eigenvalue named.
    """
    lam = basis.eigenvalues
    try:
        values = np.asarray(fn(lam), dtype=float)
        if values.shape != lam.shape:
            raise ValueError
    except (TypeError, ValueError):
        values = np.array([float(fn(x)) for x in lam])
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"spectral function is not finite at eigenvalue {lam[i]!r}: {values[i]!r}"
        )
    u = basis.eigenvectors
    result = (u * values) @ u.T
    return (result + result.T) / 2.0


def heat_propagate(basis: SpectralBasis, v, t: float) -> np.ndarray:
    """Solution at time ``t`` of the graph heat equation started at ``v``.

    Exact on the retained subspace: with a full basis this is e^{-t L} v.
    Negative times are rejected (backward heat flow is unstable by design).
    """
    if t < 0:
        raise ValueError(f"negative time {t}")
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.total_dim:
        raise ValueError(
            f"vector length {v.shape[0]} does not match node count {basis.total_dim}"
        )
    u = basis.eigenvectors
    coeff = u.T @ v
    return u @ (np.exp(-t * basis.eigenvalues) * coeff.T).T


def laplacian_hash(operator: LaplacianOperator) -> str:
    """Content hash of a Laplacian (kind + canonical CSR arrays)."""
    mat = operator.matrix.tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    h = hashlib.sha256()
    h.update(operator.kind.encode())
    h.update(struct.pack("<QQ", *mat.shape))
    h.update(np.asarray(mat.indptr, dtype=np.int64).tobytes())
    h.update(np.asarray(mat.indices, dtype=np.int64).tobytes())
    h.update(np.asarray(mat.data, dtype=np.float64).tobytes())
    return h.hexdigest()


def save_basis(path, basis: SpectralBasis):
    """Write a basis to the binary cache format.

    Layout: header (magic, version, n, l) then eigenvalues as float64 and
    eigenvectors as float64 in column-major order.
    """
    n, l = basis.total_dim, basis.n_retained
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _FORMAT_VERSION, n, l))
        fh.write(np.asarray(basis.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.asarray(basis.eigenvectors, dtype="<f8").tobytes(order="F"))


def load_basis(path, laplacian_kind: str) -> SpectralBasis:
    """Read a basis written by :func:`save_basis`.

    The kind is supplied by the caller because cache files are keyed by a
    hash that already commits to it.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"truncated basis file {path}")
        magic, version, n, l = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"not a basis cache file: {path}")
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported basis format version {version}")
        payload = fh.read()
    expected = 8 * (l + n * l)
    if len(payload) != expected:
        raise ValueError(f"corrupt basis file {path}: payload size mismatch")
    values = np.frombuffer(payload[: 8 * l], dtype="<f8").copy()
    vectors = (
        np.frombuffer(payload[8 * l :], dtype="<f8")
        .reshape((n, l), order="F")
        .copy()
    )
    return _finalize(values, vectors, n, laplacian_kind)


def _default_cache_dir():
    value = os.environ.get(CACHE_ENV_VAR, "")
    return Path(value) if value else None


def cached_eigendecomposition(
    operator: LaplacianOperator, n_pairs: int, cache_dir=None
):
    """Eigendecompose with an on-disk cache.

    Returns ``(basis, cache_hit, path)``. ``cache_dir`` defaults to the
    ``GRAPH_MATERN_CACHE_DIR`` environment variable; with neither set the
    decomposition is computed fresh and ``path`` is None. ``n_pairs`` larger
    than n is clamped with a warning.
    """
    n = operator.node_count
    if n_pairs > n:
        warnings.warn(
            f"requested {n_pairs} eigenpairs of an operator with {n} nodes; clamping",
            stacklevel=2,
        )
        n_pairs = n
    if cache_dir is None:
        cache_dir = _default_cache_dir()
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"{laplacian_hash(operator)}_l{n_pairs}.eig"
        if path.exists():
            return load_basis(path, operator.kind), True, path

    if n_pairs == n and n <= DENSE_SIZE_LIMIT:
        basis = eigendecompose_full(operator)
    elif n <= DENSE_SIZE_LIMIT:
        basis = truncate_basis(eigendecompose_full(operator), n_pairs)
    else:
        basis = eigendecompose_truncated(operator, n_pairs)
    if path is not None:
        save_basis(path, basis)
    return basis, False, path
