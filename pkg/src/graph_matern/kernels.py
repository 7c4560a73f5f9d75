"""Kernel families defined through the Laplacian's spectrum.

Every family is a set of nonnegative spectral weights d_s applied to the
eigenbasis: K = U diag(d) U^T with

    d_s = sigma2 * c * w(lambda_s),

where w is the family's spectral profile and c is an optional trace
normalization c = n / sum_s w(lambda_s) making the average prior variance
equal sigma2 over the full node set (computed over the retained modes when
the basis is truncated).

Profiles:
    matern:          w = (2 nu / kappa^2 + lambda)^(-nu)
    diffusion:       w = exp(-(kappa^2 / 2) lambda)
    random_walk:     w = (1 - (1 - alpha) lambda)^p   (sym-normalized only)
    inverse_cosine:  w = cos(pi lambda / 4)           (sym-normalized only)

matern and diffusion are computed in log space so extreme smoothness values
(nu ~ 1e4) stay finite under normalization. Analytic derivatives of d with
respect to the raw trainable parameters are available for the fit loops; the
normalization constant's dependence on the parameters is included.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .graphs import LAPLACIAN_KINDS, LaplacianOperator
from .spectral import SpectralBasis, eigendecompose_full

__all__ = [
    "FAMILIES",
    "KernelSpec",
    "SpectralDensity",
    "spectral_density",
    "spectral_weights",
    "trainable_params",
    "kernel_matrix",
    "matern_precision_sparse",
    "random_walk_kernel",
    "inverse_cosine_kernel",
    "separable_product_kernel",
]

FAMILIES = ("matern", "diffusion", "random_walk", "inverse_cosine")

_TRAINABLE = {
    "matern": ("kappa", "nu", "sigma2"),
    "diffusion": ("kappa", "sigma2"),
    "random_walk": ("alpha", "sigma2"),
    "inverse_cosine": ("sigma2",),
}


def _positive(name, value):
    if value is None or not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of a graph kernel.

    Fields not used by the family must stay None; sigma2 is the prior
    variance scale and normalize_variance toggles trace normalization.
    """

    family: str
    nu: float | None = None
    kappa: float | None = None
    sigma2: float = 1.0
    alpha: float | None = None
    p: int | None = None
    laplacian_kind: str = "unnormalized"
    normalize_variance: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.laplacian_kind not in LAPLACIAN_KINDS:
            raise ValueError(f"unknown laplacian kind {self.laplacian_kind!r}")
        _positive("sigma2", self.sigma2)
        unused = {"nu", "kappa", "alpha", "p"}
        if self.family == "matern":
            _positive("nu", self.nu)
            _positive("kappa", self.kappa)
            unused -= {"nu", "kappa"}
        elif self.family == "diffusion":
            _positive("kappa", self.kappa)
            unused -= {"kappa"}
        elif self.family == "random_walk":
            if self.alpha is None or not (0.0 <= self.alpha < 1.0):
                raise ValueError(f"alpha must lie in [0, 1), got {self.alpha!r}")
            if self.p is None or self.p != int(self.p) or int(self.p) < 1:
                raise ValueError(f"p must be a positive integer, got {self.p!r}")
            object.__setattr__(self, "p", int(self.p))
            unused -= {"alpha", "p"}
        if self.family in ("random_walk", "inverse_cosine"):
            if self.laplacian_kind != "sym_normalized":
                raise ValueError(
                    f"{self.family} kernel requires the sym_normalized laplacian"
                )
        for name in sorted(unused):
            if getattr(self, name) is not None:
                raise ValueError(
                    f"{self.family} kernel does not take parameter {name!r}"
                )

    def with_params(self, **kwargs) -> "KernelSpec":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "nu": self.nu,
            "kappa": self.kappa,
            "sigma2": self.sigma2,
            "alpha": self.alpha,
            "p": self.p,
            "laplacian": self.laplacian_kind,
            "normalize": self.normalize_variance,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "KernelSpec":
        known = {"family", "nu", "kappa", "sigma2", "alpha", "p", "laplacian", "normalize"}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown kernel spec fields: {sorted(extra)}")
        if "family" not in obj:
            raise ValueError("kernel spec is missing 'family'")
        return cls(
            family=obj["family"],
            nu=obj.get("nu"),
            kappa=obj.get("kappa"),
            sigma2=obj.get("sigma2", 1.0),
            alpha=obj.get("alpha"),
            p=obj.get("p"),
            laplacian_kind=obj.get("laplacian", "unnormalized"),
            normalize_variance=bool(obj.get("normalize", True)),
        )


@dataclass(frozen=True)
class SpectralDensity:
    """The scalar spectral profile with parameters bound, plus partials."""

    psi: object
    dpsi_dkappa: object
    dpsi_dnu: object | None


def spectral_density(spec: KernelSpec) -> SpectralDensity:
    """Closed-form Psi and its parameter partials (matern and diffusion).

    The step-based families carry their profiles in their own constructors
    and are rejected here.
    """
    if spec.family == "matern":
        nu, kappa = spec.nu, spec.kappa

        def psi(lam):
            lam = np.asarray(lam, dtype=float)
            return np.exp(-nu * np.log(2.0 * nu / kappa**2 + lam))

        def dpsi_dkappa(lam):
            lam = np.asarray(lam, dtype=float)
            b = 2.0 * nu / kappa**2 + lam
            return psi(lam) * (4.0 * nu**2 / (kappa**3 * b))

        def dpsi_dnu(lam):
            lam = np.asarray(lam, dtype=float)
            b = 2.0 * nu / kappa**2 + lam
            return psi(lam) * (-np.log(b) - 2.0 * nu / (kappa**2 * b))

        return SpectralDensity(psi=psi, dpsi_dkappa=dpsi_dkappa, dpsi_dnu=dpsi_dnu)
    if spec.family == "diffusion":
        kappa = spec.kappa

        def psi(lam):
            lam = np.asarray(lam, dtype=float)
            return np.exp(-0.5 * kappa**2 * lam)

        def dpsi_dkappa(lam):
            lam = np.asarray(lam, dtype=float)
            return psi(lam) * (-kappa * lam)

        return SpectralDensity(psi=psi, dpsi_dkappa=dpsi_dkappa, dpsi_dnu=None)
    raise ValueError(
        f"spectral_density is defined for matern/diffusion, not {spec.family!r}"
    )


def trainable_params(spec: KernelSpec) -> tuple:
    """Raw kernel parameter names the fit loops may optimize."""
    return _TRAINABLE[spec.family]


def _weights_from_log(logw, dlogw, total_dim, sigma2, normalize, with_grads):
    if normalize:
        lse = logsumexp(logw)
        d = sigma2 * np.exp(math.log(total_dim) + logw - lse)
        if not with_grads:
            return d, None
        soft = np.exp(logw - lse)
        grads = {
            name: d * (dl - np.dot(soft, dl)) for name, dl in dlogw.items()
        }
    else:
        d = sigma2 * np.exp(logw)
        if not with_grads:
            return d, None
        grads = {name: d * dl for name, dl in dlogw.items()}
    grads["sigma2"] = d / sigma2
    return d, grads


def _weights_from_linear(w, dw, total_dim, sigma2, normalize, with_grads):
    if normalize:
        total = float(np.sum(w))
        if total <= 0:
            raise ValueError(
                "cannot normalize variance: spectral weights sum to zero"
            )
        c = total_dim / total
        d = sigma2 * c * w
        if not with_grads:
            return d, None
        grads = {
            name: sigma2 * c * (dwi - w * (np.sum(dwi) / total))
            for name, dwi in dw.items()
        }
    else:
        d = sigma2 * w
        if not with_grads:
            return d, None
        grads = {name: sigma2 * dwi for name, dwi in dw.items()}
    grads["sigma2"] = d / sigma2
    return d, grads


def spectral_weights(spec: KernelSpec, eigenvalues, total_dim=None, with_grads=False):
    """Prior spectral weights d_s, optionally with analytic parameter grads.

    Returns ``(d, grads)`` where grads maps each raw trainable parameter
    name to the elementwise derivative array dd/dparam (None when
    ``with_grads`` is off). ``total_dim`` is the full node count used by the
    trace normalization; it defaults to the number of eigenvalues.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.shape[0] if total_dim is None else int(total_dim)
    s2 = spec.sigma2
    norm = spec.normalize_variance

    if spec.family == "matern":
        nu, kappa = spec.nu, spec.kappa
        b = 2.0 * nu / kappa**2 + lam
        logw = -nu * np.log(b)
        dlogw = {}
        if with_grads:
            dlogw["kappa"] = 4.0 * nu**2 / (kappa**3 * b)
            dlogw["nu"] = -np.log(b) - 2.0 * nu / (kappa**2 * b)
        return _weights_from_log(logw, dlogw, n, s2, norm, with_grads)

    if spec.family == "diffusion":
        kappa = spec.kappa
        logw = -0.5 * kappa**2 * lam
        dlogw = {"kappa": -kappa * lam} if with_grads else {}
        return _weights_from_log(logw, dlogw, n, s2, norm, with_grads)

    if spec.family == "random_walk":
        alpha, p = spec.alpha, spec.p
        base = 1.0 - (1.0 - alpha) * lam
        w = np.power(base, p)
        clamped = w < 0
        if np.any(base < 0):
            warnings.warn(
                "random walk base 1-(1-alpha)*lambda is negative for some modes; "
                "negative spectral weights are clamped to zero",
                stacklevel=2,
            )
        w = np.where(clamped, 0.0, w)
        dw = {}
        if with_grads:
            dalpha = p * np.power(base, p - 1) * lam
            dw["alpha"] = np.where(clamped, 0.0, dalpha)
        return _weights_from_linear(w, dw, n, s2, norm, with_grads)

    if spec.family == "inverse_cosine":
        w = np.maximum(np.cos(np.pi * np.clip(lam, 0.0, 2.0) / 4.0), 0.0)
        return _weights_from_linear(w, {}, n, s2, norm, with_grads)

    raise ValueError(f"unknown kernel family {spec.family!r}")


def _select(basis: SpectralBasis, nodes):
    if nodes is None:
        return basis.eigenvectors, None
    idx = np.asarray(nodes, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("node selection must be a 1-d index array")
    if idx.size and (idx.min() < 0 or idx.max() >= basis.total_dim):
        raise ValueError(
            f"node index out of range [0, {basis.total_dim}) in selection"
        )
    return basis.eigenvectors[idx], idx


def kernel_matrix(basis: SpectralBasis, spec: KernelSpec, rows=None, cols=None):
    """Cross-covariance block K[rows, cols] (full matrix by default).

    The basis must come from the Laplacian kind the spec declares. With a
    truncated basis this is the rank-l kernel on the retained modes.
    """
    if basis.laplacian_kind != spec.laplacian_kind:
        raise ValueError(
            f"kernel expects {spec.laplacian_kind!r} laplacian but basis was "
            f"built from {basis.laplacian_kind!r}"
        )
    d, _ = spectral_weights(spec, basis.eigenvalues, basis.total_dim)
    ur, ridx = _select(basis, rows)
    uc, cidx = _select(basis, cols)
    same = (rows is None and cols is None) or (
        ridx is not None and cidx is not None and np.array_equal(ridx, cidx)
    )
    k = (ur * d) @ uc.T
    if same:
        k = (k + k.T) / 2.0
    return k


def matern_precision_sparse(operator: LaplacianOperator, nu, kappa) -> sp.csr_array:
    """Sparse precision (2 nu / kappa^2 I + L)^nu for integer nu in 1..4.

    Its inverse equals the matern kernel with sigma2 = 1 and variance
    normalization off; each power densifies the stencil by one hop, which is
    why large nu belongs on the spectral path instead.
    """
    if nu != int(nu) or not 1 <= int(nu) <= 4:
        raise ValueError(
            f"nu must be an integer in 1..4 for the sparse precision path, got "
            f"{nu!r}; use the spectral kernel for other smoothness values"
        )
    _positive("kappa", kappa)
    nu = int(nu)
    n = operator.node_count
    a = (2.0 * nu / kappa**2) * sp.eye_array(n, format="csr") + operator.matrix.tocsr()
    q = a
    for _ in range(nu - 1):
        q = q @ a
    q = q.tocsr()
    q.sum_duplicates()
    q.sort_indices()
    return q


def _basis_of(source) -> SpectralBasis:
    if isinstance(source, SpectralBasis):
        return source
    if isinstance(source, LaplacianOperator):
        return eigendecompose_full(source)
    raise TypeError(f"expected SpectralBasis or LaplacianOperator, got {type(source)!r}")


def random_walk_kernel(source, alpha, p, sigma2=1.0, normalize=False) -> np.ndarray:
    """Random walk kernel sigma2 c (I - (1 - alpha) L_sym)^p as a dense matrix."""
    basis = _basis_of(source)
    spec = KernelSpec(
        family="random_walk",
        alpha=alpha,
        p=p,
        sigma2=sigma2,
        laplacian_kind="sym_normalized",
        normalize_variance=normalize,
    )
    return kernel_matrix(basis, spec)


def inverse_cosine_kernel(source, sigma2=1.0, normalize=False) -> np.ndarray:
    """Inverse cosine kernel with spectral weights cos(pi lambda / 4)."""
    basis = _basis_of(source)
    spec = KernelSpec(
        family="inverse_cosine",
        sigma2=sigma2,
        laplacian_kind="sym_normalized",
        normalize_variance=normalize,
    )
    return kernel_matrix(basis, spec)


def separable_product_kernel(base_kernel, graph_kernel):
    """Product kernel on (feature, node) pairs.

    ``base_kernel(Xa, Xb)`` must return the Gram matrix of the non-graph
    factor; ``graph_kernel`` is a fixed (n, n) node kernel matrix. The result
    is a callable gram((Xa, nodes_a), (Xb, nodes_b)=None) evaluating the
    elementwise product k_base(x, x') * k_graph(i, i').
    """
    graph_kernel = np.asarray(graph_kernel, dtype=float)
    if graph_kernel.ndim != 2 or graph_kernel.shape[0] != graph_kernel.shape[1]:
        raise ValueError("graph_kernel must be a square matrix")

    def gram(pairs_a, pairs_b=None):
        xa, ia = pairs_a
        xb, ib = (xa, ia) if pairs_b is None else pairs_b
        ia = np.asarray(ia, dtype=np.int64)
        ib = np.asarray(ib, dtype=np.int64)
        n = graph_kernel.shape[0]
        for idx in (ia, ib):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"node index out of range [0, {n}) in pairs")
        kb = np.asarray(base_kernel(xa, xb), dtype=float)
        if kb.shape != (ia.shape[0], ib.shape[0]):
            raise ValueError(
                f"base kernel returned shape {kb.shape}, expected "
                f"{(ia.shape[0], ib.shape[0])}"
            )
        return kb * graph_kernel[np.ix_(ia, ib)]

    return gram
