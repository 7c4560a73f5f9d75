"""Gaussian process regression on graph nodes.

Three inference routes over the same prior:

* ``posterior``: dense conditioning on K_xx + noise2 I.
* ``woodbury_posterior``: the identical posterior computed through the
  spectral (Fourier feature) identity, whose cost is an l x l solve plus
  l * |x| products; exact when the basis is full, rank-l otherwise.
* ``gmrf_posterior``: sparse-precision conditioning for integer smoothness,
  dual to the matern kernel with variance normalization off.

The log marginal likelihood carries hand-derived gradients with respect to
the unconstrained (log, or logit for alpha) coordinates of the trainable
parameters, including the trace-normalization constant's dependence on them.
"""

import dataclasses
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import cho_solve, solve_triangular
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .kernels import KernelSpec, kernel_matrix, spectral_weights, trainable_params
from .optim import AdamConfig, AdamState, adam_step
from .spectral import SpectralBasis

__all__ = [
    "PosteriorSummary",
    "GPRegressionModel",
    "posterior",
    "woodbury_posterior",
    "log_marginal_likelihood",
    "fit",
    "pathwise_sample",
    "gmrf_posterior",
    "read_targets_csv",
    "save_model",
    "load_model",
]

# Relative jitter ladder tried before declaring the train covariance non-PD.
_JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

_CONDITION_WARN = 1e12


def unconstrained_name(name: str) -> str:
    return "logit_alpha" if name == "alpha" else f"log_{name}"


def to_unconstrained(name: str, value: float) -> float:
    if name == "alpha":
        return float(np.log(value) - np.log1p(-value))
    return float(np.log(value))


def from_unconstrained(name: str, t: float) -> float:
    if name == "alpha":
        return float(1.0 / (1.0 + np.exp(-t)))
    return float(np.exp(t))


def chain_factor(name: str, value: float) -> float:
    """d(raw)/d(unconstrained) evaluated at the raw value."""
    if name == "alpha":
        return float(value * (1.0 - value))
    return float(value)


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior marginals at the query nodes.

    ``covariance`` is None when only the diagonal was requested; ``variance``
    is always present and clamped at zero against rounding.
    """

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray | None = None

    @property
    def stddev(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass
class GPRegressionModel:
    """Graph GP regression state: kernel spec, basis, data, noise variance."""

    spec: KernelSpec
    basis: SpectralBasis
    train_nodes: np.ndarray
    targets: np.ndarray
    noise2: float = 0.01
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.train_nodes, dtype=np.int64)
        targets = np.asarray(self.targets, dtype=float)
        if nodes.ndim != 1 or targets.shape != nodes.shape:
            raise ValueError("train_nodes and targets must be matching 1-d arrays")
        if nodes.size == 0:
            raise ValueError("regression needs at least one training node")
        if nodes.min() < 0 or nodes.max() >= self.basis.total_dim:
            raise ValueError(
                f"training node out of range [0, {self.basis.total_dim})"
            )
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        if not (np.isfinite(self.noise2) and self.noise2 > 0):
            raise ValueError(f"noise2 must be positive, got {self.noise2!r}")
        if self.spec.laplacian_kind != self.basis.laplacian_kind:
            raise ValueError(
                "kernel spec and basis disagree on the laplacian kind"
            )
        object.__setattr__(self, "train_nodes", nodes)
        object.__setattr__(self, "targets", targets)

    def with_raw_params(self, raw: dict) -> "GPRegressionModel":
        """New model with raw kernel parameters / noise2 replaced."""
        spec_updates = {k: v for k, v in raw.items() if k != "noise2"}
        spec = self.spec.with_params(**spec_updates) if spec_updates else self.spec
        return dataclasses.replace(
            self, spec=spec, noise2=raw.get("noise2", self.noise2)
        )

    # Everything below is derived state, memoized per instance. Parameter
    # changes go through with_raw_params, which builds a fresh instance, so
    # stale entries cannot survive a parameter change.

    def _phi_train(self) -> np.ndarray:
        if "phi_x" not in self._cache:
            self._cache["phi_x"] = self.basis.eigenvectors[self.train_nodes]
        return self._cache["phi_x"]

    def _weights(self, with_grads=False):
        key = "weights_g" if with_grads else "weights"
        if key not in self._cache:
            self._cache[key] = spectral_weights(
                self.spec,
                self.basis.eigenvalues,
                self.basis.total_dim,
                with_grads=with_grads,
            )
        return self._cache[key]

    def _train_chol(self):
        """Cholesky of K_xx + noise2 I with an escalating jitter ladder."""
        if "chol" in self._cache:
            return self._cache["chol"]
        d, _ = self._weights()
        phi = self._phi_train()
        k_xx = (phi * d) @ phi.T
        k_xx = (k_xx + k_xx.T) / 2.0
        c = k_xx + self.noise2 * np.eye(k_xx.shape[0])
        scale = float(np.mean(np.diag(c)))
        chol = None
        used = None
        for j in _JITTERS:
            try:
                chol = scipy.linalg.cholesky(c + (j * scale) * np.eye(c.shape[0]), lower=True)
                used = j
                break
            except scipy.linalg.LinAlgError:
                continue
        if chol is None:
            raise scipy.linalg.LinAlgError(
                "train covariance is not positive definite even with jitter "
                f"up to {_JITTERS[-1]:g} * mean(diag)"
            )
        self._cache["chol"] = (chol, used)
        return self._cache["chol"]


def _as_query(model: GPRegressionModel, query):
    if query is None:
        return np.arange(model.basis.total_dim, dtype=np.int64)
    q = np.asarray(query, dtype=np.int64)
    if q.ndim != 1:
        raise ValueError("query must be a 1-d node index array")
    if q.size and (q.min() < 0 or q.max() >= model.basis.total_dim):
        raise ValueError(f"query node out of range [0, {model.basis.total_dim})")
    return q


def posterior(model: GPRegressionModel, query=None, diag=False) -> PosteriorSummary:
    """Exact posterior at the query nodes by dense conditioning.

    With ``diag`` only the marginal variances are formed. Warns when the
    train covariance is severely ill-conditioned instead of failing.
    """
    q = _as_query(model, query)
    d, _ = model._weights()
    chol, _ = model._train_chol()
    phi_x = model._phi_train()
    phi_q = model.basis.eigenvectors[q]
    k_qx = (phi_q * d) @ phi_x.T

    diag_c = np.diag(chol)
    cond = (np.max(diag_c) / np.min(diag_c)) ** 2
    if cond > _CONDITION_WARN:
        warnings.warn(
            f"train covariance condition number ~{cond:.2e}; posterior may be inaccurate",
            stacklevel=2,
        )

    alpha = cho_solve((chol, True), model.targets)
    mean = k_qx @ alpha
    half = solve_triangular(chol, k_qx.T, lower=True)
    if diag:
        var = np.einsum("ij,j->i", phi_q**2, d) - np.einsum("ji,ji->i", half, half)
        return PosteriorSummary(mean=mean, variance=np.maximum(var, 0.0))
    k_qq = (phi_q * d) @ phi_q.T
    cov = k_qq - half.T @ half
    cov = (cov + cov.T) / 2.0
    var = np.maximum(np.diag(cov), 0.0)
    return PosteriorSummary(mean=mean, variance=var, covariance=cov)


def woodbury_posterior(model: GPRegressionModel, query=None, diag=False) -> PosteriorSummary:
    """Same posterior through the low-rank spectral identity.

    (K_xx + s2 I)^{-1} = s2^{-1} I - s2^{-2} P (D^{-1} + s2^{-1} P^T P)^{-1} P^T
    with P the train rows of the eigenvectors and D the spectral weights, so
    all solves are l x l. Zero-weight modes carry no prior mass and are
    dropped (with a warning) since D must be inverted.
    """
    q = _as_query(model, query)
    d, _ = model._weights()
    keep = d > 0.0
    if not np.all(keep):
        warnings.warn(
            f"dropping {int(np.sum(~keep))} zero-weight spectral mode(s) in the "
            "low-rank posterior",
            stacklevel=2,
        )
    dk = d[keep]
    if dk.size == 0:
        raise ValueError("all spectral weights are zero; prior is degenerate")
    phi_x = model._phi_train()[:, keep]
    phi_q = model.basis.eigenvectors[q][:, keep]
    s2 = model.noise2
    y = model.targets

    e = phi_x.T @ phi_x
    g = np.diag(1.0 / dk) + e / s2
    g_chol = scipy.linalg.cholesky((g + g.T) / 2.0, lower=True)

    # alpha = (K_xx + s2 I)^{-1} y without forming the n_x x n_x matrix
    t = phi_x.T @ y
    alpha = y / s2 - phi_x @ cho_solve((g_chol, True), t) / s2**2
    mean = phi_q @ (dk * (phi_x.T @ alpha))

    # mid = D - D P^T (K_xx + s2 I)^{-1} P D, all in l x l space
    s = cho_solve((g_chol, True), e)
    inner = e / s2 - (e @ s) / s2**2
    mid = np.diag(dk) - (dk[:, None] * inner) * dk[None, :]
    mid = (mid + mid.T) / 2.0
    if diag:
        var = np.einsum("ij,ij->i", phi_q @ mid, phi_q)
        return PosteriorSummary(mean=mean, variance=np.maximum(var, 0.0))
    cov = phi_q @ mid @ phi_q.T
    cov = (cov + cov.T) / 2.0
    return PosteriorSummary(
        mean=mean, variance=np.maximum(np.diag(cov), 0.0), covariance=cov
    )


def log_marginal_likelihood(model: GPRegressionModel):
    """log N(y | 0, K_xx + noise2 I) and its gradients.

    Returns ``(value, grads)`` with grads keyed by the unconstrained
    coordinates (log_kappa, log_nu, log_sigma2, logit_alpha as applicable,
    and log_noise2).
    """
    d, d_grads = model._weights(with_grads=True)
    phi = model._phi_train()
    chol, _ = model._train_chol()
    y = model.targets
    n = y.shape[0]

    alpha = cho_solve((chol, True), y)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(chol))))
        - 0.5 * n * np.log(2.0 * np.pi)
    )

    # dL/dtheta = 0.5 alpha^T dC alpha - 0.5 tr(C^{-1} dC) with
    # dC = P diag(dd) P^T, collapsing both terms to weighted column sums.
    proj = phi.T @ alpha
    m = cho_solve((chol, True), phi)
    trace_cols = np.einsum("ij,ij->j", phi, m)
    quad_cols = proj**2

    grads = {}
    raw = {name: getattr(model.spec, name) for name in trainable_params(model.spec)}
    raw["noise2"] = model.noise2
    for name, dd in d_grads.items():
        g = 0.5 * float(np.dot(dd, quad_cols - trace_cols))
        grads[unconstrained_name(name)] = g * chain_factor(name, raw[name])

    inv_chol = solve_triangular(chol, np.eye(n), lower=True)
    trace_cinv = float(np.sum(inv_chol**2))
    g_noise = 0.5 * (float(alpha @ alpha) - trace_cinv)
    grads["log_noise2"] = g_noise * model.noise2
    return value, grads


def fit(model: GPRegressionModel, config: AdamConfig | None = None):
    """Maximize the log marginal likelihood with Adam in log coordinates.

    Returns ``(model, loss_trace)`` where the model is the best iterate seen
    (the negative log marginal likelihood trace includes the initial point
    and the post-update endpoint).
    """
    config = config or AdamConfig()
    allowed = tuple(trainable_params(model.spec)) + ("noise2",)
    names = config.trainable if config.trainable is not None else allowed
    unknown = set(names) - set(allowed)
    if unknown:
        raise ValueError(
            f"not trainable for a {model.spec.family} kernel: {sorted(unknown)}"
        )
    if not names:
        raise ValueError("no trainable parameters selected")

    def raw_of(m):
        out = {n: getattr(m.spec, n) for n in names if n != "noise2"}
        if "noise2" in names:
            out["noise2"] = m.noise2
        return out

    params = {
        unconstrained_name(n): np.asarray(to_unconstrained(n, v))
        for n, v in raw_of(model).items()
    }
    state = AdamState.from_config(config)
    current = model
    best = (np.inf, model)
    trace = []
    for _ in range(config.iterations + 1):
        value, grads = log_marginal_likelihood(current)
        loss = -value
        if not np.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss during fit at parameters {raw_of(current)}"
            )
        trace.append(loss)
        if loss < best[0]:
            best = (loss, current)
        if len(trace) == config.iterations + 1:
            break
        step_grads = {k: np.asarray(-grads[k]) for k in params}
        try:
            state, params = adam_step(state, params, step_grads)
        except ValueError as exc:
            raise RuntimeError(
                f"optimization aborted at parameters {raw_of(current)}: {exc}"
            ) from exc
        raw = {
            n: from_unconstrained(n, float(params[unconstrained_name(n)]))
            for n in names
        }
        current = current.with_raw_params(raw)
    return best[1], np.asarray(trace)


def pathwise_sample(model: GPRegressionModel, query=None, n_samples=1, seed=0):
    """Joint posterior samples via Matheron's update.

    A prior path is drawn exactly from the spectral features (f = P sqrt(D) xi)
    at the query and train nodes with shared coefficients, then corrected by
    K_.x (K_xx + noise2 I)^{-1} (y - f_x - eps). Returns (n_samples, n_query).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    q = _as_query(model, query)
    rng = np.random.default_rng(seed)
    d, _ = model._weights()
    root = np.sqrt(d)
    phi_x = model._phi_train()
    phi_q = model.basis.eigenvectors[q]
    chol, _ = model._train_chol()

    xi = rng.standard_normal((d.shape[0], n_samples))
    f_x = phi_x @ (root[:, None] * xi)
    f_q = phi_q @ (root[:, None] * xi)
    eps = np.sqrt(model.noise2) * rng.standard_normal(f_x.shape)
    resid = model.targets[:, None] - f_x - eps
    alpha = cho_solve((chol, True), resid)
    paths = f_q + (phi_q * d) @ (phi_x.T @ alpha)
    return paths.T


def gmrf_posterior(precision, noise2, train_nodes, targets, query=None) -> PosteriorSummary:
    """Posterior under a sparse-precision prior by sparse factorization.

    The posterior precision is Q + noise2^{-1} sum_i e_i e_i^T over observed
    nodes; the mean solves it against noise2^{-1} sum_i e_i y_i and the query
    covariance reads off columns of its inverse.
    """
    q_prior = sp.csc_array(precision)
    n = q_prior.shape[0]
    if q_prior.shape[0] != q_prior.shape[1]:
        raise ValueError("precision must be square")
    if not (np.isfinite(noise2) and noise2 > 0):
        raise ValueError(f"noise2 must be positive, got {noise2!r}")
    x = np.asarray(train_nodes, dtype=np.int64)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 1 or y.shape != x.shape:
        raise ValueError("train_nodes and targets must be matching 1-d arrays")
    if x.size and (x.min() < 0 or x.max() >= n):
        raise ValueError(f"training node out of range [0, {n})")
    if query is None:
        q = np.arange(n, dtype=np.int64)
    else:
        q = np.asarray(query, dtype=np.int64)
        if q.size and (q.min() < 0 or q.max() >= n):
            raise ValueError(f"query node out of range [0, {n})")

    counts = np.zeros(n)
    np.add.at(counts, x, 1.0)
    q_post = (q_prior + sp.diags_array(counts / noise2)).tocsc()
    b = np.zeros(n)
    np.add.at(b, x, y / noise2)
    try:
        lu = splu(q_post)
    except RuntimeError as exc:
        raise scipy.linalg.LinAlgError(
            f"posterior precision factorization failed ({exc}); the prior "
            "precision may be singular or badly scaled"
        ) from exc
    mean = lu.solve(b)[q]
    rhs = np.zeros((n, q.shape[0]))
    rhs[q, np.arange(q.shape[0])] = 1.0
    cols = lu.solve(rhs)
    cov = cols[q]
    cov = (cov + cov.T) / 2.0
    return PosteriorSummary(
        mean=mean, variance=np.maximum(np.diag(cov), 0.0), covariance=cov
    )


def read_targets_csv(path):
    """Read ``node_index,value`` rows (optional header) into index/value arrays."""
    nodes, values = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ValueError(f"expected 'node_index,value' at line {lineno}")
            if lineno == 1 and not parts[0].lstrip("-").isdigit():
                continue
            try:
                nodes.append(int(parts[0]))
                values.append(float(parts[1]))
            except ValueError:
                raise ValueError(f"malformed row at line {lineno}") from None
    return np.asarray(nodes, dtype=np.int64), np.asarray(values, dtype=float)


def save_model(model: GPRegressionModel, path):
    """Snapshot kernel, noise and training data as schema version 1 JSON."""
    payload = {
        "schema_version": 1,
        "kind": "regression",
        "kernel": model.spec.to_dict(),
        "noise2": model.noise2,
        "train_nodes": [int(i) for i in model.train_nodes],
        "targets": [float(v) for v in model.targets],
        "eigenpairs": model.basis.n_retained,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path, basis: SpectralBasis) -> GPRegressionModel:
    """Rebuild a snapshot against a caller-provided basis."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != 1:
        raise ValueError(f"unsupported snapshot schema {payload.get('schema_version')!r}")
    if payload.get("kind") != "regression":
        raise ValueError(f"snapshot kind {payload.get('kind')!r} is not regression")
    if payload.get("eigenpairs") != basis.n_retained:
        raise ValueError(
            f"snapshot expects {payload.get('eigenpairs')} eigenpairs but basis "
            f"holds {basis.n_retained}"
        )
    return GPRegressionModel(
        spec=KernelSpec.from_dict(payload["kernel"]),
        basis=basis,
        train_nodes=np.asarray(payload["train_nodes"], dtype=np.int64),
        targets=np.asarray(payload["targets"], dtype=float),
        noise2=float(payload["noise2"]),
    )
