"""Kernel specs, spectral weights and their gradients, and kernel matrices."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from graph_matern import (
    KernelSpec,
    build_laplacian,
    eigendecompose_full,
    inverse_cosine_kernel,
    kernel_matrix,
    matern_precision_sparse,
    random_walk_kernel,
    separable_product_kernel,
    spectral_density,
    spectral_weights,
    trainable_params,
    truncate_basis,
)
from helpers import (
    dense_laplacian,
    dense_spectral_kernel,
    diffusion_profile,
    matern_profile,
    path_graph,
    random_connected_graph,
)

MATERN = KernelSpec(family="matern", nu=1.5, kappa=2.0)
DIFFUSION = KernelSpec(family="diffusion", kappa=1.2, laplacian_kind="sym_normalized")
RANDOM_WALK = KernelSpec(
    family="random_walk", alpha=0.6, p=3, laplacian_kind="sym_normalized"
)
INV_COSINE = KernelSpec(family="inverse_cosine", laplacian_kind="sym_normalized")


def _sym_eigenvalues(rng, n=12):
    g = random_connected_graph(rng, n)
    basis = eigendecompose_full(build_laplacian(g, "sym_normalized"))
    return basis.eigenvalues


class TestKernelSpec:
    def test_matern_requires_nu_and_kappa(self):
        with pytest.raises(ValueError, match="nu"):
            KernelSpec(family="matern", kappa=1.0)
        with pytest.raises(ValueError, match="kappa"):
            KernelSpec(family="matern", nu=1.0)

    def test_unused_parameters_rejected(self):
        with pytest.raises(ValueError, match="alpha"):
            KernelSpec(family="matern", nu=1.0, kappa=1.0, alpha=0.5)
        with pytest.raises(ValueError, match="nu"):
            KernelSpec(family="diffusion", kappa=1.0, nu=2.0)
        with pytest.raises(ValueError, match="kappa"):
            KernelSpec(
                family="inverse_cosine", kappa=1.0, laplacian_kind="sym_normalized"
            )

    def test_random_walk_parameter_ranges(self):
        with pytest.raises(ValueError, match="alpha"):
            KernelSpec(
                family="random_walk", alpha=1.0, p=2, laplacian_kind="sym_normalized"
            )
        with pytest.raises(ValueError, match="positive integer"):
            KernelSpec(
                family="random_walk", alpha=0.5, p=2.5, laplacian_kind="sym_normalized"
            )
        with pytest.raises(ValueError, match="positive integer"):
            KernelSpec(
                family="random_walk", alpha=0.5, p=0, laplacian_kind="sym_normalized"
            )
        spec = KernelSpec(
            family="random_walk", alpha=0.5, p=2.0, laplacian_kind="sym_normalized"
        )
        assert spec.p == 2 and isinstance(spec.p, int)

    def test_step_families_need_sym_normalized(self):
        with pytest.raises(ValueError, match="sym_normalized"):
            KernelSpec(family="random_walk", alpha=0.5, p=2)
        with pytest.raises(ValueError, match="sym_normalized"):
            KernelSpec(family="inverse_cosine")

    def test_sigma2_and_family_and_kind_validation(self):
        with pytest.raises(ValueError, match="sigma2"):
            KernelSpec(family="matern", nu=1.0, kappa=1.0, sigma2=-1.0)
        with pytest.raises(ValueError, match="unknown kernel family"):
            KernelSpec(family="gaussian", nu=1.0, kappa=1.0)
        with pytest.raises(ValueError, match="unknown laplacian kind"):
            KernelSpec(family="matern", nu=1.0, kappa=1.0, laplacian_kind="rw")

    def test_dict_roundtrip(self):
        for spec in (MATERN, DIFFUSION, RANDOM_WALK, INV_COSINE):
            again = KernelSpec.from_dict(spec.to_dict())
            assert again == spec

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ValueError, match="unknown kernel spec fields"):
            KernelSpec.from_dict({"family": "matern", "nu": 1, "kappa": 1, "tau": 2})
        with pytest.raises(ValueError, match="missing 'family'"):
            KernelSpec.from_dict({"nu": 1.0})

    def test_with_params(self):
        spec = MATERN.with_params(kappa=5.0)
        assert spec.kappa == 5.0 and spec.nu == MATERN.nu

    def test_trainable_params(self):
        assert trainable_params(MATERN) == ("kappa", "nu", "sigma2")
        assert trainable_params(DIFFUSION) == ("kappa", "sigma2")
        assert trainable_params(RANDOM_WALK) == ("alpha", "sigma2")
        assert trainable_params(INV_COSINE) == ("sigma2",)


class TestSpectralDensity:
    def test_matern_values(self):
        dens = spectral_density(MATERN)
        lam = np.array([0.0, 0.5, 2.0])
        assert_allclose(dens.psi(lam), matern_profile(1.5, 2.0)(lam), rtol=1e-12)

    def test_diffusion_values(self):
        dens = spectral_density(DIFFUSION)
        lam = np.array([0.0, 0.5, 2.0])
        assert_allclose(dens.psi(lam), diffusion_profile(1.2)(lam), rtol=1e-12)

    def test_partials_match_finite_differences(self):
        lam = np.array([0.1, 0.9, 3.0])
        h = 1e-6
        dens = spectral_density(MATERN)
        fd_kappa = (
            spectral_density(MATERN.with_params(kappa=2.0 + h)).psi(lam)
            - spectral_density(MATERN.with_params(kappa=2.0 - h)).psi(lam)
        ) / (2 * h)
        assert_allclose(dens.dpsi_dkappa(lam), fd_kappa, rtol=1e-6)
        fd_nu = (
            spectral_density(MATERN.with_params(nu=1.5 + h)).psi(lam)
            - spectral_density(MATERN.with_params(nu=1.5 - h)).psi(lam)
        ) / (2 * h)
        assert_allclose(dens.dpsi_dnu(lam), fd_nu, rtol=1e-6)
        dens_d = spectral_density(DIFFUSION)
        fd = (
            spectral_density(DIFFUSION.with_params(kappa=1.2 + h)).psi(lam)
            - spectral_density(DIFFUSION.with_params(kappa=1.2 - h)).psi(lam)
        ) / (2 * h)
        assert_allclose(dens_d.dpsi_dkappa(lam), fd, rtol=1e-6)
        assert dens_d.dpsi_dnu is None

    def test_step_families_rejected(self):
        with pytest.raises(ValueError, match="matern/diffusion"):
            spectral_density(RANDOM_WALK)


class TestSpectralWeights:
    def test_normalized_weights_sum_to_sigma2_times_n(self):
        rng = np.random.default_rng(81)
        lam = np.sort(rng.uniform(0, 4, size=15))
        for spec in (MATERN.with_params(sigma2=2.5), DIFFUSION.with_params(sigma2=0.7)):
            d, _ = spectral_weights(spec, lam)
            assert_allclose(d.sum(), spec.sigma2 * 15, rtol=1e-12)
            d2, _ = spectral_weights(spec, lam, total_dim=40)
            assert_allclose(d2.sum(), spec.sigma2 * 40, rtol=1e-12)

    def test_unnormalized_weights_equal_scaled_profile(self):
        lam = np.linspace(0.0, 3.0, 9)
        spec = MATERN.with_params(sigma2=1.7, normalize_variance=False)
        d, _ = spectral_weights(spec, lam)
        assert_allclose(d, 1.7 * matern_profile(1.5, 2.0)(lam), rtol=1e-12)
        spec_d = DIFFUSION.with_params(normalize_variance=False)
        d, _ = spectral_weights(spec_d, lam)
        assert_allclose(d, diffusion_profile(1.2)(lam), rtol=1e-12)

    def test_extreme_smoothness_stays_finite(self):
        # nu ~ 1e4 underflows the raw profile; the log-space path must survive
        lam = np.linspace(0.0, 8.0, 30)
        spec = KernelSpec(family="matern", nu=1e4, kappa=1.0)
        d, grads = spectral_weights(spec, lam, with_grads=True)
        assert np.all(np.isfinite(d)) and d.max() > 0
        assert_allclose(d.sum(), 30.0, rtol=1e-10)
        for g in grads.values():
            assert np.all(np.isfinite(g))

    def _fd_check(self, spec, lam, name, value, rel=3e-5):
        h = 1e-6 * max(abs(value), 1.0)
        d_plus, _ = spectral_weights(spec.with_params(**{name: value + h}), lam)
        d_minus, _ = spectral_weights(spec.with_params(**{name: value - h}), lam)
        fd = (d_plus - d_minus) / (2 * h)
        _, grads = spectral_weights(spec, lam, with_grads=True)
        scale = np.max(np.abs(fd)) + 1e-12
        assert np.max(np.abs(grads[name] - fd)) / scale < rel, name

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(82)
        lam = np.sort(rng.uniform(0, 2, size=11))
        for normalize in (True, False):
            m = MATERN.with_params(sigma2=1.3, normalize_variance=normalize)
            self._fd_check(m, lam, "kappa", m.kappa)
            self._fd_check(m, lam, "nu", m.nu)
            self._fd_check(m, lam, "sigma2", m.sigma2)
            df = DIFFUSION.with_params(normalize_variance=normalize)
            self._fd_check(df, lam, "kappa", df.kappa)
            self._fd_check(df, lam, "sigma2", df.sigma2)
            rw = RANDOM_WALK.with_params(normalize_variance=normalize)
            self._fd_check(rw, lam, "alpha", rw.alpha)
            self._fd_check(rw, lam, "sigma2", rw.sigma2)
            ic = INV_COSINE.with_params(normalize_variance=normalize)
            self._fd_check(ic, lam, "sigma2", ic.sigma2)

    def test_random_walk_negative_base_clamped_with_warning(self):
        lam = np.array([0.0, 2.0])  # sym-normalized spectrum of a single edge
        spec = KernelSpec(
            family="random_walk", alpha=0.1, p=3, laplacian_kind="sym_normalized"
        )
        with pytest.warns(UserWarning, match="clamped"):
            d, grads = spectral_weights(spec, lam, with_grads=True)
        assert np.all(d >= 0)
        assert d[1] == 0.0
        assert grads["alpha"][1] == 0.0

    def test_inverse_cosine_weights_match_profile(self):
        lam = np.linspace(0.0, 2.0, 9)
        spec = INV_COSINE.with_params(normalize_variance=False)
        d, _ = spectral_weights(spec, lam)
        assert_allclose(d, np.cos(np.pi * lam / 4.0), atol=1e-12)
        assert np.all(d >= 0)


class TestKernelMatrix:
    def _cases(self):
        yield MATERN, "unnormalized"
        yield MATERN.with_params(laplacian_kind="sym_normalized"), "sym_normalized"
        yield DIFFUSION.with_params(laplacian_kind="unnormalized"), "unnormalized"
        yield DIFFUSION, "sym_normalized"
        yield RANDOM_WALK, "sym_normalized"
        yield INV_COSINE, "sym_normalized"

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(91)
        g = random_connected_graph(rng, 14)
        profiles = {
            "matern": matern_profile(1.5, 2.0),
            "diffusion": diffusion_profile(1.2),
            "random_walk": lambda lam: np.maximum(1.0 - 0.4 * lam, 0.0) ** 3,
            "inverse_cosine": lambda lam: np.maximum(np.cos(np.pi * lam / 4.0), 0.0),
        }
        for spec, kind in self._cases():
            basis = eigendecompose_full(build_laplacian(g, kind))
            oracle = dense_spectral_kernel(
                dense_laplacian(g, kind), profiles[spec.family]
            )
            assert_allclose(kernel_matrix(basis, spec), oracle, atol=1e-10)

    def test_positive_semidefinite_and_symmetric(self):
        rng = np.random.default_rng(92)
        for trial in range(6):
            g = random_connected_graph(rng, int(rng.integers(6, 20)))
            for spec, kind in self._cases():
                basis = eigendecompose_full(build_laplacian(g, kind))
                k = kernel_matrix(basis, spec)
                assert_array_equal(k, k.T)
                vals = np.linalg.eigvalsh(k)
                assert vals.min() >= -1e-8 * max(vals.max(), 1.0)

    def test_normalized_trace_equals_sigma2_per_node(self):
        rng = np.random.default_rng(93)
        g = random_connected_graph(rng, 13)
        basis = eigendecompose_full(build_laplacian(g, "unnormalized"))
        k = kernel_matrix(basis, MATERN.with_params(sigma2=2.2))
        assert_allclose(np.trace(k) / 13, 2.2, rtol=1e-12)

    def test_blocks_match_full_matrix(self):
        rng = np.random.default_rng(94)
        g = random_connected_graph(rng, 12)
        basis = eigendecompose_full(build_laplacian(g, "unnormalized"))
        full = kernel_matrix(basis, MATERN)
        rows = np.array([3, 0, 7])
        cols = np.array([1, 1, 5, 9])
        block = kernel_matrix(basis, MATERN, rows=rows, cols=cols)
        assert_allclose(block, full[np.ix_(rows, cols)], atol=1e-12)
        square = kernel_matrix(basis, MATERN, rows=rows, cols=rows)
        assert_array_equal(square, square.T)

    def test_truncated_basis_gives_low_rank_kernel(self):
        rng = np.random.default_rng(95)
        g = random_connected_graph(rng, 15)
        basis = eigendecompose_full(build_laplacian(g, "unnormalized"))
        part = truncate_basis(basis, 5)
        k = kernel_matrix(part, MATERN)
        assert np.linalg.matrix_rank(k, tol=1e-10) <= 5
        u = part.eigenvectors
        d, _ = spectral_weights(MATERN, part.eigenvalues, total_dim=15)
        assert_allclose(k, (u * d) @ u.T, atol=1e-12)

    def test_laplacian_kind_mismatch_rejected(self):
        rng = np.random.default_rng(96)
        g = random_connected_graph(rng, 8)
        basis = eigendecompose_full(build_laplacian(g, "unnormalized"))
        with pytest.raises(ValueError, match="sym_normalized"):
            kernel_matrix(basis, DIFFUSION)

    def test_bad_selection_rejected(self):
        basis = eigendecompose_full(build_laplacian(path_graph(5), "unnormalized"))
        with pytest.raises(ValueError, match="out of range"):
            kernel_matrix(basis, MATERN, rows=np.array([0, 5]))
        with pytest.raises(ValueError, match="1-d"):
            kernel_matrix(basis, MATERN, rows=np.array([[0, 1]]))


class TestMaternPrecision:
    def test_inverse_matches_unnormalized_kernel(self):
        rng = np.random.default_rng(101)
        g = random_connected_graph(rng, 12)
        op = build_laplacian(g, "unnormalized")
        basis = eigendecompose_full(op)
        for nu in (1, 2, 3, 4):
            q = matern_precision_sparse(op, nu, kappa=1.5)
            spec = KernelSpec(
                family="matern", nu=float(nu), kappa=1.5, normalize_variance=False
            )
            k = kernel_matrix(basis, spec)
            assert_allclose(np.linalg.inv(q.toarray()), k, rtol=1e-8, atol=1e-10)

    def test_stencil_grows_one_hop_per_power(self):
        op = build_laplacian(path_graph(9), "unnormalized")
        q1 = matern_precision_sparse(op, 1, kappa=1.0).toarray()
        q2 = matern_precision_sparse(op, 2, kappa=1.0).toarray()
        idx = np.arange(9)
        dist = np.abs(idx[:, None] - idx[None, :])
        assert np.all(q1[dist > 1] == 0.0)
        assert np.all(q1[dist == 1] != 0.0)
        assert np.all(q2[dist > 2] == 0.0)
        assert np.all(q2[dist == 2] != 0.0)

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(102)
        g = random_connected_graph(rng, 10)
        op = build_laplacian(g, "unnormalized")
        q = matern_precision_sparse(op, 3, kappa=2.0).toarray()
        assert_allclose(q, q.T, atol=1e-12)
        assert np.linalg.eigvalsh(q).min() > 0

    def test_non_integer_or_large_nu_rejected(self):
        op = build_laplacian(path_graph(4), "unnormalized")
        for bad in (2.5, 0, 5, -1):
            with pytest.raises(ValueError, match="spectral"):
                matern_precision_sparse(op, bad, kappa=1.0)
        with pytest.raises(ValueError, match="kappa"):
            matern_precision_sparse(op, 2, kappa=0.0)


class TestStandaloneKernels:
    def test_random_walk_matches_matrix_power(self):
        rng = np.random.default_rng(111)
        g = random_connected_graph(rng, 10)
        op = build_laplacian(g, "sym_normalized")
        l_sym = op.matrix.toarray()
        for p in (1, 2, 5):
            k = random_walk_kernel(op, alpha=0.6, p=p)
            oracle = np.linalg.matrix_power(np.eye(10) - 0.4 * l_sym, p)
            assert_allclose(k, oracle, atol=1e-10)

    def test_random_walk_clamp_keeps_psd(self):
        rng = np.random.default_rng(112)
        g = random_connected_graph(rng, 10)
        op = build_laplacian(g, "sym_normalized")
        l_sym = op.matrix.toarray()
        lam_max = np.linalg.eigvalsh(l_sym).max()
        assert lam_max > 1.0  # ensures the base goes negative at alpha ~ 0
        with pytest.warns(UserWarning, match="clamped"):
            k = random_walk_kernel(op, alpha=0.01, p=3)
        vals = np.linalg.eigvalsh(k)
        assert vals.min() >= -1e-10 * max(vals.max(), 1.0)
        raw = np.linalg.matrix_power(np.eye(10) - 0.99 * l_sym, 3)
        assert np.linalg.eigvalsh(raw).min() < -1e-6  # oracle really is indefinite

    def test_random_walk_accepts_basis_source(self):
        rng = np.random.default_rng(113)
        g = random_connected_graph(rng, 8)
        op = build_laplacian(g, "sym_normalized")
        basis = eigendecompose_full(op)
        assert_allclose(
            random_walk_kernel(basis, alpha=0.7, p=2),
            random_walk_kernel(op, alpha=0.7, p=2),
            atol=1e-12,
        )
        with pytest.raises(TypeError, match="SpectralBasis or LaplacianOperator"):
            random_walk_kernel(op.matrix, alpha=0.7, p=2)

    def test_inverse_cosine_matches_oracle_and_psd(self):
        rng = np.random.default_rng(114)
        g = random_connected_graph(rng, 11)
        op = build_laplacian(g, "sym_normalized")
        k = inverse_cosine_kernel(op)
        oracle = dense_spectral_kernel(
            op.matrix.toarray(),
            lambda lam: np.maximum(np.cos(np.pi * lam / 4.0), 0.0),
            normalize=False,
        )
        assert_allclose(k, oracle, atol=1e-10)
        assert np.linalg.eigvalsh(k).min() >= -1e-10

    def test_standalone_kernels_reject_wrong_kind_basis(self):
        basis = eigendecompose_full(build_laplacian(path_graph(5), "unnormalized"))
        with pytest.raises(ValueError, match="sym_normalized"):
            inverse_cosine_kernel(basis)
        with pytest.raises(ValueError, match="sym_normalized"):
            random_walk_kernel(basis, alpha=0.5, p=2)


class TestSeparableProduct:
    def _rbf(self, xa, xb):
        d2 = (xa[:, None] - xb[None, :]) ** 2
        return np.exp(-0.5 * d2)

    def test_equals_elementwise_product(self):
        rng = np.random.default_rng(121)
        g = random_connected_graph(rng, 9)
        basis = eigendecompose_full(build_laplacian(g, "unnormalized"))
        kg = kernel_matrix(basis, MATERN)
        gram = separable_product_kernel(self._rbf, kg)
        xa = rng.standard_normal(6)
        ia = rng.integers(0, 9, size=6)
        xb = rng.standard_normal(4)
        ib = rng.integers(0, 9, size=4)
        out = gram((xa, ia), (xb, ib))
        oracle = self._rbf(xa, xb) * kg[np.ix_(ia, ib)]
        assert_allclose(out, oracle, atol=1e-14)

    def test_default_second_argument_and_psd(self):
        rng = np.random.default_rng(122)
        g = random_connected_graph(rng, 9)
        basis = eigendecompose_full(build_laplacian(g, "unnormalized"))
        kg = kernel_matrix(basis, MATERN)
        gram = separable_product_kernel(self._rbf, kg)
        xa = rng.standard_normal(12)
        ia = rng.integers(0, 9, size=12)
        k = gram((xa, ia))
        assert_allclose(k, k.T, atol=1e-14)
        vals = np.linalg.eigvalsh(k)
        assert vals.min() >= -1e-8 * max(vals.max(), 1.0)

    def test_errors(self):
        kg = np.eye(4)
        gram = separable_product_kernel(self._rbf, kg)
        with pytest.raises(ValueError, match="out of range"):
            gram((np.zeros(2), np.array([0, 4])))
        bad = separable_product_kernel(lambda xa, xb: np.zeros((1, 1)), kg)
        with pytest.raises(ValueError, match="shape"):
            bad((np.zeros(2), np.array([0, 1])))
        with pytest.raises(ValueError, match="square"):
            separable_product_kernel(self._rbf, np.zeros((3, 4)))
