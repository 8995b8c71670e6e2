import numpy as np
import pytest
from dataclasses import replace

from hyphy.channel_cfr import (
    CfrDims,
    CfrSample,
    DiffuseNoiseParams,
    SimilarityParam,
    SpecularParams,
    ToeplitzCov,
    diffuse_noise_cov,
    kron_expand,
    sample_diffuse,
    sample_taps,
    evolve_taps,
    specular_mean,
    taps_to_cfr,
)
from hyphy.errors import DimensionError, SingularModelError
from hyphy.estimator_cfr import (
    CovInverse,
    GaussNewtonOptions,
    alternating_estimate,
    estimate_num_taps,
    estimate_similarity,
    exp_basis,
    exp_basis_deriv,
    gauss_newton_specular,
    gauss_newton_vn,
    similarity_log_likelihood,
    similarity_nu,
    specular_fim,
    specular_jacobian,
    specular_log_likelihood,
    specular_score,
    vn_cov_derivs,
    vn_gradient,
    zero_mean_log_likelihood,
)

from helpers import central_diff, rel_err

DIMS = CfrDims(2, 2, 8)
ALICE = DiffuseNoiseParams(alpha2=200.0, beta=0.02, l_taps=20, sigma2=20.0)


def _random_sp(rng, k=2):
    return SpecularParams(
        rng.uniform(-np.pi, np.pi, k), rng.uniform(-np.pi, np.pi, k), rng.uniform(-np.pi, np.pi, k),
        rng.uniform(3, 10, k) * np.exp(1j * rng.uniform(-np.pi, np.pi, k)),
    )


def _random_dn(rng, n_f):
    return DiffuseNoiseParams(
        alpha2=rng.uniform(50, 300), beta=rng.uniform(0.01, 0.2), l_taps=int(rng.integers(2, n_f)),
        sigma2=rng.uniform(5, 30),
    )


def test_exp_basis_derivative():
    v = np.array([0.3, -1.2])
    fd = central_diff(lambda x: exp_basis(x, 5), v)
    an = exp_basis_deriv(v, 5)
    for k in range(2):
        np.testing.assert_allclose(an[:, k], fd[:, k, k], atol=1e-8)
    with pytest.raises(DimensionError):
        exp_basis(v, 0)


@pytest.mark.parametrize("seed", range(20))
def test_specular_jacobian_fd(seed):
    rng = np.random.default_rng(seed)
    sp = _random_sp(rng)
    th = sp.to_vector()
    fd = central_diff(lambda x: specular_mean(SpecularParams.from_vector(x), DIMS), th)
    assert rel_err(specular_jacobian(sp, DIMS), fd) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_specular_score_fd(seed):
    rng = np.random.default_rng(100 + seed)
    sp = _random_sp(rng)
    cinv = CovInverse(diffuse_noise_cov(_random_dn(rng, DIMS.n_f), DIMS.n_f), DIMS)
    h = specular_mean(_random_sp(rng), DIMS) + sample_diffuse(ALICE, DIMS, 1, rng)[0]
    fd = central_diff(lambda x: specular_log_likelihood(h, SpecularParams.from_vector(x), cinv, DIMS),
                      sp.to_vector())
    assert rel_err(specular_score(h, sp, cinv, DIMS), fd) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_specular_fim_real_representation(seed):
    rng = np.random.default_rng(200 + seed)
    sp = _random_sp(rng)
    cov = kron_expand(diffuse_noise_cov(_random_dn(rng, DIMS.n_f), DIMS.n_f), DIMS)
    # Fisher information of a real Gaussian mean in the stacked [Re; Im] form
    jac = central_diff(lambda x: specular_mean(SpecularParams.from_vector(x), DIMS), sp.to_vector())
    jr = np.vstack([jac.real, jac.imag])
    cr = 0.5 * np.block([[cov.real, -cov.imag], [cov.imag, cov.real]])
    ref = jr.T @ np.linalg.solve(cr, jr)
    assert rel_err(specular_fim(sp, cov, DIMS), ref) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_vn_cov_derivs_fd(seed):
    rng = np.random.default_rng(300 + seed)
    dn = _random_dn(rng, 16)

    def nu(p):
        return diffuse_noise_cov(DiffuseNoiseParams(p[1], p[2], dn.l_taps, p[0]), 16).nu

    fd = central_diff(nu, np.array([dn.sigma2, dn.alpha2, dn.beta]), h=1e-7)
    an = np.stack([d.nu for d in vn_cov_derivs(dn, 16)], axis=1)
    assert rel_err(an, fd) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_vn_gradient_fd(seed):
    rng = np.random.default_rng(400 + seed)
    dn = _random_dn(rng, 10)
    x = sample_diffuse(_random_dn(rng, 10), CfrDims(1, 1, 10), 300, rng).T
    rhat = x @ x.conj().T / x.shape[1]

    def ll(p):
        return zero_mean_log_likelihood(rhat, 300, diffuse_noise_cov(
            DiffuseNoiseParams(p[1], p[2], dn.l_taps, p[0]), 10).nu)

    fd = central_diff(ll, np.array([dn.sigma2, dn.alpha2, dn.beta]), h=1e-6)
    assert rel_err(vn_gradient(rhat, 300, dn), fd) < 1e-4


@pytest.mark.parametrize("hyp", ["H0", "H1"])
def test_similarity_nu_linear_in_a(hyp):
    e = DiffuseNoiseParams(250.0, 0.08, 16, 26.0)
    fd = central_diff(lambda a: similarity_nu(a[0], ALICE, 12, hyp, e), np.array([0.4]))[:, 0]
    from hyphy.channel_cfr import kappa

    np.testing.assert_allclose(fd, -2 * kappa(ALICE, np.arange(12) / 12), rtol=1e-6)
    with pytest.raises(ValueError):
        similarity_nu(0.4, ALICE, 12, "H2")


def test_cov_inverse_block_matches_full(rng):
    blk = diffuse_noise_cov(ALICE, DIMS.n_f)
    full = kron_expand(blk, DIMS)
    x = rng.standard_normal((DIMS.m, 3)) + 1j * rng.standard_normal((DIMS.m, 3))
    ci = CovInverse(blk, DIMS)
    np.testing.assert_allclose(ci(x), np.linalg.solve(full, x), rtol=1e-9, atol=1e-12)
    assert abs(ci.logdet - np.linalg.slogdet(full)[1]) < 1e-8
    with pytest.raises(DimensionError):
        ci(x[:5])


def test_options_validation():
    with pytest.raises(ValueError):
        GaussNewtonOptions(max_iters=0)
    with pytest.raises(ValueError):
        GaussNewtonOptions(backtrack_factor=1.0)


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_single_path_recovery(seed):
    rng = np.random.default_rng(500 + seed)
    sp = _random_sp(rng, k=1)
    h = specular_mean(sp, DIMS)
    start = SpecularParams.from_vector(sp.to_vector() + np.r_[rng.uniform(-0.05, 0.05, 3), 0.3, -0.3])
    cov = ToeplitzCov(np.r_[1.0, np.zeros(DIMS.n_f - 1)])
    est, info = gauss_newton_specular(h, start, cov, GaussNewtonOptions(rel_tol=1e-12, max_iters=100),
                                      DIMS, return_info=True)
    assert rel_err(est.to_vector(), sp.to_vector()) < 1e-4
    assert np.all(np.diff(info.ll_trace) > 0)


def test_num_taps_rule(rng):
    # rank-3 signal: energy fractions 0.6, 0.3, 0.1
    basis = np.linalg.qr(rng.standard_normal((10, 3)) + 1j * rng.standard_normal((10, 3)))[0]
    coef = rng.standard_normal((3, 5000)) * np.sqrt([[0.6], [0.3], [0.1]])
    x = basis @ coef
    assert estimate_num_taps(x, 0.85) == 2
    assert estimate_num_taps(x, 0.95) == 3
    with pytest.raises(ValueError):
        estimate_num_taps(x, 1.0)
    with pytest.raises(ValueError):
        estimate_num_taps(np.zeros((10, 4)))


def test_vn_fit_increases_likelihood(rng):
    x = sample_diffuse(ALICE, CfrDims(2, 2, 20), 500, rng).T
    init = DiffuseNoiseParams(100.0, 0.05, 20, 10.0)
    est, info = gauss_newton_vn(x, init, n_f=20, return_info=True)
    assert np.all(np.diff(info.ll_trace) > 0)
    assert abs(est.alpha2 - 200) / 200 < 0.25
    assert abs(est.beta - 0.02) / 0.02 < 0.25


def test_similarity_recovery(rng):
    dims = CfrDims(2, 2, 20)
    taps = sample_taps(ALICE, (500, dims.n_blocks), rng)
    nxt = evolve_taps(taps, ALICE, 0.85, rng)
    noise = (rng.standard_normal((2, 500, dims.m)) + 1j * rng.standard_normal((2, 500, dims.m))) * np.sqrt(10)
    d = (taps_to_cfr(nxt - taps, 20).reshape(500, dims.m) + noise[0] - noise[1]).T
    est, info = estimate_similarity(d, ALICE, 0.5, n_f=20, return_info=True)
    assert abs(est.a - 0.85) < 0.05
    assert np.all(np.diff(info.ll_trace) > 0)
    ll = similarity_log_likelihood(d, est.a, ALICE, n_f=20)
    assert ll >= similarity_log_likelihood(d, 0.6, ALICE, n_f=20)


def test_similarity_rejects_degenerate():
    with pytest.raises(SingularModelError):
        estimate_similarity(np.zeros((20, 10)), ALICE, 0.5)


def test_alternating_estimate_recovers_pooled_fit(rng):
    dims = CfrDims(2, 2, 12)
    dn = DiffuseNoiseParams(150.0, 0.05, 8, 10.0)
    sp = SpecularParams([0.5, -1.5], [1.0, 2.0], [0.3, -2.2], [60.0, 40j])
    mean = specular_mean(sp, dims)
    q = sample_diffuse(dn, dims, 300, rng)
    snaps = [CfrSample(mean + row, 0) for row in q]
    rep = alternating_estimate(snaps, dims, n_rounds=2, k_paths=2, per_snapshot=False, tap_search=2,
                               rng=np.random.default_rng(0))
    assert rep.rounds_run >= 1
    assert np.all(np.diff(rep.log_likelihood_trace) >= 0)
    got = rep.slot_specular[0]
    assert rel_err(specular_mean(got, dims), mean) < 0.05
    assert abs(rep.theta_vn_hat.alpha2 - 150) / 150 < 0.3


def test_alternating_estimate_argument_checks():
    dims = CfrDims(1, 1, 4)
    with pytest.raises(ValueError):
        alternating_estimate([], dims)
    with pytest.raises(ValueError):
        alternating_estimate([CfrSample(np.ones(4, complex))], dims, diff_samples=np.ones((4, 2)),
                             hypothesis="H1")
    rep = alternating_estimate([CfrSample(np.ones(4, complex))], dims, n_rounds=0)
    assert rep.rounds_run == 0 and not rep.converged


def test_sigma_derivative_is_unit_vector():
    d_sigma = vn_cov_derivs(ALICE, 20)[0].nu
    np.testing.assert_array_equal(d_sigma, np.r_[1.0, np.zeros(19)])


def test_beta_derivative_at_alice():
    def nu(b):
        return diffuse_noise_cov(replace(ALICE, beta=float(b[0])), 20).nu

    fd = central_diff(nu, np.array([ALICE.beta]), h=1e-8)[:, 0]
    assert rel_err(vn_cov_derivs(ALICE, 20)[2].nu, fd) < 1e-6


def test_exp_basis_derivative_tight(rng):
    v = rng.uniform(-3, 3, 4)
    fd = central_diff(lambda x: exp_basis(x, 6), v, h=1e-6)
    fd_diag = np.stack([fd[:, k, k] for k in range(4)], axis=1)
    assert rel_err(exp_basis_deriv(v, 6), fd_diag) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_specular_jacobian_columns_tight(seed):
    rng = np.random.default_rng(700 + seed)
    sp = _random_sp(rng)
    fd = central_diff(lambda x: specular_mean(SpecularParams.from_vector(x), DIMS), sp.to_vector(), h=1e-6)
    jac = specular_jacobian(sp, DIMS)
    for c in range(jac.shape[1]):
        assert rel_err(jac[:, c], fd[:, c]) < 1e-5


def test_h0_similarity_derivative():
    from hyphy.channel_cfr import diff_cov_h0

    fd = central_diff(lambda a: diff_cov_h0(ALICE, SimilarityParam(float(a[0])), 20).nu, np.array([0.6]))[:, 0]
    dnu = similarity_nu(0.7, ALICE, 20) - similarity_nu(0.6, ALICE, 20)
    assert rel_err(dnu / 0.1, fd) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_white_data_tap_count(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((10, 4000)) + 1j * rng.standard_normal((10, 4000))
    assert abs(estimate_num_taps(w, 0.95) - 10) <= 1


def test_tap_count_alice_profile(rng):
    x = sample_diffuse(replace(ALICE, sigma2=0.0), CfrDims(1, 1, 20), 4000, rng).T
    assert abs(estimate_num_taps(x, 0.95) - 20) <= 3


def _one_round(noise, rng):
    dims = CfrDims(2, 2, 10)
    sp = SpecularParams([0.4], [-1.1], [0.9], [20 * np.exp(0.3j)])
    h = specular_mean(sp, dims)
    snaps = [CfrSample(h + noise * (rng.standard_normal(dims.m) + 1j * rng.standard_normal(dims.m)), 0)
             for _ in range(40)]
    dn0 = DiffuseNoiseParams(1e-3, 0.1, 4, 1e-3)
    start = SpecularParams.from_vector(sp.to_vector() * 1.05)
    rep = alternating_estimate(snaps, dims, GaussNewtonOptions(rel_tol=1e-12, max_iters=100), n_rounds=1,
                               sp_init=start, dn_init=dn0, per_snapshot=False)
    return rep, sp


def test_one_round_near_noise_free_specular(rng):
    rep, sp = _one_round(1e-4, rng)
    assert rel_err(rep.slot_specular[0].to_vector(), sp.to_vector()) < 1e-4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_noise_free_residual_is_reported_as_diffuse_failure(rng):
    with pytest.raises(SingularModelError, match="diffuse"):
        _one_round(0.0, rng)
