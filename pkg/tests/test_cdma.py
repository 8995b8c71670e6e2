import itertools

import numpy as np
import pytest
from dataclasses import replace

from hyphy.cdma import (
    CdmaConfig,
    SpreadingCodes,
    UserChannel,
    bits_to_class,
    channel_from_paths,
    class_to_bits,
    code_matrix,
    corrupt_codes,
    effective_chip_pulse,
    extract_multipath,
    extract_single_path,
    frame_operator,
    load_scene,
    ls_channel_estimate,
    map_detect_exhaustive,
    mmse_detect_all,
    noise_variance,
    random_bits,
    random_channels,
    random_codes,
    rc_pulse,
    save_scene,
    srrc_pulse,
    synthesize_scene,
)
from hyphy.errors import DimensionError, SingularModelError

CFG = CdmaConfig(k_users=3, n_gain=16, n_packets=60)
TC = CFG.t_c
FINE = TC / (10 * CFG.m_oversample)


def _scene(cfg, seed, noise_var=None):
    rng = np.random.default_rng(seed)
    codes = random_codes(cfg, rng)
    return synthesize_scene(cfg, codes, random_channels(cfg, rng), random_bits(cfg, rng), rng, noise_var)


# ---------------------------------------------------------------------------
# pulses


def test_pulse_supports():
    t = np.array([-1e-9, 8 * TC, 9 * TC])
    np.testing.assert_array_equal(rc_pulse(t, TC), 0.0)
    assert srrc_pulse(4.01 * TC, TC) == 0.0 and srrc_pulse(-0.01 * TC, TC) == 0.0
    grid = np.linspace(0, 8 * TC, 801)[:-1]
    assert np.argmax(rc_pulse(grid, TC)) == 400
    assert rc_pulse(4 * TC, TC) == pytest.approx(1.0)


def test_srrc_self_convolution_matches_rc():
    dt = TC / 1000
    t = np.arange(0, 4 * TC + dt / 2, dt)
    s = srrc_pulse(t, TC)
    # the pulse is symmetric about 2 T_c, so convolving with its time reverse is a plain self-convolution
    conv = np.convolve(s, s[::-1]) * dt / TC
    tt = np.arange(len(conv)) * dt
    ref = rc_pulse(tt, TC)
    assert np.linalg.norm(conv - ref) / np.linalg.norm(ref) < 0.02


def test_effective_pulse_superposition(rng):
    delays = np.array([0.3, 3.1, 6.4]) * TC
    gains = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    uc = UserChannel(2.0, 1.7 * TC, gains, delays)
    parts = sum(effective_chip_pulse(UserChannel(2.0, 1.7 * TC, [a], [d]), CFG) for a, d in zip(gains, delays))
    np.testing.assert_allclose(effective_chip_pulse(uc, CFG), parts, atol=1e-13)
    single = effective_chip_pulse(channel_from_paths([0.0], [1.0]), CFG)
    np.testing.assert_allclose(single, rc_pulse(CFG.g_times(), TC, CFG.rolloff))
    double = effective_chip_pulse(UserChannel(4.0, 1.7 * TC, gains, delays), CFG)
    np.testing.assert_array_equal(double, 2 * effective_chip_pulse(uc, CFG))
    with pytest.raises(ValueError):
        effective_chip_pulse(UserChannel(1.0, CFG.t_b, [1.0], [0.0]), CFG)


# ---------------------------------------------------------------------------
# code matrix


def _direct_waveform(uc, chips, p, lag, cfg):
    """Samples over frame p of the bit-(p - lag) waveform, evaluated from the continuous pulse."""
    M, N = cfg.m_oversample, cfg.n_gain
    t = p * cfg.t_b + np.arange(1, M * N + 1) * cfg.t_c / M
    start = (p - lag) * cfg.t_b
    out = np.zeros(len(t), dtype=complex)
    for n in range(N):
        rel = t - start - n * cfg.t_c
        for a, d in zip(uc.path_gains, uc.total_delays()):
            out += chips[n] * uc.amplitude * a * rc_pulse(rel - d, cfg.t_c, cfg.rolloff)
    return out


@pytest.mark.parametrize("seed", range(10))
def test_code_matrix_defining_identity(seed):
    rng = np.random.default_rng(seed)
    cfg = replace(CFG, k_users=1)
    codes = random_codes(cfg, rng, short=False)
    uc = random_channels(cfg, rng)[0]
    g = effective_chip_pulse(uc, cfg)
    p = int(rng.integers(2, cfg.n_packets))
    for lag in range(3):
        direct = _direct_waveform(uc, codes.chip_row(0, p - lag), p, lag, cfg)
        assert np.max(np.abs(code_matrix(codes, 0, p, lag, cfg) @ g - direct)) < 1e-9


def test_code_matrix_structure(rng):
    codes = random_codes(CFG, rng)
    for lag in range(3):
        c = code_matrix(codes, 1, 5, lag, CFG)
        assert c.shape == (CFG.frame_len, CFG.g_len)
        assert np.all(np.count_nonzero(c, axis=1) <= CFG.n_gain)
    zero = SpreadingCodes(np.zeros((1, 2, CFG.n_gain)))
    assert not np.any(code_matrix(zero, 0, 1, 0, CFG))
    with pytest.raises(ValueError):
        code_matrix(codes, 0, 1, 3, CFG)


# ---------------------------------------------------------------------------
# synthesis and LS


def test_noiseless_frames_are_reconstructible():
    scene = _scene(replace(CFG, k_users=1), 3, noise_var=0.0)
    for p in (0, 1, 7):
        y = frame_operator(scene.codes, scene.true_bits, p, scene.cfg) @ scene.g_true.ravel()
        np.testing.assert_allclose(scene.frames[p], y, atol=1e-12)


def test_noise_variance_matches_snr():
    cfg = replace(CFG, n_packets=1000)
    clean = _scene(cfg, 5, noise_var=0.0)
    noisy = _scene(cfg, 5)
    assert noisy.noise_var == pytest.approx(noise_variance(noisy.g_true, cfg))
    eb = np.mean(cfg.n_gain * np.sum(np.abs(noisy.g_true) ** 2, axis=1) / cfg.m_oversample)
    assert noisy.noise_var == pytest.approx(eb / 10 ** 0.8)
    emp = np.mean(np.abs(noisy.frames - clean.frames) ** 2)
    assert abs(emp / noisy.noise_var - 1) < 0.05


def test_ls_exact_in_noiseless_case():
    cfg = replace(CFG, n_packets=40)
    scene = _scene(cfg, 7, noise_var=0.0)
    g = ls_channel_estimate(scene.frames, scene.codes, scene.true_bits, cfg, n_t=40)
    assert np.max(np.abs(g - scene.g_true)) < 1e-8
    g2 = ls_channel_estimate(3.0 * scene.frames, scene.codes, scene.true_bits, cfg, n_t=40)
    np.testing.assert_allclose(g2, 3.0 * g, atol=1e-8)


def test_ls_normal_equations():
    scene = _scene(CFG, 8)
    g = ls_channel_estimate(scene.frames, scene.codes, scene.true_bits, CFG, n_t=40).ravel()
    lhs = np.zeros(g.size, dtype=complex)
    rhs = np.zeros(g.size, dtype=complex)
    for p in range(40):
        a = frame_operator(scene.codes, scene.true_bits, p, CFG)
        lhs += a.T @ (scene.frames[p] - a @ g)
        rhs += a.T @ scene.frames[p]
    assert np.linalg.norm(lhs) < 1e-8 * np.linalg.norm(rhs)


def test_ls_rank_deficiency_named():
    scene = _scene(CFG, 9, noise_var=0.0)
    with pytest.raises(SingularModelError, match="rank"):
        ls_channel_estimate(scene.frames, scene.codes, scene.true_bits, CFG, n_t=1)


# ---------------------------------------------------------------------------
# path extraction


@pytest.mark.parametrize("n_fine", [37, 52, 101])
def test_single_path_on_fine_grid(n_fine):
    tau = n_fine * FINE
    g = effective_chip_pulse(channel_from_paths([tau], [2.0 * np.exp(0.3j)]), CFG)
    t_hat, a_hat, phi_hat = extract_single_path(g, CFG)
    assert abs(t_hat - tau) <= FINE + 1e-15
    assert abs(a_hat - 2.0) / 2.0 < 0.02
    assert abs(phi_hat - 0.3) < 0.05


def test_single_path_equivariance():
    g = effective_chip_pulse(channel_from_paths([4.3 * TC], [1.5]), CFG)
    t0, a0, p0 = extract_single_path(g, CFG)
    t1, a1, p1 = extract_single_path(g * np.exp(0.7j), CFG)
    assert t1 == t0 and a1 == pytest.approx(a0) and p1 == pytest.approx(p0 + 0.7)
    t2, a2, _ = extract_single_path(3.0 * g, CFG)
    assert t2 == t0 and a2 == pytest.approx(3 * a0)
    with pytest.raises(ValueError):
        extract_single_path(np.zeros(CFG.g_len), CFG)
    with pytest.raises(DimensionError):
        extract_single_path(g[:-1], CFG)


@pytest.mark.parametrize("seed", range(5))
def test_three_path_extraction(seed):
    rng = np.random.default_rng(seed)
    first = rng.integers(5, 30) * FINE
    delays = first + np.cumsum(np.r_[0, rng.integers(25, 40, 2)]) * FINE
    mags = 10 ** (-np.array([0.0, 5.0, 10.0]) / 20)
    gains = mags * np.exp(1j * rng.uniform(-np.pi, np.pi, 3))
    g = effective_chip_pulse(channel_from_paths(delays, gains), CFG)
    est = extract_multipath(g, 3, CFG)
    np.testing.assert_array_less(np.abs(est.path_delays - delays), FINE + 1e-15)
    np.testing.assert_array_less(np.abs(np.abs(est.path_gains) - mags) / mags, 0.10)
    resid = g - effective_chip_pulse(est, CFG)
    assert np.sum(np.abs(resid) ** 2) < 0.05 * np.sum(np.abs(g) ** 2)


def test_multipath_with_one_path_is_single_path():
    g = effective_chip_pulse(channel_from_paths([3.05 * TC], [0.8j]), CFG)
    tau, a, phi = extract_single_path(g, CFG)
    est = extract_multipath(g, 1, CFG)
    assert est.path_delays[0] == tau
    assert est.path_gains[0] == pytest.approx(a * np.exp(1j * phi))


# ---------------------------------------------------------------------------
# detection


def test_mmse_single_user_noiseless_is_error_free():
    cfg = CdmaConfig(k_users=1, n_gain=16, n_packets=1000)
    scene = _scene(cfg, 11, noise_var=0.0)
    bits = mmse_detect_all(scene, scene.g_true, 1e-6, scene.codes)
    assert np.all(bits == scene.true_bits)


def _mmse_ber(cfg, seed, rho=0.0):
    scene = _scene(cfg, seed)
    codes = corrupt_codes(scene.codes, rho, np.random.default_rng(seed + 1000))
    bits = mmse_detect_all(scene, scene.g_true, scene.noise_var, codes)
    return np.mean(bits[:, 2:] != scene.true_bits[:, 2:])


def test_mmse_ber_decreases_with_snr():
    bers = []
    for snr in (0.0, 4.0, 8.0, 12.0):
        cfg = CdmaConfig(k_users=3, n_packets=600, snr_db=snr)
        bers.append(np.mean([_mmse_ber(cfg, s) for s in range(3)]))
    assert all(b1 <= b0 for b0, b1 in zip(bers, bers[1:]))


def test_mmse_code_mismatch_hurts():
    cfg = CdmaConfig(k_users=3, n_packets=600)
    clean = np.mean([_mmse_ber(cfg, s) for s in range(3)])
    mism = np.mean([_mmse_ber(cfg, s, rho=0.25) for s in range(3)])
    assert mism > clean


def _brute_force(y, mats, g, past):
    best, best_d = None, np.inf
    for combo in itertools.product((-1, 1), repeat=len(mats)):
        pred = sum(combo[k] * mats[k][0] @ g[k] + past[k, 0] * mats[k][1] @ g[k] + past[k, 1] * mats[k][2] @ g[k]
                   for k in range(len(mats)))
        d = np.linalg.norm(y - pred)
        if d < best_d:
            best, best_d = np.array(combo), d
    return best


def test_map_matches_brute_force():
    scene = _scene(CFG, 13)
    # heavy noise so that errors occur and the comparison is not trivial
    rng = np.random.default_rng(0)
    for p in range(2, 22):
        y = scene.frames[p] + 3 * (rng.standard_normal(CFG.frame_len) + 1j * rng.standard_normal(CFG.frame_len))
        mats = scene.code_matrices(p)
        past = scene.true_bits[:, [p - 1, p - 2]]
        np.testing.assert_array_equal(map_detect_exhaustive(y, mats, scene.g_true, past),
                                      _brute_force(y, mats, scene.g_true, past))


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_map_noiseless_recovery(k):
    cfg = replace(CFG, k_users=k, n_packets=10)
    scene = _scene(cfg, 20 + k, noise_var=0.0)
    for p in range(2, 10):
        past = scene.true_bits[:, [p - 1, p - 2]]
        got = map_detect_exhaustive(scene.frames[p], scene.code_matrices(p), scene.g_true, past)
        np.testing.assert_array_equal(got, scene.true_bits[:, p])


def test_map_user_limit():
    with pytest.raises(ValueError):
        map_detect_exhaustive(np.zeros(4), [[None] * 3] * 13, np.zeros((13, 4)))


# ---------------------------------------------------------------------------
# codes and bookkeeping


def test_corrupt_codes_flip_fraction(rng):
    codes = SpreadingCodes(rng.choice([-1.0, 1.0], size=(10, 100, 100)))
    bad = corrupt_codes(codes, 0.2, rng)
    assert abs(np.mean(bad.chips != codes.chips) - 0.2) <= 0.01
    np.testing.assert_array_equal(corrupt_codes(codes, 0.0, rng).chips, codes.chips)
    np.testing.assert_array_equal(corrupt_codes(codes, 1.0, rng).chips, -codes.chips)
    with pytest.raises(ValueError):
        corrupt_codes(codes, 1.2, rng)


def test_short_codes_stay_short(rng):
    bad = corrupt_codes(random_codes(CFG, rng), 0.3, rng)
    assert np.all(bad.chips == bad.chips[:, :1, :])


def test_bits_class_roundtrip():
    cls = np.arange(16)
    bits = class_to_bits(cls, 4)
    assert set(np.unique(bits)) == {-1, 1}
    np.testing.assert_array_equal(bits_to_class(bits), cls)


def test_config_validation():
    with pytest.raises(ValueError):
        CdmaConfig(m_oversample=4)
    with pytest.raises(ValueError):
        CdmaConfig(rho_mismatch=2.0)
    with pytest.raises(ValueError):
        CdmaConfig(k_users=0)


def test_scene_csv_roundtrip(tmp_path):
    cfg = replace(CFG, n_packets=5)
    scene = _scene(cfg, 4)
    save_scene(scene, tmp_path)
    back = load_scene(tmp_path, cfg)
    np.testing.assert_array_equal(back.frames, scene.frames)
    np.testing.assert_array_equal(back.true_bits, scene.true_bits)
    np.testing.assert_array_equal(back.codes.chips, scene.codes.chips)
    np.testing.assert_array_equal(back.g_true, scene.g_true)
    assert back.noise_var == scene.noise_var


def test_extracted_delay_stays_below_bit_duration():
    cfg = CdmaConfig(n_gain=8)
    # energy at the far end of the pulse grid would pull an unconstrained search past T_b
    g = np.zeros(cfg.g_len, dtype=complex)
    g[-8:] = 1.0
    tau, _, _ = extract_single_path(g, cfg)
    assert 0 <= tau < cfg.t_b
