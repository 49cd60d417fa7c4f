import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.optimize import minimize
from scipy.special import sici

from mimolink import waveform as wf
from mimolink.channel import crandn
from mimolink.grid import gray_constellation


def test_single_tone_has_constant_envelope():
    x = np.zeros(7, complex)
    x[3] = 1
    z = wf.oversampled_time_signal(x, 5)
    assert np.allclose(np.abs(z), np.abs(z[0]))
    assert np.all(wf.oversampled_time_signal(np.zeros(7), 5) == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_parseval_scaling(N, OS, seed):
    x = crandn(np.random.default_rng(seed), (3, N))
    z = wf.oversampled_time_signal(x, OS)
    assert np.allclose(np.sum(np.abs(z) ** 2, -1), np.sum(np.abs(x) ** 2, -1) / OS, rtol=1e-12)


def test_matrix_form_matches_fft(rng):
    x = crandn(rng, 9)
    assert np.allclose(wf.idft_matrix(9, 3) @ x, wf.oversampled_time_signal(x, 3))


def test_papr_examples():
    x = np.zeros((5, 7), complex)
    x[:, 2] = np.exp(1j * np.arange(5))
    z = wf.oversampled_time_signal(x, 4)
    for eps in (0.0, 0.1, 0.5):
        assert wf.papr_epsilon(z, eps) == pytest.approx(0.0, abs=1e-9)
    z = wf.oversampled_time_signal(np.ones(4), 1)
    assert wf.papr_epsilon(z, 0.0) == pytest.approx(10 * np.log10(4))


def test_papr_and_ccdf_monotone(rng):
    c = gray_constellation(4)
    z = wf.oversampled_time_signal(c.points[rng.integers(0, 16, (500, 15))], 4)
    eps = [0.0, 1e-3, 1e-2, 0.1, 0.5]
    p = [wf.papr_epsilon(z, e) for e in eps]
    assert all(a >= b for a, b in zip(p, p[1:]))
    levels = np.linspace(0, 12, 49)
    cc = wf.ccdf(z, levels)
    assert np.all(np.diff(cc) <= 0) and cc[0] <= 1
    # PAPR_eps is the level where the CCDF first drops to eps or below
    e = wf.papr_epsilon(z, 1e-2)
    assert wf.ccdf(z, [e])[0] <= 1e-2


def test_papr_rejects_bad_eps():
    with pytest.raises(ValueError):
        wf.papr_epsilon(np.ones(4), 1.0)


def test_total_energy_is_identity(rng):
    cfg = wf.WaveformConfig(11, 4, 1.0, 0.07)
    K = wf.total_energy_matrix(cfg)
    assert np.array_equal(K, np.eye(11))
    x = crandn(rng, 11)
    assert np.real(x.conj() @ K @ x) == pytest.approx(np.sum(np.abs(x) ** 2))


def _cin_half(u):
    x = 2 * np.pi * np.abs(u)
    _, ci = sici(x)
    return np.where(x > 0, (np.euler_gamma + np.log(np.where(x > 0, x, 1)) - ci) / 2, 0.0)


def _sinc2_antiderivative(u):
    si, _ = sici(2 * u)
    return np.where(u != 0, -np.sin(u) ** 2 / np.where(u != 0, u, 1), 0.0) + si


def closed_form_J(N):
    """In-band quadratic form without cyclic prefix via Si / Cin antiderivatives."""
    idx = np.arange(N) - (N - 1) // 2
    h = N / 2
    J = np.empty((N, N))
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            if a == b:
                J[i, j] = (_sinc2_antiderivative(np.pi * (h - a)) - _sinc2_antiderivative(np.pi * (-h - a))) / np.pi
            else:
                d = int(a - b)
                span = (_cin_half(h - a) - _cin_half(-h - a)) - (_cin_half(h - b) - _cin_half(-h - b))
                J[i, j] = (-1.0) ** d / (np.pi ** 2 * d) * span
    return J


@pytest.mark.parametrize("N", [1, 5, 15])
def test_inband_matrix_closed_form(N):
    J = wf.inband_energy_matrix(wf.WaveformConfig(N, 4))
    assert np.abs(J - closed_form_J(N)).max() < 1e-9


def test_inband_matrix_against_quad():
    cfg = wf.WaveformConfig(7, 4, 1.0, 1 / 14)
    J = wf.inband_energy_matrix(cfg)
    delta, idx = cfg.cp_ratio, cfg.indices
    for a, b in [(0, 0), (0, 3), (2, 5), (6, 6)]:
        ref, _ = integrate.quad(lambda f: np.sinc((f - idx[a]) / delta) * np.sinc((f - idx[b]) / delta) / delta,
                                -3.5, 3.5, limit=200, epsabs=1e-12)
        assert J[a, b] == pytest.approx(ref, abs=1e-6)


def test_inband_diagonal_against_trapezoid():
    cfg = wf.WaveformConfig(9, 4, 1.0, 0.0)
    J = wf.inband_energy_matrix(cfg)
    f = np.linspace(-4.5, 4.5, 200_001)
    for a in range(9):
        ref = integrate.trapezoid(np.sinc(f - cfg.indices[a]) ** 2, f)
        assert J[a, a] == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("t_cp", [0.0, 0.07])
def test_inband_matrix_symmetric_psd(t_cp):
    J = wf.inband_energy_matrix(wf.WaveformConfig(25, 5, 1.0, t_cp))
    assert np.array_equal(J, J.T)
    assert np.linalg.eigvalsh(J).min() >= -1e-12


def test_inband_energy_below_total(rng):
    cfg = wf.WaveformConfig(25, 5, 1.0, 0.0)
    J = wf.inband_energy_matrix(cfg)
    K = wf.total_energy_matrix(cfg)
    x = crandn(rng, (1000, 25))
    ej = np.real(np.einsum("bi,ij,bj->b", x.conj(), J, x))
    ek = np.real(np.einsum("bi,ij,bj->b", x.conj(), K, x))
    assert np.all(ej <= ek)


def test_inband_energy_grows_with_cp(rng):
    x = crandn(rng, (2000, 25))
    e = [np.mean(np.real(np.einsum("bi,ij,bj->b", x.conj(),
                                   wf.inband_energy_matrix(wf.WaveformConfig(25, 5, 1.0, t)), x)))
         for t in (0.0, 0.025, 0.05, 0.1)]
    assert all(a < b for a, b in zip(e, e[1:]))


def test_total_energy_offdiagonal_quadrature():
    for lag in (1, 2, 5):
        re, _ = integrate.quad(lambda t: np.cos(2 * np.pi * lag * t), -0.5, 0.5)
        im, _ = integrate.quad(lambda t: np.sin(2 * np.pi * lag * t), -0.5, 0.5)
        assert abs(re) < 1e-10 and abs(im) < 1e-10


def test_time_signal_matches_direct_sum(rng):
    N, OS = 5, 4
    x = crandn(rng, N)
    n = np.arange(N) - 2
    a = np.arange(N * OS)
    direct = np.array([np.sum(x * np.exp(2j * np.pi * t * n / (N * OS))) for t in a]) / (np.sqrt(N) * OS)
    assert np.allclose(wf.oversampled_time_signal(x, OS), direct, atol=1e-12, rtol=0)


def test_aclr_single_element(rng):
    cfg = wf.WaveformConfig(9, 4, 1.0, 0.0)
    J, K = wf.inband_energy_matrix(cfg), wf.total_energy_matrix(cfg)
    x = crandn(rng, (1, 9))
    ei = np.real(x[0].conj() @ J @ x[0])
    ea = np.real(x[0].conj() @ K @ x[0])
    assert wf.aclr(x, J, K)[0] == pytest.approx((ea - ei) / ei, rel=1e-12)


def test_aclr_16qam_against_psd_grid(rng):
    cfg = wf.WaveformConfig(75, 5, 1.0, 0.0)
    x = gray_constellation(4).points[rng.integers(0, 16, (300, 75))]
    _, db = wf.aclr(x, wf.inband_energy_matrix(cfg), wf.total_energy_matrix(cfg))
    f = np.linspace(-37.5, 37.5, 75 * 40 + 1)
    e_in = integrate.trapezoid(wf.spectrum(x, cfg, f), f)
    e_all = np.mean(np.sum(np.abs(x) ** 2, -1))
    assert db == pytest.approx(10 * np.log10(e_all / e_in - 1), abs=1.0)


def test_prt_placement_is_uniform():
    rng = np.random.default_rng(5)
    N, R, T = 15, 4, 100_000
    counts = np.zeros(N)
    for _ in range(T):
        counts += wf.random_prt_placement(N, R, rng)
    p = R / N
    assert np.all(np.abs(counts / T - p) <= 3 * np.sqrt(p * (1 - p) / T))


def test_aclr_examples(rng):
    x = crandn(rng, (10, 5))
    lin, db = wf.aclr(x, np.eye(5), np.eye(5))
    assert lin == pytest.approx(0.0, abs=1e-15) and db == -np.inf


def test_aclr_against_spectrum_integration(rng):
    cfg = wf.WaveformConfig(7, 4, 1.0, 0.1)
    x = gray_constellation(2).points[rng.integers(0, 4, (50, 7))]
    J = wf.inband_energy_matrix(cfg)
    lin, _ = wf.aclr(x, J, wf.total_energy_matrix(cfg))
    e_in, _ = integrate.quad(lambda f: wf.spectrum(x, cfg, [f])[0], -3.5, 3.5, limit=400, epsabs=1e-10)
    e_all = np.mean(np.sum(np.abs(x) ** 2, -1))
    assert lin == pytest.approx(e_all / e_in - 1, rel=1e-6)


def test_prt_placement():
    rng = np.random.default_rng(1)
    assert wf.random_prt_placement(9, 0, rng).sum() == 0
    assert wf.random_prt_placement(9, 9, rng).all()
    pil = np.zeros(9, bool)
    pil[::2] = True
    m = wf.random_prt_placement(9, 8, rng, pil)
    assert m.sum() == 4 and not (m & pil).any()
    with pytest.raises(ValueError):
        wf.random_prt_placement(9, 10, rng)


def test_tr_without_prts_is_zero(rng):
    d = crandn(rng, (3, 9))
    r = wf.tone_reservation(d, wf.ToneReservationPlan(np.zeros(9, bool)))
    assert np.all(r == 0)


def test_tr_cannot_improve_single_tone():
    d = np.zeros(9, complex)
    d[4] = 1
    prt = np.zeros(9, bool)
    prt[[0, 7]] = True
    r = wf.tone_reservation(d, wf.ToneReservationPlan(prt), budget=30)
    assert wf.peak_power(d + r, 5)[0] == pytest.approx(wf.peak_power(d[None], 5)[0])


def test_tr_history_and_energy(rng):
    c = gray_constellation(4)
    d = c.points[rng.integers(0, 16, (40, 31))]
    masks = np.stack([wf.random_prt_placement(31, 6, rng) for _ in range(40)])
    d[masks] = 0
    r, hist = wf.tone_reservation(d, wf.ToneReservationPlan(masks), 60, return_history=True)
    hist = np.array(hist)
    assert np.all(np.diff(hist, axis=0) <= 0)
    assert np.all(np.sum(np.abs(r) ** 2, -1) <= 6 + 1e-9)
    assert np.all(r[~masks] == 0)
    assert np.allclose(wf.peak_power(d + r, 5), hist[-1])


def test_tr_near_brute_force_optimum():
    # two reserved tones: exhaustive search over a polar grid plus local
    # refinement gives the optimal peak under ||r||^2 <= 2
    rng = np.random.default_rng(0)
    c = gray_constellation(2)
    N, OS = 16, 4
    prt = np.zeros(N, bool)
    prt[[3, 11]] = True
    A = wf.oversampled_time_signal(np.eye(N)[prt], OS).T
    a = np.linspace(0, np.sqrt(2), 9)
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    A1, T1, A2, T2 = np.meshgrid(a, th, a, th, indexing="ij")
    ok = A1 ** 2 + A2 ** 2 <= 2 + 1e-12
    cand = np.stack([A1[ok] * np.exp(1j * T1[ok]), A2[ok] * np.exp(1j * T2[ok])], -1)
    for _ in range(6):
        d = c.points[rng.integers(0, 4, N)]
        d[prt] = 0
        zd = wf.oversampled_time_signal(d, OS)
        peaks = np.max(np.abs(zd + cand @ A.T) ** 2, -1)
        best = np.argmin(peaks)

        def peak(v):
            r = v[:2] + 1j * v[2:]
            e = np.sum(np.abs(r) ** 2)
            r = r * np.sqrt(2 / e) if e > 2 else r
            return np.max(np.abs(zd + A @ r) ** 2)

        v0 = np.r_[cand[best].real, cand[best].imag]
        res = minimize(peak, v0, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        oracle = min(res.fun, peaks[best])
        r = wf.tone_reservation(d, wf.ToneReservationPlan(prt), 100, OS)
        got = wf.peak_power(d + r, OS)[0]
        assert 10 * np.log10(got / oracle) <= 0.5


def test_waveform_config_validation():
    with pytest.raises(ValueError):
        wf.WaveformConfig(N=8)
    assert wf.WaveformConfig(5, 2, 1.0, 0.25).cp_ratio == pytest.approx(0.8)
