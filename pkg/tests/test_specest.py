import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbsense import specest
from wbsense.errors import ConfigurationError, ShapeError


def direct_dft(x):
    """O(M^2) summation oracle."""
    m = len(x)
    k = np.arange(m)
    return np.array([np.sum(x * np.exp(-2j * np.pi * ki * k / m)) for ki in k])


# --------------------------------------------------------------------- DFT


def test_dft_zero_input():
    assert np.array_equal(specest.dft(np.zeros(16, dtype=complex)), np.zeros(16))


def test_dft_single_tone():
    m = 8
    y = np.exp(2j * np.pi * 2 * np.arange(m) / m)
    out = specest.dft(y)
    expected = np.zeros(m, dtype=complex)
    expected[2] = m
    assert np.allclose(out, expected, atol=1e-9)


@pytest.mark.parametrize("length", [3, 5, 17, 64, 100, 128, 255, 256])
def test_dft_matches_direct_summation(length, rng):
    x = rng.standard_normal(length) + 1j * rng.standard_normal(length)
    got = specest.dft(x)
    want = direct_dft(x)
    assert np.max(np.abs(got - want)) / np.max(np.abs(want)) < 1e-6


# -------------------------------------------------------------- periodogram


def test_periodogram_tone_centered_bin():
    m = 8
    y = np.exp(2j * np.pi * 2 * np.arange(m) / m)
    psd = specest.periodogram(y).psd
    assert psd[6] == pytest.approx(64.0, abs=1e-9)
    rest = np.delete(psd, 6)
    assert np.allclose(rest, 0.0, atol=1e-9)


def test_periodogram_zero_input():
    assert np.array_equal(specest.periodogram(np.zeros(8)).psd, np.zeros(8))


def test_periodogram_rejects_odd_length():
    with pytest.raises(ShapeError):
        specest.periodogram(np.zeros(7))


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_periodogram_parseval(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 65)) * 2
    y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    psd = specest.periodogram(y).psd
    assert np.all(psd >= 0)
    lhs = psd.sum()
    rhs = m * np.sum(np.abs(y) ** 2)
    assert abs(lhs - rhs) / rhs < 1e-6


# -------------------------------------------------------------------- DPSS


@pytest.fixture(scope="module")
def bank512():
    return specest.dpss_tapers(512, 4.0 / 512, 7)


def test_dpss_orthonormal(bank512):
    gram = bank512.tapers @ bank512.tapers.T
    assert np.max(np.abs(gram - np.eye(7))) < 1e-8


def test_dpss_weights_uniform(bank512):
    assert np.allclose(bank512.weights, 1.0 / 7)
    assert bank512.weights.sum() == pytest.approx(1.0)
    assert np.allclose(bank512.energies, 1.0)


def test_dpss_concentrations_against_dense_oracle(bank512):
    # Oracle: dense symmetric eigendecomposition of the sinc kernel matrix,
    # whose top eigenvalues are the in-band concentrations.
    m, w = 512, 4.0 / 512
    idx = np.arange(m)
    diff = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sin(2 * np.pi * w * diff) / (np.pi * diff)
    a[diff == 0] = 2 * w
    eigvals = np.linalg.eigvalsh(a)[::-1][:7]
    assert np.allclose(bank512.concentrations, eigvals, atol=1e-9)
    assert bank512.concentrations[0] > 0.99999
    assert np.all(np.diff(bank512.concentrations) < 0)


def test_dpss_taper_count_bound():
    with pytest.raises(ConfigurationError):
        specest.dpss_tapers(512, 4.0 / 512, 9)  # floor(2MW) = 8
    specest.dpss_tapers(512, 4.0 / 512, 8)


def test_dpss_cache_roundtrip(tmp_path):
    a = specest.dpss_tapers(128, 4.0 / 128, 5, cache_dir=str(tmp_path))
    b = specest.dpss_tapers(128, 4.0 / 128, 5, cache_dir=str(tmp_path))
    assert np.array_equal(a.tapers, b.tapers)
    assert np.array_equal(a.concentrations, b.concentrations)


# --------------------------------------------------------------------- MTM


def test_mtm_single_taper_equals_tapered_periodogram(rng):
    bank = specest.dpss_tapers(256, 4.0 / 256, 1)
    y = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    mtm = specest.mtm_psd(y, bank).psd
    pg = specest.periodogram(bank.tapers[0] * y).psd
    assert np.array_equal(mtm, pg)


def test_mtm_zero_signal(bank512):
    out = specest.mtm_psd(np.zeros(512, dtype=complex), bank512)
    assert np.array_equal(out.psd, np.zeros(512))


def test_mtm_length_mismatch(bank512):
    with pytest.raises(ShapeError):
        specest.mtm_psd(np.zeros(256, dtype=complex), bank512)


def test_mtm_tone_localization(bank512):
    m, w = 512, 4.0 / 512
    halfwidth = int(np.ceil(2 * w * m))
    rng = np.random.default_rng(1)
    for k in rng.integers(0, m, size=16):
        y = np.exp(2j * np.pi * k * np.arange(m) / m)
        psd = specest.mtm_psd(y, bank512).psd
        center = (int(k) + m // 2) % m
        lo = max(0, center - halfwidth)
        hi = min(m, center + halfwidth + 1)
        assert psd[lo:hi].sum() / psd.sum() >= 0.99


def test_mtm_variance_below_periodogram():
    m = 1024
    bank = specest.dpss_tapers(m, 4.0 / m, 7)
    rng = np.random.default_rng(2024)
    mtm_est = np.empty((100, m))
    pg_est = np.empty((100, m))
    for i in range(100):
        y = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
        mtm_est[i] = specest.mtm_psd(y, bank).psd
        pg_est[i] = specest.periodogram(y).psd
    assert np.median(mtm_est.var(axis=0)) < np.median(pg_est.var(axis=0))


# --------------------------------------------------------------------- dual


def test_dual_representation_composition(bank512, rng):
    y = rng.standard_normal(512) + 1j * rng.standard_normal(512)
    dual = specest.dual_representation(y, bank512)
    assert np.array_equal(dual.pg.psd, specest.periodogram(y).psd)
    assert np.array_equal(dual.mtm.psd, specest.mtm_psd(y, bank512).psd)
    assert dual.pg.centered and dual.mtm.centered
    assert dual.pg.psd.size == dual.mtm.psd.size == 512
