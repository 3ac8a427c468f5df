"""Discrete wavelet transform: reconstruction, additivity, band placement."""

import numpy as np
import pytest

from eegentropy.wavelet import (
    VARIANTS,
    WaveletCoeffs,
    WaveletError,
    band_hz,
    dwt_db4,
    dwt_single,
    inverse_dwt,
    make_variants,
    reconstruct_variant,
)

import oracles

FS = 128.0


def noise(seed, n=1000):
    return np.random.default_rng(seed).normal(0.0, 10.0, n)


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.mark.parametrize("n", [150, 503, 512, 800, 1000])
def test_roundtrip_is_numerically_exact(n):
    x = noise(1, n)
    assert rel_l2(inverse_dwt(dwt_db4(x, levels=4)), x) < 1e-12


@pytest.mark.parametrize("n", [150, 512, 800, 1000])
def test_variant_reconstructions_sum_to_input(n):
    x = noise(2, n)
    v = make_variants(x)
    total = v["cA4"] + v["cD4"] + v["cD3"] + v["cD2"] + v["cD1"]
    assert rel_l2(total, x) < 1e-12


def test_single_level_matches_direct_convolution():
    for n in (150, 501, 1000):
        x = noise(3, n)
        ca_ref, cd_ref = oracles.dwt_single_level(x)
        ca, cd = dwt_single(x)
        np.testing.assert_array_equal(ca, ca_ref)
        np.testing.assert_array_equal(cd, cd_ref)


def test_nested_single_levels_equal_multilevel():
    x = noise(4, 800)
    co = dwt_db4(x, levels=3)
    ca = x
    for lvl in range(3):
        ca, cd = dwt_single(ca)
        np.testing.assert_array_equal(cd, co.cD[lvl])
    np.testing.assert_array_equal(ca, co.cA[2])


BANDS = ("cA4", "cD4", "cD3", "cD2", "cD1")  # the additive partition


def test_two_hz_tone_lands_in_deep_approximation():
    t = np.arange(1000) / FS
    x = np.sin(2.0 * np.pi * 2.0 * t)
    v = make_variants(x)
    energy = {tag: float((v[tag] ** 2).sum()) for tag in BANDS}
    assert energy["cA4"] / sum(energy.values()) >= 0.90


def test_forty_eight_hz_tone_lands_in_first_detail():
    t = np.arange(1000) / FS
    x = np.sin(2.0 * np.pi * 48.0 * t)
    v = make_variants(x)
    energy = {tag: float((v[tag] ** 2).sum()) for tag in BANDS}
    assert energy["cD1"] == max(energy.values())


def test_variant_band_tags_match_spectra():
    """Each band reconstruction concentrates energy in its nominal range."""
    x = noise(5, 1000)
    v = make_variants(x)
    for tag in ("cA4", "cD4", "cD3", "cD2", "cD1"):
        lo, hi = band_hz(tag, fs=FS)
        # widen by the transition width of an 8-tap filter
        span = hi - lo
        frac = oracles.band_energy_fraction(
            v[tag], FS, max(0.0, lo - 0.5 * span), hi + 0.5 * span
        )
        assert frac > 0.80, (tag, frac)


def test_original_variant_is_an_independent_copy():
    x = noise(6, 256)
    v = make_variants(x)
    np.testing.assert_array_equal(v["O"], x)
    v["O"][0] += 1.0
    assert v["O"][0] != x[0]


def test_make_variants_covers_all_tags():
    v = make_variants(noise(7, 256))
    assert set(v) == set(VARIANTS)
    for arr in v.values():
        assert arr.shape == (256,)


def test_reconstruct_variant_agrees_with_make_variants():
    x = noise(8, 640)
    co = dwt_db4(x, levels=4)
    v = make_variants(x)
    for tag in VARIANTS:
        if tag == "O":
            continue
        np.testing.assert_array_equal(reconstruct_variant(co, tag), v[tag])


def test_reconstruct_variant_refuses_the_input_tag():
    co = dwt_db4(noise(9, 256), levels=4)
    with pytest.raises(WaveletError, match="input itself"):
        reconstruct_variant(co, "O")
    with pytest.raises(WaveletError):
        reconstruct_variant(co, "cD5")


def test_band_hz_table():
    assert band_hz("O") == (0.0, 64.0)
    assert band_hz("cA4") == (0.0, 4.0)
    assert band_hz("cD4") == (4.0, 8.0)
    assert band_hz("cD3") == (8.0, 16.0)
    assert band_hz("cD2") == (16.0, 32.0)
    assert band_hz("cD1") == (32.0, 64.0)
    with pytest.raises(WaveletError):
        band_hz("cB2")


def test_coefficient_lengths_follow_the_halving_chain():
    co = dwt_db4(noise(10, 1000), levels=4)
    lengths = [len(c) for c in co.cD] + [len(co.cA[-1])]
    assert lengths == [503, 255, 131, 69, 69]


def test_coeffs_validation_rejects_wrong_lengths():
    co = dwt_db4(noise(11, 256), levels=2)
    with pytest.raises(WaveletError):
        WaveletCoeffs(
            levels=2,
            cA=co.cA,
            cD=(co.cD[0][:-1], co.cD[1]),
            original_length=256,
            boundary_mode=co.boundary_mode,
        )
    with pytest.raises(WaveletError, match="boundary"):
        WaveletCoeffs(
            levels=2,
            cA=co.cA,
            cD=co.cD,
            original_length=256,
            boundary_mode="periodic",
        )


def test_dwt_rejects_short_and_malformed_input():
    with pytest.raises(WaveletError, match="levels"):
        dwt_db4(noise(0, 512), levels=9)
    with pytest.raises(WaveletError):
        dwt_db4(noise(0, 100), levels=4)  # needs 8 * 2**4 samples
    with pytest.raises(WaveletError):
        dwt_db4(np.zeros((4, 4)))
    bad = noise(0, 256)
    bad[3] = np.inf
    with pytest.raises(WaveletError):
        dwt_db4(bad)


def test_transform_is_linear():
    x, y = noise(12, 500), noise(13, 500)
    vx, vy, vxy = make_variants(x), make_variants(y), make_variants(x + y)
    for tag in VARIANTS:
        np.testing.assert_allclose(vxy[tag], vx[tag] + vy[tag], atol=1e-9)


def test_pywavelets_agreement_when_available():
    pywt = pytest.importorskip("pywt")
    x = noise(14, 1000)
    co = dwt_db4(x, levels=1)
    ca_ref, cd_ref = pywt.dwt(x, "db4", mode="symmetric")
    np.testing.assert_allclose(co.cA[0], ca_ref, atol=1e-10)
    np.testing.assert_allclose(co.cD[0], cd_ref, atol=1e-10)
