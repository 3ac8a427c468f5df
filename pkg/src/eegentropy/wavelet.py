"""Four-level db4 wavelet decomposition and single-band reconstructions.

A segment is expanded into nine variants: the original series ``O`` plus a
time-domain reconstruction of each coefficient array (``cA1..cA4``,
``cD1..cD4``), obtained by zeroing every other array and inverting the
transform.  Reconstruction is exact to float precision, so the detail
variants and the deepest approximation sum back to the input.

Conventions: half-point symmetric boundary extension by 7 samples on each
side, one level maps length n to floor((n + 7) / 2) coefficients, and the
synthesis side upsamples, filters and crops so that analysis followed by
synthesis is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Canonical db4 synthesis lowpass taps; the other three filters follow by
# reversal and sign alternation (quadrature mirror relations).
REC_LO = np.array(
    [
        0.2303778133088964,
        0.7148465705529154,
        0.6308807679298587,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ]
)
DEC_LO = REC_LO[::-1].copy()
DEC_HI = REC_LO * np.where(np.arange(8) % 2 == 0, -1.0, 1.0)
REC_HI = DEC_HI[::-1].copy()

_FILTER_LEN = 8
_PAD = _FILTER_LEN - 1

# Crop offset that makes synthesis invert analysis (checked by the
# reconstruction tests).
_REC_OFFSET = 6

VARIANTS = ("O", "cA1", "cA2", "cA3", "cA4", "cD1", "cD2", "cD3", "cD4")


class WaveletError(ValueError):
    """Input unusable for the requested decomposition."""


def _check_input(x, min_len: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise WaveletError(f"expected a 1-D series, got shape {x.shape}")
    if x.shape[0] < min_len:
        raise WaveletError(
            f"series of length {x.shape[0]} is too short (minimum {min_len})"
        )
    if not np.isfinite(x).all():
        raise WaveletError("series contains NaN or infinite samples")
    return x


def _extend(x: np.ndarray) -> np.ndarray:
    left = x[_PAD - 1 :: -1]
    right = x[: -_PAD - 1 : -1]
    return np.concatenate([left, x, right])


def dwt_single(x) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level: returns (approximation, detail) coefficients."""
    x = _check_input(x, _PAD)
    xe = _extend(x)
    ca = np.convolve(xe, DEC_LO, mode="valid")[1::2]
    cd = np.convolve(xe, DEC_HI, mode="valid")[1::2]
    return ca, cd


def idwt_single(ca, cd, out_len: int) -> np.ndarray:
    """One synthesis level, cropped to the pre-analysis length."""
    ca = np.ascontiguousarray(ca, dtype=np.float64)
    cd = np.ascontiguousarray(cd, dtype=np.float64)
    if ca.shape != cd.shape:
        raise WaveletError(
            f"coefficient arrays disagree in length ({ca.shape[0]} vs {cd.shape[0]})"
        )
    m = ca.shape[0]
    up_a = np.zeros(2 * m - 1)
    up_a[::2] = ca
    up_d = np.zeros(2 * m - 1)
    up_d[::2] = cd
    y = np.convolve(up_a, REC_LO, mode="full") + np.convolve(up_d, REC_HI, mode="full")
    if y.shape[0] < _REC_OFFSET + out_len:
        raise WaveletError(
            f"cannot reconstruct {out_len} samples from {m} coefficients"
        )
    return y[_REC_OFFSET : _REC_OFFSET + out_len]


def _length_chain(n: int, levels: int) -> list[int]:
    """Approximation lengths per level: chain[0] is the input length."""
    chain = [n]
    for _ in range(levels):
        chain.append((chain[-1] + _PAD) // 2)
    return chain


@dataclass(frozen=True)
class WaveletCoeffs:
    """Analysis output: per-level approximation and detail arrays.

    cA[k-1] and cD[k-1] hold the level-k coefficients; lengths follow
    deterministically from original_length under symmetric extension.
    """

    levels: int
    cA: tuple[np.ndarray, ...]
    cD: tuple[np.ndarray, ...]
    original_length: int
    boundary_mode: str = "symmetric"

    def __post_init__(self):
        if self.boundary_mode != "symmetric":
            raise WaveletError(f"unsupported boundary mode {self.boundary_mode!r}")
        if len(self.cA) != self.levels or len(self.cD) != self.levels:
            raise WaveletError(
                f"expected {self.levels} coefficient arrays per side, got "
                f"{len(self.cA)} approximation and {len(self.cD)} detail"
            )
        chain = _length_chain(self.original_length, self.levels)
        for k in range(self.levels):
            if self.cA[k].shape[0] != chain[k + 1] or self.cD[k].shape[0] != chain[k + 1]:
                raise WaveletError(
                    f"level-{k + 1} arrays have length "
                    f"{self.cA[k].shape[0]}/{self.cD[k].shape[0]}, "
                    f"expected {chain[k + 1]} for an input of "
                    f"{self.original_length} samples"
                )

    def length_chain(self) -> list[int]:
        return _length_chain(self.original_length, self.levels)


def dwt_db4(x, levels: int = 4) -> WaveletCoeffs:
    """Multi-level analysis of a series into approximation and detail
    coefficients.

    Requires at least filter-length x 2**levels samples so every level
    sees more signal than boundary extension.
    """
    if not 1 <= levels <= 8:
        raise WaveletError(f"levels={levels} outside [1, 8]")
    x = _check_input(x, _FILTER_LEN * 2**levels)
    approx = x
    cas, cds = [], []
    for _ in range(levels):
        approx, cd = dwt_single(approx)
        cas.append(approx)
        cds.append(cd)
    return WaveletCoeffs(
        levels=levels,
        cA=tuple(cas),
        cD=tuple(cds),
        original_length=x.shape[0],
    )


def inverse_dwt(coeffs: WaveletCoeffs) -> np.ndarray:
    """Full synthesis from untouched coefficients back to the input."""
    chain = coeffs.length_chain()
    y = coeffs.cA[-1]
    for level in range(coeffs.levels, 0, -1):
        y = idwt_single(y, coeffs.cD[level - 1], chain[level - 1])
    return y


def _reconstruct_single(arr: np.ndarray, level: int, chain: list[int], is_detail: bool) -> np.ndarray:
    """Invert from one coefficient array, siblings taken as zero."""
    y = arr
    if is_detail:
        y = idwt_single(np.zeros_like(y), y, chain[level - 1])
        level -= 1
    while level > 0:
        y = idwt_single(y, np.zeros_like(y), chain[level - 1])
        level -= 1
    return y


def reconstruct_variant(coeffs: WaveletCoeffs, tag: str) -> np.ndarray:
    """Series of the input's length carrying only one coefficient band.

    Every coefficient array except the one named by tag is zeroed
    before inverting.  Tag "O" is not a reconstruction and is refused.
    """
    if tag == "O":
        raise WaveletError('variant "O" is the input itself, not a reconstruction')
    kind, lvl = tag[:2], tag[2:]
    if kind not in ("cA", "cD") or not lvl.isdigit() or not 1 <= int(lvl) <= coeffs.levels:
        raise WaveletError(f"unknown variant tag {tag!r}")
    level = int(lvl)
    arr = coeffs.cA[level - 1] if kind == "cA" else coeffs.cD[level - 1]
    return _reconstruct_single(arr, level, coeffs.length_chain(), kind == "cD")


def make_variants(x, levels: int = 4) -> dict[str, np.ndarray]:
    """All banded reconstructions of a series, keyed by variant tag.

    Tags are "O" (the input itself), "cA1".."cA<levels>" and
    "cD1".."cD<levels>"; each reconstruction has the input's length.
    """
    coeffs = dwt_db4(x, levels)
    chain = coeffs.length_chain()
    out: dict[str, np.ndarray] = {
        "O": np.ascontiguousarray(x, dtype=np.float64).copy()
    }
    for lvl in range(1, levels + 1):
        out[f"cA{lvl}"] = _reconstruct_single(coeffs.cA[lvl - 1], lvl, chain, False)
        out[f"cD{lvl}"] = _reconstruct_single(coeffs.cD[lvl - 1], lvl, chain, True)
    return out


def band_hz(tag: str, fs: float = 128.0, levels: int = 4) -> tuple[float, float]:
    """Nominal frequency band of a variant tag at sampling rate fs."""
    ny = fs / 2.0
    if tag == "O":
        return (0.0, ny)
    kind, lvl = tag[:2], tag[2:]
    if kind in ("cA", "cD") and lvl.isdigit() and 1 <= int(lvl) <= levels:
        k = int(lvl)
        if kind == "cA":
            return (0.0, ny / 2**k)
        return (ny / 2**k, ny / 2 ** (k - 1))
    raise WaveletError(f"unknown variant tag {tag!r}")
