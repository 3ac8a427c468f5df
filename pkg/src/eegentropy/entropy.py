"""Seven entropy estimators over 1-D series, with a uniform config object.

All estimators share the same front door: validate the series, compute a
scalar.  Delay-embedded methods use a fixed delay of 1 sample.  Tolerance
scaling, tie-breaking and normalization conventions are pinned here and
covered by brute-force oracles in the test suite, because small convention
drift (tie handling, template counts, log base) silently changes values.

Conventions:

* std means population standard deviation (ddof=0) throughout.
* SampEn and FuzzyEn compare templates of length m and m+1 over the same
  n-m start indices; SampEn matches with Chebyshev distance <= r*std,
  FuzzyEn weights pairs by exp(-(d**r2)/(r*std)) after removing each
  template's own mean.
* CoSiEn embeds n-m+1 raw vectors, uses angular distance
  arccos(cos_sim)/pi with strict < r, and r is an absolute angle (not
  std-scaled).
* PermEn breaks rank ties by position (stable argsort).
* PhaseEn bins angles of the second-difference scatter into k equal
  sectors starting at angle 0; points at the origin land in sector 0.
* AttnEn averages the base-2 Shannon entropies of the four
  extremum-interval distributions (max-max, min-min, max-min, min-max).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .backend import kernels

METHODS = ("SVDEn", "PermEn", "SampEn", "CoSiEn", "FuzzyEn", "PhaseEn", "AttnEn")


class EntropyError(ValueError):
    """A series is incompatible with the requested estimator."""


class UndefinedEntropyError(EntropyError):
    """SampEn has no defined value (a zero template-match count)."""


class DegenerateVectorError(EntropyError):
    """CoSiEn hit a zero-norm embedding vector (no direction)."""


class InsufficientExtremaError(EntropyError):
    """AttnEn found no intervals for at least one extremum-pair type."""


def _check_series(x, min_len: int, method: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise EntropyError(f"{method}: expected a 1-D series, got shape {x.shape}")
    if x.shape[0] < min_len:
        raise EntropyError(
            f"{method}: series of length {x.shape[0]} is shorter than the "
            f"minimum {min_len} for these parameters"
        )
    if not np.isfinite(x).all():
        raise EntropyError(f"{method}: series contains NaN or infinite samples")
    return x


def _check_int(name: str, value, lo: int, hi: int) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise EntropyError(f"{name} must be an integer, got {value!r}")
    if not lo <= value <= hi:
        raise EntropyError(f"{name}={value} outside the allowed range [{lo}, {hi}]")
    return int(value)


def svd_entropy(x, m: int) -> float:
    """Normalized spectral entropy of the delay-embedding singular values.

    Embeds x into n-m+1 rows of length m, takes singular values, renorms
    them to sum to one and returns minus the base-2 Shannon entropy of
    that distribution divided by log2(m), so the result lies in [0, 1].
    """
    m = _check_int("m", m, 2, 10)
    x = _check_series(x, m + 1, "SVDEn")
    w = sliding_window_view(x, m)
    s = np.linalg.svd(w, compute_uv=False)
    # Singular values below numerical rank are solver dust, not
    # structure; keeping them would make a rank-1 series nonzero.
    s = s[s > s[0] * max(w.shape) * np.finfo(np.float64).eps]
    total = float(s.sum())
    if total == 0.0:
        # All-zero series: the embedding matrix carries no structure.
        return 0.0
    sbar = s / total
    nz = sbar[sbar > 0]
    return float(-(nz * np.log2(nz)).sum() / math.log2(m) + 0.0)


def perm_entropy(x, m: int) -> float:
    """Normalized permutation entropy of order-m ordinal patterns.

    Windows of length m are mapped to the permutation that sorts them
    (ties broken by original position); the base-2 entropy of the
    pattern distribution is divided by log2(m!).
    """
    m = _check_int("m", m, 2, 10)
    x = _check_series(x, m + 1, "PermEn")
    w = sliding_window_view(x, m)
    pat = np.argsort(w, axis=1, kind="stable")
    codes = pat @ (m ** np.arange(m, dtype=np.int64))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum() / math.log2(math.factorial(m)) + 0.0)


def sample_entropy(x, m: int, r: float) -> float:
    """Sample entropy -ln(A/B) with tolerance r times the series std.

    A and B count template pairs (i < j over the shared n-m starts)
    within tolerance at lengths m+1 and m.  Raises
    UndefinedEntropyError when either count is zero, since the
    logarithm is then unbounded; callers decide how to substitute.
    """
    m = _check_int("m", m, 1, 10)
    if not 0.0 < r <= 1.0:
        raise EntropyError(f"r={r} outside (0, 1]")
    x = _check_series(x, m + 2, "SampEn")
    tol = r * float(np.std(x))
    a, b = kernels.sampen_counts(x, m, tol)
    if b == 0:
        raise UndefinedEntropyError(
            f"SampEn undefined: no length-{m} template matches (B=0)"
        )
    if a == 0:
        raise UndefinedEntropyError(
            f"SampEn undefined: no length-{m + 1} template matches (A=0)"
        )
    return float(-math.log(a / b) + 0.0)


def cosine_similarity_entropy(x, m: int, r: float) -> float:
    """Cosine-similarity entropy of the embedding-direction geometry.

    Over the n-m+1 raw embedding vectors, P is the fraction of pairs
    whose angular distance arccos(cos_sim)/pi falls strictly below r
    (an absolute angle in [0, 1], not scaled by the series std).  The
    result is the binary entropy of P.  A zero-norm vector has no
    direction and raises DegenerateVectorError.
    """
    m = _check_int("m", m, 1, 10)
    if not 0.0 < r <= 0.5:
        raise EntropyError(f"r={r} outside (0, 0.5]")
    x = _check_series(x, m + 1, "CoSiEn")
    v = np.ascontiguousarray(sliding_window_view(x, m))
    norms = np.sqrt((v * v).sum(axis=1))
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateVectorError(
            f"CoSiEn undefined: embedding vector at index {bad} has zero norm"
        )
    nv = v.shape[0]
    count = kernels.cosien_count(v, norms, r)
    p = count / (nv * (nv - 1) // 2)
    h = 0.0
    for q in (p, 1.0 - p):
        if q > 0.0:
            h -= q * math.log2(q)
    return h


def fuzzy_entropy(x, m: int, r: float, r2: float) -> float:
    """Fuzzy entropy ln(phi_m) - ln(phi_m1) with graded template matches.

    Templates at lengths m and m+1 share the n-m start indices and each
    has its own mean removed; a pair's membership is
    exp(-(d**r2) / (r*std)) with d the Chebyshev distance.  phi is the
    mean membership over ordered pairs.  A constant series is defined
    as 0 (all templates identical at both lengths).
    """
    m = _check_int("m", m, 1, 10)
    if not 0.0 < r <= 1.0:
        raise EntropyError(f"r={r} outside (0, 1]")
    if not 0.0 < float(r2) <= 10.0:
        raise EntropyError(f"r2={r2} outside (0, 10]")
    x = _check_series(x, m + 2, "FuzzyEn")
    sd = float(np.std(x))
    if sd == 0.0:
        return 0.0
    phi_m, phi_m1 = kernels.fuzzen_phis(x, m, r * sd, float(r2))
    return float(math.log(phi_m) - math.log(phi_m1))


def phase_entropy(x, k_sectors: int) -> float:
    """Normalized entropy of angles in the second-difference scatter.

    Points (x[i+1]-x[i], x[i+2]-x[i+1]) are binned by angle into
    k_sectors equal sectors starting at angle 0; origin points fall in
    sector 0.  Returns the base-2 entropy of the sector occupancy
    divided by log2(k_sectors).
    """
    k = _check_int("k_sectors", k_sectors, 2, 32)
    x = _check_series(x, 3, "PhaseEn")
    dx = np.diff(x)
    theta = np.arctan2(dx[1:], dx[:-1])
    theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)
    idx = np.minimum((theta * (k / (2.0 * np.pi))).astype(np.int64), k - 1)
    counts = np.bincount(idx, minlength=k)
    p = counts[counts > 0] / idx.shape[0]
    return float(-(p * np.log2(p)).sum() / math.log2(k) + 0.0)


def attention_entropy(x) -> float:
    """Mean entropy of the four extremum-interval distributions.

    Local extrema are strict three-point ones (plateaus yield none).
    Four interval families are formed: successive maxima, successive
    minima, each maximum to the next minimum, and each minimum to the
    next maximum.  Each family's base-2 Shannon entropy is computed
    from its interval-length distribution and the four are averaged.
    Raises InsufficientExtremaError when any family is empty.
    """
    x = _check_series(x, 4, "AttnEn")
    mid = x[1:-1]
    imax = np.flatnonzero((mid > x[:-2]) & (mid > x[2:])) + 1
    imin = np.flatnonzero((mid < x[:-2]) & (mid < x[2:])) + 1
    families = {
        "max-max": np.diff(imax),
        "min-min": np.diff(imin),
        "max-min": _cross_intervals(imax, imin),
        "min-max": _cross_intervals(imin, imax),
    }
    h_sum = 0.0
    for name, intervals in families.items():
        if intervals.size == 0:
            raise InsufficientExtremaError(
                f"AttnEn undefined: no {name} intervals in the series"
            )
        _, counts = np.unique(intervals, return_counts=True)
        p = counts / counts.sum()
        h_sum += float(-(p * np.log2(p)).sum() + 0.0)
    return h_sum / 4.0


def _cross_intervals(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Distances from each src index to the next strictly later dst index."""
    if src.size == 0 or dst.size == 0:
        return np.empty(0, dtype=np.int64)
    pos = np.searchsorted(dst, src, side="right")
    ok = pos < dst.size
    return dst[pos[ok]] - src[ok]


# Allowed hyperparameter ranges per method, as (field, low, high) rows.
_RANGES = {
    "SVDEn": {"m": (2, 10)},
    "PermEn": {"m": (2, 10)},
    "SampEn": {"m": (1, 3), "r": (0.05, 0.5)},
    "CoSiEn": {"m": (2, 3), "r": (0.05, 0.5)},
    "FuzzyEn": {"m": (1, 2), "r": (0.05, 0.5), "r2": (1, 5)},
    "PhaseEn": {"k_sectors": (2, 10)},
    "AttnEn": {},
}


@dataclass(frozen=True)
class EntropyConfig:
    """One estimator plus a complete, validated hyperparameter set.

    Fields irrelevant to the chosen method must stay None; relevant
    fields are range-checked on construction, so any config that exists
    is computable.
    """

    method: str
    m: int | None = None
    r: float | None = None
    r2: int | None = None
    k_sectors: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise EntropyError(
                f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}"
            )
        spec = _RANGES[self.method]
        for field in ("m", "r", "r2", "k_sectors"):
            value = getattr(self, field)
            if field in spec:
                lo, hi = spec[field]
                if value is None:
                    raise EntropyError(f"{self.method} requires {field}")
                if not (lo <= value <= hi):
                    raise EntropyError(
                        f"{self.method}: {field}={value} outside [{lo}, {hi}]"
                    )
                if field in ("m", "r2", "k_sectors"):
                    _check_int(field, value, lo, hi)
            elif value is not None:
                raise EntropyError(
                    f"{self.method} takes no {field} (got {field}={value})"
                )

    def compute(self, x) -> float:
        if self.method == "SVDEn":
            return svd_entropy(x, self.m)
        if self.method == "PermEn":
            return perm_entropy(x, self.m)
        if self.method == "SampEn":
            return sample_entropy(x, self.m, self.r)
        if self.method == "CoSiEn":
            return cosine_similarity_entropy(x, self.m, self.r)
        if self.method == "FuzzyEn":
            return fuzzy_entropy(x, self.m, self.r, self.r2)
        if self.method == "PhaseEn":
            return phase_entropy(x, self.k_sectors)
        return attention_entropy(x)

    def label(self) -> str:
        """Compact round-trippable form, e.g. ``FuzzyEn(m=1,r=0.15,r2=5)``."""
        parts = []
        for field in ("m", "r", "r2", "k_sectors"):
            value = getattr(self, field)
            if value is None:
                continue
            name = "k" if field == "k_sectors" else field
            text = repr(float(value)) if field == "r" else str(int(value))
            parts.append(f"{name}={text}")
        if not parts:
            return self.method
        return f"{self.method}({','.join(parts)})"

    @classmethod
    def parse(cls, label: str) -> "EntropyConfig":
        match = re.fullmatch(r"(\w+)(?:\(([^()]*)\))?", label.strip())
        if not match:
            raise EntropyError(f"cannot parse entropy label {label!r}")
        method, argtext = match.group(1), match.group(2)
        kwargs: dict = {}
        if argtext:
            for item in argtext.split(","):
                if "=" not in item:
                    raise EntropyError(f"cannot parse entropy label {label!r}")
                key, _, value = item.partition("=")
                key = key.strip()
                if key == "k":
                    key = "k_sectors"
                if key not in ("m", "r", "r2", "k_sectors"):
                    raise EntropyError(f"unknown parameter {key!r} in {label!r}")
                kwargs[key] = float(value) if key == "r" else int(value)
        return cls(method, **kwargs)


def _r_grid() -> tuple[float, ...]:
    return tuple(round(0.05 * i, 2) for i in range(1, 11))


def default_grid(method: str) -> tuple[EntropyConfig, ...]:
    """Full hyperparameter grid for a method (r stepped by 0.05)."""
    if method == "SVDEn" or method == "PermEn":
        return tuple(EntropyConfig(method, m=m) for m in range(2, 11))
    if method == "SampEn":
        return tuple(
            EntropyConfig(method, m=m, r=r) for m in (1, 2, 3) for r in _r_grid()
        )
    if method == "CoSiEn":
        return tuple(
            EntropyConfig(method, m=m, r=r) for m in (2, 3) for r in _r_grid()
        )
    if method == "FuzzyEn":
        return tuple(
            EntropyConfig(method, m=m, r=r, r2=r2)
            for m in (1, 2)
            for r in _r_grid()
            for r2 in range(1, 6)
        )
    if method == "PhaseEn":
        return tuple(EntropyConfig(method, k_sectors=k) for k in range(2, 11))
    if method == "AttnEn":
        return (EntropyConfig(method),)
    raise EntropyError(f"unknown method {method!r}")


# Tuned operating point per method (used as the CLI default config).
_DEFAULTS = {
    "SVDEn": {"m": 3},
    "PermEn": {"m": 5},
    "SampEn": {"m": 2, "r": 0.25},
    "CoSiEn": {"m": 3, "r": 0.05},
    "FuzzyEn": {"m": 1, "r": 0.15, "r2": 5},
    "PhaseEn": {"k_sectors": 6},
    "AttnEn": {},
}


def default_config(method: str) -> EntropyConfig:
    """The tuned operating point for a method."""
    if method not in _DEFAULTS:
        raise EntropyError(f"unknown method {method!r}")
    return EntropyConfig(method, **_DEFAULTS[method])
