"""Empirical spacing measures of spectra and their Kolmogorov distance to a law.

Spectra are normalised to the semicircle on ``[-1, 1]`` with density
``psi(x) = (2/pi) sqrt(1 - x**2)``. Two rescalings are supported:

* local-linear: ``(lambda - a) * N * psi(a)`` for eigenvalues in
  ``I_N = [a - h, a + h]``; measures carry weight ``1/|A_N|`` with
  ``|A_N| = N psi(a) |I_N|``.
* unfolded: ``N * F(lambda)`` with ``F`` the centred semicircle CDF, for
  eigenvalues in a fixed ``I``; measures carry weight ``1/(count - 1)``.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .eigensolver import Spectrum

MODES = ("local-linear", "unfolded")


class EmptyWindowError(ValueError):
    """Fewer than two eigenvalues fell in the window."""


def semicircle_density(x):
    x = np.asarray(x, dtype=float)
    return 2.0 / np.pi * np.sqrt(np.clip(1.0 - x * x, 0.0, None))


def semicircle_F(t):
    """``(2/pi) int_0^t sqrt(1 - s**2) ds``, clamped to ``+-1/2`` outside ``[-1, 1]``."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    out = (t * np.sqrt(1.0 - t * t) + np.arcsin(t)) / np.pi
    return float(out) if out.ndim == 0 else out


def semicircle_cdf(t):
    return semicircle_F(t) + 0.5


@dataclass(frozen=True)
class WindowSpec:
    mode: str
    center: float
    half_width: float
    psi_a: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.mode == "local-linear":
            if self.psi_a is None or self.psi_a <= 0:
                raise ValueError("local window needs psi(a) > 0")
            if not -1.0 < self.center < 1.0:
                raise ValueError("centre must lie inside (-1, 1)")
        else:
            lo, hi = self.interval
            if lo < -1.0 - 1e-12 or hi > 1.0 + 1e-12:
                raise ValueError("unfolded window must lie inside [-1, 1]")

    @classmethod
    def local(cls, n: int, center: float = 0.0, length: Optional[float] = None) -> "WindowSpec":
        """Local window of length ``|I_N|`` (default ``N**-1/2``) at ``center``."""
        length = n**-0.5 if length is None else length
        return cls("local-linear", center, 0.5 * length, float(semicircle_density(center)))

    @classmethod
    def unfolded(cls, lo: float, hi: float) -> "WindowSpec":
        if hi <= lo:
            raise ValueError("empty interval")
        return cls("unfolded", 0.5 * (lo + hi), 0.5 * (hi - lo))

    @property
    def interval(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    def area(self, n: int) -> float:
        """``|A_N|``: expected number of rescaled eigenvalues in the window."""
        if self.mode == "local-linear":
            return n * self.psi_a * self.length
        lo, hi = self.interval
        return n * (semicircle_F(hi) - semicircle_F(lo))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WindowSpec":
        return cls(d["mode"], float(d["center"]), float(d["half_width"]),
                   None if d.get("psi_a") is None else float(d["psi_a"]))


@dataclass
class EmpiricalMeasure:
    """Finite atomic measure ``weight * sum_i mult_i delta(atoms_i)`` with sorted atoms."""

    atoms: np.ndarray
    weight_per_atom: float
    multiplicity: Optional[np.ndarray] = None

    def __post_init__(self):
        order = np.argsort(self.atoms, kind="stable")
        self.atoms = np.asarray(self.atoms, dtype=float)[order]
        if self.multiplicity is not None:
            self.multiplicity = np.asarray(self.multiplicity, dtype=float)[order]

    @property
    def counts(self) -> np.ndarray:
        return np.ones_like(self.atoms) if self.multiplicity is None else self.multiplicity

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.counts)) * self.weight_per_atom

    def __len__(self) -> int:
        return len(self.atoms)

    def mass_below(self, s: float) -> float:
        """``int_0^s d(measure)``, right-continuous in ``s``."""
        k = np.searchsorted(self.atoms, s, side="right")
        return float(math.fsum(self.counts[:k])) * self.weight_per_atom

    def cdf(self, x):
        cum = np.concatenate([[0.0], np.cumsum(self.counts)]) * self.weight_per_atom
        return cum[np.searchsorted(self.atoms, x, side="right")]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("atom,weight\n")
            for a, c in zip(self.atoms, self.counts):
                fh.write(f"{float(a)!r},{float(c * self.weight_per_atom)!r}\n")


def _in_window(values: np.ndarray, window: WindowSpec) -> np.ndarray:
    lo, hi = window.interval
    return values[(values >= lo) & (values <= hi)]


def rescale_local(spectrum: Spectrum, window: WindowSpec) -> np.ndarray:
    """``(lambda_i - a) N psi(a)`` for the eigenvalues in ``I_N``, ascending."""
    if window.mode != "local-linear":
        raise ValueError("rescale_local needs a local-linear window")
    if window.psi_a is None or window.psi_a <= 0:
        raise ValueError("psi(a) must be positive")
    lam = _in_window(np.asarray(spectrum.values, dtype=float), window)
    return (lam - window.center) * spectrum.n * window.psi_a


def unfold(spectrum: Spectrum) -> np.ndarray:
    """``N F(lambda_i)`` for every eigenvalue."""
    return spectrum.n * semicircle_F(np.asarray(spectrum.values, dtype=float))


def rescaled_in_window(spectrum: Spectrum, window: WindowSpec) -> np.ndarray:
    if window.mode == "local-linear":
        return rescale_local(spectrum, window)
    lam = _in_window(np.asarray(spectrum.values, dtype=float), window)
    return spectrum.n * semicircle_F(lam)


def _weight(spectrum: Spectrum, window: WindowSpec, count: int, normalisation: Optional[str]) -> float:
    norm = normalisation or ("area" if window.mode == "local-linear" else "count")
    if norm == "area":
        return 1.0 / window.area(spectrum.n)
    if norm == "count":
        return 1.0 / (count - 1)
    raise ValueError(f"unknown normalisation {norm!r}")


def spacing_measure(spectrum: Spectrum, window: WindowSpec, normalisation: Optional[str] = None) -> EmpiricalMeasure:
    """Nearest-neighbour spacings of rescaled eigenvalues inside the window.

    ``normalisation`` is ``"area"`` (weight ``1/|A_N|``, local default) or
    ``"count"`` (weight ``1/(count - 1)``, unfolded default).
    """
    x = rescaled_in_window(spectrum, window)
    if len(x) < 2:
        raise EmptyWindowError(f"{len(x)} eigenvalue(s) in window {window.interval}")
    return EmpiricalMeasure(np.diff(x), _weight(spectrum, window, len(x), normalisation))


def _pair_table(x: np.ndarray):
    i, j = np.triu_indices(len(x), k=1)
    return x[j] - x[i], j - i


def gamma_measure(spectrum: Spectrum, window: WindowSpec, k: int, normalisation: Optional[str] = None) -> EmpiricalMeasure:
    """Counting measure over index sets ``i_1 < ... < i_k`` with both ends in the window.

    Each endpoint pair ``(i, j)`` contributes atom ``x_j - x_i`` with
    multiplicity ``C(j - i - 1, k - 2)``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    x = rescaled_in_window(spectrum, window)
    if len(x) < 2:
        raise EmptyWindowError(f"{len(x)} eigenvalue(s) in window {window.interval}")
    gaps, diff = _pair_table(x)
    mult = np.array([math.comb(int(m) - 1, k - 2) for m in diff], dtype=float)
    keep = mult > 0
    return EmpiricalMeasure(gaps[keep], _weight(spectrum, window, len(x), normalisation), mult[keep])


@dataclass
class IdentityReport:
    s: float
    k_max: int
    sigma_integral: float
    residual: float
    total_mass: float
    partial_sums: list = field(default_factory=list)
    inequalities_hold: bool = True
    violations: list = field(default_factory=list)

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def verify_combinatorial_identity(spectrum: Spectrum, window: WindowSpec, s: float,
                                  normalisation: Optional[str] = None) -> IdentityReport:
    """Check ``int_0^s sigma_N = sum_k (-1)**k int_0^s gamma_N(k)`` and its Bonferroni bounds.

    Everything is counted in exact integers (the common weight factors out);
    partial sums ``S_m`` must satisfy ``S_m <= int sigma_N`` for odd ``m`` and
    ``S_m >= int sigma_N`` for even ``m``.
    """
    x = rescaled_in_window(spectrum, window)
    if len(x) < 2:
        raise EmptyWindowError(f"{len(x)} eigenvalue(s) in window {window.interval}")
    w = _weight(spectrum, window, len(x), normalisation)
    k_max = len(x)
    gaps, diff = _pair_table(x)
    by_diff = Counter(int(m) for m in diff[gaps <= s])
    sigma_count = by_diff.get(1, 0)
    gamma_counts = {k: sum(c * math.comb(m - 1, k - 2) for m, c in by_diff.items()) for k in range(2, k_max + 1)}
    partial = 0
    partial_sums = []
    violations = []
    for m in range(2, k_max + 1):
        partial += (-1) ** m * gamma_counts[m]
        partial_sums.append(partial * w)
        if m % 2 == 1 and partial > sigma_count:
            violations.append(m)
        if m % 2 == 0 and partial < sigma_count:
            violations.append(m)
    residual = abs(sigma_count - partial) * w
    total = (len(x) - 1) * w
    return IdentityReport(float(s), k_max, sigma_count * w, residual, total, partial_sums, not violations, violations)


CDFLike = Union[Callable, object]


def _law_cdf(law) -> Callable:
    if hasattr(law, "cdf_at"):
        return law.cdf_at
    if callable(law):
        return law
    raise TypeError("law must be a LimitLaw or a callable CDF")


def kolmogorov_distance(measure: EmpiricalMeasure, law: CDFLike) -> float:
    """``sup_x |measure([0, x]) - F(x)|`` evaluated exactly at the jump points.

    The empirical CDF is right-continuous; its mass may differ from one in
    local mode, in which case the tail beyond the last atom contributes
    ``|mass - 1|`` as ``F -> 1``.
    """
    if len(measure) == 0:
        raise EmptyWindowError("empty measure")
    cdf = _law_cdf(law)
    xs, first = np.unique(measure.atoms, return_index=True)
    cum = np.cumsum(measure.counts) * measure.weight_per_atom
    after = np.concatenate([cum[first[1:] - 1], [cum[-1]]])
    before = np.concatenate([[0.0], after[:-1]])
    f = np.asarray(cdf(xs), dtype=float)
    d = max(np.max(np.abs(before - f)), np.max(np.abs(after - f)))
    mass = after[-1]
    return float(max(d, abs(mass - 1.0)))
