"""Random matrix ensembles: Gaussian invariant, tridiagonal beta and Wigner.

All samplers are pure functions of an :class:`EnsembleSpec` and a stream id.
Random numbers come from a counter-based Philox generator keyed by
``(seed, stream)``, so trial ``i`` of an experiment draws the same matrix no
matter which worker runs it or in what order.

Normalisation conventions (before the global rescaling in
:func:`rmtspacing.eigensolver.spectrum_of`):

* Gaussian invariant ensembles have joint eigenvalue density proportional to
  ``prod |l_k - l_j|**beta * exp(-beta * N * sum(l**2) / 4)``, hence support
  ``[-2, 2]``.
* Wigner matrices have standardised entries of variance ``1/N``, hence
  support ``[-2, 2]``.
* Tridiagonal models follow the Dumitriu-Edelman construction with density
  proportional to ``prod |dl|**beta * exp(-sum(l**2) / 2)``.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

FAMILIES = ("gaussian-invariant", "beta-tridiagonal", "wigner-iid")
SYMMETRIES = ("real-symmetric", "complex-hermitian", "quaternion-self-dual")
SYMMETRY_OF_BETA = {1: "real-symmetric", 2: "complex-hermitian", 4: "quaternion-self-dual"}
ENTRY_DISTRIBUTIONS = ("normal", "uniform", "exponential", "poisson", "beta", "chi-squared")

Stream = Union[int, tuple]


class SpecError(ValueError):
    """Invalid ensemble description."""


@dataclass(frozen=True)
class EntryDist:
    """Entry law for Wigner matrices, e.g. ``beta(2,5)`` or ``poisson(3)``."""

    name: str
    params: tuple = ()

    _ARITY = {"normal": 0, "uniform": 0, "exponential": 0, "poisson": 1, "beta": 2, "chi-squared": 1}

    def __post_init__(self):
        if self.name not in self._ARITY:
            raise SpecError(f"unknown entry distribution {self.name!r}")
        if len(self.params) != self._ARITY[self.name]:
            raise SpecError(f"{self.name} takes {self._ARITY[self.name]} parameter(s), got {self.params}")
        if any(not math.isfinite(p) or p <= 0 for p in self.params):
            raise SpecError(f"{self.name} parameters must be positive and finite, got {self.params}")

    @classmethod
    def parse(cls, text: str) -> "EntryDist":
        m = re.fullmatch(r"\s*([a-z-]+)\s*(?:\(([^)]*)\))?\s*", text)
        if m is None:
            raise SpecError(f"cannot parse entry distribution {text!r}")
        name, args = m.group(1), m.group(2)
        params = tuple(float(a) for a in args.split(",")) if args and args.strip() else ()
        return cls(name, params)

    def __str__(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}({','.join(f'{p:g}' for p in self.params)})"

    def moments(self) -> tuple[float, float]:
        """Mean and variance of the (unstandardised) law."""
        if self.name == "normal":
            return 0.0, 1.0
        if self.name == "uniform":
            return 0.5, 1.0 / 12.0
        if self.name == "exponential":
            return 1.0, 1.0
        if self.name == "poisson":
            (lam,) = self.params
            return lam, lam
        if self.name == "beta":
            p, q = self.params
            return p / (p + q), p * q / ((p + q) ** 2 * (p + q + 1))
        (k,) = self.params
        return k, 2.0 * k

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.name == "normal":
            return rng.standard_normal(size)
        if self.name == "uniform":
            return rng.random(size)
        if self.name == "exponential":
            return rng.standard_exponential(size)
        if self.name == "poisson":
            return rng.poisson(self.params[0], size).astype(float)
        if self.name == "beta":
            return rng.beta(*self.params, size)
        return rng.chisquare(self.params[0], size)


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to sample.

    JSON form: ``{"family", "beta", "n", "entry_dist", "symmetry", "seed"}``
    where ``entry_dist`` is a string such as ``"beta(2,5)"`` (or null) and
    ``symmetry`` is null outside the Wigner family.
    """

    family: str
    beta: float
    n: int
    entry_dist: Optional[EntryDist] = None
    symmetry: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.entry_dist, str):
            object.__setattr__(self, "entry_dist", EntryDist.parse(self.entry_dist))
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}")
        if int(self.n) != self.n or self.n < 1:
            raise SpecError(f"matrix dimension must be a positive integer, got {self.n}")
        if not 0 <= int(self.seed) < 2**64:
            raise SpecError("seed must be a 64-bit unsigned integer")
        if self.family == "beta-tridiagonal":
            if not (math.isfinite(self.beta) and self.beta > 0):
                raise SpecError(f"beta must be positive, got {self.beta}")
            return
        if self.beta not in SYMMETRY_OF_BETA:
            raise SpecError(f"{self.family} requires beta in {{1, 2, 4}}, got {self.beta}")
        if self.family == "wigner-iid":
            if self.entry_dist is None:
                raise SpecError("wigner-iid requires entry_dist")
            expected = SYMMETRY_OF_BETA[self.beta]
            if self.symmetry is None:
                object.__setattr__(self, "symmetry", expected)
            elif self.symmetry != expected:
                raise SpecError(f"beta={self.beta:g} is inconsistent with symmetry {self.symmetry!r}")

    def with_n(self, n: int) -> "EnsembleSpec":
        return EnsembleSpec(self.family, self.beta, n, self.entry_dist, self.symmetry, self.seed)

    def with_seed(self, seed: int) -> "EnsembleSpec":
        return EnsembleSpec(self.family, self.beta, self.n, self.entry_dist, self.symmetry, seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["entry_dist"] = None if self.entry_dist is None else str(self.entry_dist)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        unknown = set(d) - {"family", "beta", "n", "entry_dist", "symmetry", "seed"}
        if unknown:
            raise SpecError(f"unknown EnsembleSpec fields: {sorted(unknown)}")
        beta = float(d["beta"])
        if beta.is_integer():
            beta = int(beta)
        return cls(
            family=d["family"],
            beta=beta,
            n=int(d["n"]),
            entry_dist=d.get("entry_dist"),
            symmetry=d.get("symmetry"),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class MatrixSample:
    """A sampled matrix.

    ``storage`` is one of ``dense-real-symmetric``, ``dense-complex-hermitian``,
    ``dense-quaternion-embedded`` (``2n x 2n`` complex Hermitian) or
    ``tridiagonal`` (``diag`` and strictly positive ``offdiag``).
    """

    spec: EnsembleSpec
    storage: str
    matrix: Optional[np.ndarray] = None
    diag: Optional[np.ndarray] = None
    offdiag: Optional[np.ndarray] = None
    stream: Stream = field(default=0)


def make_rng(seed: int, stream: Stream = 0) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``."""
    key = stream if isinstance(stream, tuple) else (stream,)
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _hermitian_from_upper(upper: np.ndarray, diag: np.ndarray) -> np.ndarray:
    # upper: strictly upper triangle already filled; mirror conjugate below
    h = np.triu(upper, 1)
    h = h + h.conj().T
    h[np.diag_indices_from(h)] = diag
    return h


def _quaternion_embedding(a_upper, a_diag, b_upper) -> np.ndarray:
    """``[[A, B], [-conj(B), conj(A)]]`` with A Hermitian, B antisymmetric."""
    a = _hermitian_from_upper(a_upper, a_diag)
    b = np.triu(b_upper, 1)
    b = b - b.T
    return np.block([[a, b], [-b.conj(), a.conj()]])


def sample_gaussian_invariant(spec: EnsembleSpec, stream: Stream = 0) -> MatrixSample:
    """GOE / GUE / GSE with weight ``exp(-beta * N * tr(H**2) / 4)``."""
    if spec.family != "gaussian-invariant":
        raise SpecError(f"expected gaussian-invariant spec, got {spec.family}")
    n = spec.n
    rng = make_rng(spec.seed, stream)
    if spec.beta == 1:
        off = rng.standard_normal((n, n)) / math.sqrt(n)
        d = rng.standard_normal(n) * math.sqrt(2.0 / n)
        return MatrixSample(spec, "dense-real-symmetric", matrix=_hermitian_from_upper(off, d), stream=stream)
    if spec.beta == 2:
        s = 1.0 / math.sqrt(2 * n)
        off = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * s
        d = rng.standard_normal(n) / math.sqrt(n)
        return MatrixSample(spec, "dense-complex-hermitian", matrix=_hermitian_from_upper(off, d), stream=stream)
    s = 0.5 / math.sqrt(n)
    a_off = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * s
    a_d = rng.standard_normal(n) / math.sqrt(2 * n)
    b_off = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * s
    return MatrixSample(
        spec, "dense-quaternion-embedded", matrix=_quaternion_embedding(a_off, a_d, b_off), stream=stream
    )


def sample_beta_tridiagonal(spec: EnsembleSpec, stream: Stream = 0) -> MatrixSample:
    """Dumitriu-Edelman Jacobi matrix: diag N(0, 1), offdiag chi_{beta(n-k)} / sqrt(2)."""
    if spec.family != "beta-tridiagonal":
        raise SpecError(f"expected beta-tridiagonal spec, got {spec.family}")
    n = spec.n
    rng = make_rng(spec.seed, stream)
    diag = rng.standard_normal(n)
    dof = spec.beta * np.arange(n - 1, 0, -1, dtype=float)
    offdiag = np.sqrt(rng.chisquare(dof)) / math.sqrt(2.0) if n > 1 else np.empty(0)
    # chi variates are positive with probability one; a zero would split the matrix
    if np.any(offdiag <= 0):
        raise FloatingPointError("non-positive off-diagonal entry in Jacobi matrix")
    return MatrixSample(spec, "tridiagonal", diag=diag, offdiag=offdiag, stream=stream)


def standardize_entry_distribution(entry_dist: EntryDist, n: int) -> tuple[float, float]:
    """Return ``(shift, scale)`` such that ``(x - shift) * scale`` has variance ``1/n``."""
    if isinstance(entry_dist, str):
        entry_dist = EntryDist.parse(entry_dist)
    mean, var = entry_dist.moments()
    if not var > 0:
        raise SpecError(f"degenerate entry distribution {entry_dist}")
    return mean, 1.0 / math.sqrt(var * n)


def sample_wigner(spec: EnsembleSpec, stream: Stream = 0) -> MatrixSample:
    """Wigner matrix with i.i.d. standardised entries (variance ``1/n``).

    Complex off-diagonal entries are ``(x + iy)/sqrt(2)`` and quaternion ones
    ``(x0 + x1 i + x2 j + x3 k)/2`` so that ``E|h_jk|**2 = 1/n`` in every
    symmetry class.
    """
    if spec.family != "wigner-iid":
        raise SpecError(f"expected wigner-iid spec, got {spec.family}")
    n = spec.n
    rng = make_rng(spec.seed, stream)
    shift, scale = standardize_entry_distribution(spec.entry_dist, n)

    def draw(size):
        return (spec.entry_dist.draw(rng, size) - shift) * scale

    if spec.symmetry == "real-symmetric":
        m = draw((n, n))
        return MatrixSample(spec, "dense-real-symmetric", matrix=_hermitian_from_upper(m, np.diag(m).copy()), stream=stream)
    if spec.symmetry == "complex-hermitian":
        off = (draw((n, n)) + 1j * draw((n, n))) / math.sqrt(2.0)
        return MatrixSample(spec, "dense-complex-hermitian", matrix=_hermitian_from_upper(off, draw(n)), stream=stream)
    a_off = (draw((n, n)) + 1j * draw((n, n))) / 2.0
    b_off = (draw((n, n)) + 1j * draw((n, n))) / 2.0
    return MatrixSample(
        spec, "dense-quaternion-embedded", matrix=_quaternion_embedding(a_off, draw(n), b_off), stream=stream
    )


def sample(spec: EnsembleSpec, stream: Stream = 0) -> MatrixSample:
    """Dispatch on ``spec.family``."""
    if spec.family == "gaussian-invariant":
        return sample_gaussian_invariant(spec, stream)
    if spec.family == "beta-tridiagonal":
        return sample_beta_tridiagonal(spec, stream)
    return sample_wigner(spec, stream)
