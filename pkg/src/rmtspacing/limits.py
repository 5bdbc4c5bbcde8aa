"""Gap probabilities and limiting spacing laws of the sine-kernel processes.

``G_beta(s)`` is the probability that an interval of length ``s`` contains no
point of the limiting bulk process; the nearest-neighbour spacing law has CDF
``1 + G_beta'(s)``. Three routes are provided for beta = 2:

* :func:`gap_fredholm`: Nystrom discretisation of ``det(1 - K_2)`` on ``(0, s)``.
* :func:`gap_series`: the alternating expansion in integrals of ``W_k``.
* :func:`gap_painleve`: the sigma-form of Painleve V.

For beta = 1, 4 the spacing CDF and density come straight from the alternating
series in ``W_k`` (:func:`spacing_cdf_series`, :func:`spacing_density_series`).
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import BarycentricInterpolator, CubicHermiteSpline
from scipy.special import gamma, gammainc, gammaincc

from .kernels import GROWTH_CONSTANT, sinc, w_k_batch, w_k_fast

CACHE_VERSION = 2

# Gauss-Legendre order per axis for a d-dimensional simplex integral
NODES_BY_DIM = {1: 40, 2: 24, 3: 16, 4: 12, 5: 9, 6: 7, 7: 5, 8: 4, 9: 3, 10: 3, 11: 3}
K_CAP = 12
SERIES_TOL = 1e-10

T0 = 1e-3
T_MAX = 20.0

_PI = math.pi
# sigma(t) = sum_n SIGMA_SERIES[n] t**n near t = 0
SIGMA_SERIES = {
    1: -1.0 / _PI,
    2: -1.0 / _PI**2,
    3: -1.0 / _PI**3,
    4: (_PI**2 - 9.0) / (9.0 * _PI**4),
    5: (5.0 * _PI**2 - 36.0) / (36.0 * _PI**5),
    6: (-450.0 - 4.0 * _PI**4 + 75.0 * _PI**2) / (450.0 * _PI**6),
    7: (-28.0 * _PI**4 - 2700.0 + 525.0 * _PI**2) / (2700.0 * _PI**7),
    8: (-5929.0 * _PI**4 - 396900.0 + 180.0 * _PI**6 + 88200.0 * _PI**2) / (396900.0 * _PI**8),
    9: (-32193.0 * _PI**4 - 1587600.0 + 761.0 * _PI**6 + 396900.0 * _PI**2) / (1587600.0 * _PI**9),
}

S_SWITCH = {1: 4.0, 2: 6.0, 4: 3.0}
CHEB_NODES = 28


class LimitError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Fredholm determinant


def _legendre(m: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def gap_fredholm(s: float, m_nodes: int = 40) -> float:
    """``G_2(s) = det(1 - K_2)`` on ``L^2(0, s)`` by Gauss-Legendre Nystrom."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if m_nodes < 10:
        raise ValueError("m_nodes must be at least 10")
    if s == 0:
        return 1.0
    x, w = _legendre(m_nodes, 0.0, s)
    r = np.sqrt(w)
    a = np.eye(m_nodes) - r[:, None] * sinc(x[:, None] - x[None, :]) * r[None, :]
    return float(np.linalg.det(a))


# ---------------------------------------------------------------------------
# series in W_k


@functools.lru_cache(maxsize=64)
def simplex_rule(d: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on ``{0 <= z_1 <= ... <= z_d <= 1}``.

    The cube is mapped by ``z_d = u_d, z_j = z_{j+1} u_j`` with Jacobian
    ``prod_j u_j**(j-1)``; each axis carries ``q`` Gauss-Legendre nodes.
    """
    x, w = _legendre(q, 0.0, 1.0)
    u = np.stack([g.ravel() for g in np.meshgrid(*([x] * d), indexing="ij")], axis=1)
    wt = np.ones(len(u))
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wt *= g.ravel()
    z = np.empty_like(u)
    z[:, d - 1] = u[:, d - 1]
    for j in range(d - 2, -1, -1):
        z[:, j] = z[:, j + 1] * u[:, j]
    for j in range(d):
        wt *= u[:, j] ** j
    z.setflags(write=False)
    wt.setflags(write=False)
    return z, wt


def _dot_w(beta: int, pts: np.ndarray, wt: np.ndarray) -> float:
    k = pts.shape[1]
    chunk = max(1, int(4e6 // (4 * k * k)))
    return math.fsum(
        float(np.dot(w_k_fast(beta, pts[c : c + chunk]), wt[c : c + chunk]))
        for c in range(0, len(pts), chunk)
    )


def _nodes(d: int) -> int:
    return NODES_BY_DIM.get(d, 3)


def cdf_term(beta: int, k: int, s: float) -> float:
    """``int_{0 <= z_2 <= ... <= z_k <= s} W_k(0, z_2, ..., z_k)``, ``k >= 2``."""
    if s == 0:
        return 0.0
    z, wt = simplex_rule(k - 1, _nodes(k - 1))
    pts = np.concatenate([np.zeros((len(z), 1)), s * z], axis=1)
    return s ** (k - 1) * _dot_w(beta, pts, wt)


def gap_term(beta: int, k: int, s: float) -> float:
    """``(1/k!) int_{(0,s)^k} W_k``, reduced by translation invariance."""
    if k == 0:
        return 1.0
    if k == 1:
        return s
    if s == 0:
        return 0.0
    z, wt = simplex_rule(k - 1, _nodes(k - 1))
    pts = np.concatenate([np.zeros((len(z), 1)), s * z], axis=1)
    return s**k * _dot_w(beta, pts, wt * (1.0 - z[:, -1]))


def density_term(beta: int, k: int, s: float) -> float:
    """``d/ds`` of :func:`cdf_term`: the last point pinned at ``s``."""
    if k == 2:
        return float(w_k_batch(beta, np.array([[0.0, s]]))[0])
    if s == 0:
        return 0.0
    z, wt = simplex_rule(k - 2, _nodes(k - 2))
    m = len(z)
    pts = np.concatenate([np.zeros((m, 1)), s * z, np.full((m, 1), s)], axis=1)
    return s ** (k - 2) * _dot_w(beta, pts, wt)


@dataclass(frozen=True)
class SeriesResult:
    """Truncated alternating series with its error information.

    ``bound`` is the size of the first omitted term; by the alternating
    structure the limit lies in ``enclosure``. ``theory_bound`` is the a-priori
    estimate from the growth constant ``|W_k| <= C**k k**(k/2)`` and is
    reported for information. ``flagged`` is set when ``bound > tol``.
    """

    value: float
    bound: float
    enclosure: tuple[float, float]
    theory_bound: float
    flagged: bool
    terms: tuple[float, ...]
    partial_sums: tuple[float, ...]

    def __float__(self) -> float:
        return self.value


def _finish(partials: list, terms: list, next_term: float, theory: float, tol: float) -> SeriesResult:
    value = partials[-1]
    bound = abs(next_term)
    lo, hi = sorted((value, value + next_term))
    return SeriesResult(value, bound, (lo, hi), theory, bound > tol, tuple(terms), tuple(partials))


def _run_series(term, k_first: int, base: float, k_max: Optional[int], tol: float, theory):
    """Sum ``base + sum_{k >= k_first} (-1)**k term(k)``.

    With ``k_max=None`` terms are added until one falls below ``tol``.
    The first omitted term is always evaluated to bound the remainder.
    """
    partials = [base]
    terms = []
    k = k_first
    limit = K_CAP if k_max is None else k_max
    while True:
        t = (-1) ** k * term(k)
        if k > limit:
            return _finish(partials, terms, t, theory(k), tol)
        terms.append(t)
        partials.append(partials[-1] + t)
        if k_max is None and abs(t) < tol and k >= k_first + 1:
            nxt = (-1) ** (k + 1) * term(k + 1)
            return _finish(partials, terms, nxt, theory(k + 1), tol)
        k += 1


def _growth(beta: int) -> float:
    return GROWTH_CONSTANT[2 if beta not in GROWTH_CONSTANT else beta]


def gap_series(beta: int, s: float, k_max: Optional[int] = None, tol: float = SERIES_TOL) -> SeriesResult:
    """``G_beta(s) = sum_k ((-1)**k / k!) int_{(0,s)^k} W_k``, truncated at ``k_max``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if k_max is not None and k_max < 1:
        raise ValueError("k_max must be at least 1")
    c = _growth(beta)

    def theory(k):
        return math.exp(k * math.log(c) + 0.5 * k * math.log(k) + k * math.log(max(s, 1e-300)) - math.lgamma(k + 1))

    return _run_series(lambda k: gap_term(beta, k, s), 2, 1.0 - s, k_max, tol, theory)


def spacing_cdf_series(beta: int, s: float, k_max: Optional[int] = None, tol: float = SERIES_TOL) -> SeriesResult:
    """Limiting spacing CDF ``sum_{k >= 2} (-1)**k int_{ordered} W_k(0, z_2..z_k)``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    c = _growth(beta)

    def theory(k):
        # C**k k**(k/2) s**(k-1) / (k-1)!
        return math.exp(k * math.log(c) + 0.5 * k * math.log(k) + (k - 1) * math.log(max(s, 1e-300)) - math.lgamma(k))

    if s == 0:
        return SeriesResult(0.0, 0.0, (0.0, 0.0), 0.0, False, (), (0.0,))
    return _run_series(lambda k: cdf_term(beta, k, s), 2, 0.0, k_max, tol, theory)


def spacing_density_series(beta: int, s: float, k_max: Optional[int] = None, tol: float = SERIES_TOL) -> SeriesResult:
    """Limiting spacing density, the term-wise derivative of :func:`spacing_cdf_series`."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    c = _growth(beta)

    def theory(k):
        return math.exp(k * math.log(c) + 0.5 * k * math.log(k) + (k - 2) * math.log(max(s, 1e-300)) - math.lgamma(max(k - 1, 1)))

    if s == 0:
        return SeriesResult(0.0, 0.0, (0.0, 0.0), 0.0, False, (), (0.0,))
    return _run_series(lambda k: density_term(beta, k, s), 2, 0.0, k_max, tol, theory)


# ---------------------------------------------------------------------------
# Painleve V, sigma form:  (t s'')**2 + 4 (t s' - s)(t s' - s + s'**2) = 0


def sigma_series(t, derivative: int = 0):
    """Boundary expansion of ``sigma`` (or its first/second derivative) at small ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for n, c in SIGMA_SERIES.items():
        if derivative == 0:
            out = out + c * t**n
        elif derivative == 1:
            out = out + n * c * t ** (n - 1)
        elif n >= 2:
            out = out + n * (n - 1) * c * t ** (n - 2)
    return out


def _sigma_log_integral(t):
    # int_0^t sigma(u)/u du from the expansion
    t = np.asarray(t, dtype=float)
    return sum(c * t**n / n for n, c in SIGMA_SERIES.items())


def _sigma_rhs_parts(t, sig, dsig):
    a = t * dsig - sig
    disc = -a * (a + dsig * dsig)
    return disc, a


def sigma_form_residual(t, sig, dsig, ddsig):
    """Left side of the sigma form; zero along the solution."""
    a = t * dsig - sig
    return (t * ddsig) ** 2 + 4.0 * a * (a + dsig * dsig)


@dataclass
class SigmaTable:
    """Solution of the sigma form on ``[T0, t_max]`` with dense output.

    ``sigma``/``sigma_prime`` are stored on ``grid``; the continuous solution
    object also carries ``q(t) = int_{T0}^t sigma(u)/u du``.
    """

    grid: np.ndarray
    sigma: np.ndarray
    sigma_prime: np.ndarray
    t_max: float
    tol: float
    max_residual: float
    _sol: object = field(repr=False, default=None)

    def state(self, t):
        """``(sigma, sigma', q)`` at ``t`` (series branch below ``T0``)."""
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t_max * (1 + 1e-12)) or np.any(t < 0):
            raise ValueError(f"t outside table range [0, {self.t_max}]")
        small = t < T0
        tt = np.where(small, T0, np.minimum(t, self.t_max))
        y = self._sol(tt.ravel()).reshape((3,) + tt.shape)
        sig = np.where(small, sigma_series(t), y[0])
        dsig = np.where(small, sigma_series(t, 1), y[1])
        logint = np.where(small, _sigma_log_integral(t), _sigma_log_integral(T0) + y[2])
        return sig, dsig, logint


def painleve_sigma(t_max: float = T_MAX, tol: float = 1e-12) -> SigmaTable:
    """Integrate the sigma form from ``T0`` with boundary-series initial data.

    The branch ``sigma'' = -(2/t) sqrt(-(t s' - s)(t s' - s + s'**2))`` is the
    one continuous with the expansion (``sigma''(0) = -2/pi**2 < 0``). A
    discriminant more negative than ``tol`` relative to its scale aborts.
    """
    if t_max > T_MAX:
        raise ValueError(f"t_max must be <= {T_MAX}")
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    if t_max <= T0:
        raise ValueError(f"t_max must exceed {T0}")
    worst = [0.0]

    def rhs(t, y):
        sig, dsig, _ = y
        disc, a = _sigma_rhs_parts(t, sig, dsig)
        scale = abs(a) * (abs(a) + dsig * dsig) + 1e-300
        if disc < 0:
            if -disc > 1e3 * tol * scale:
                raise LimitError(
                    f"sigma-form discriminant {disc:.3e} < 0 at t={t:.6g} "
                    f"(sigma={sig:.6g}, sigma'={dsig:.6g}); left the solution branch")
            worst[0] = max(worst[0], -disc / scale)
            disc = 0.0
        return [dsig, -2.0 / t * math.sqrt(disc), sig / t]

    y0 = [float(sigma_series(T0)), float(sigma_series(T0, 1)), 0.0]
    sol = solve_ivp(rhs, (T0, t_max), y0, method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol.success:
        raise LimitError(f"sigma-form integration failed: {sol.message}")
    grid = sol.t
    sig, dsig = sol.y[0], sol.y[1]
    ddsig = np.array([rhs(t, y)[1] for t, y in zip(grid, sol.y.T)])
    res = sigma_form_residual(grid, sig, dsig, ddsig)
    scale = np.abs(grid * dsig - sig) * (np.abs(grid * dsig - sig) + dsig**2) + 1e-300
    max_res = float(max(np.max(np.abs(res) / scale), 4 * worst[0]))
    return SigmaTable(grid, sig, dsig, float(t_max), tol, max_res, sol.sol)


@functools.lru_cache(maxsize=4)
def default_sigma_table() -> SigmaTable:
    return painleve_sigma(T_MAX, 1e-12)


def gap_painleve(s, table: Optional[SigmaTable] = None):
    """``(G_2, G_2', G_2'')`` at ``s`` from the sigma form.

    ``G_2(s) = exp(int_0^{pi s} sigma(t)/t dt)``, ``G_2' = G_2 sigma(pi s)/s``
    and ``G_2'' = G_2 [(sigma**2 - sigma)/s**2 + pi sigma'(pi s)/s]``.
    """
    table = table or default_sigma_table()
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("s must be nonnegative")
    if np.any(np.pi * s_arr > table.t_max * (1 + 1e-12)):
        raise ValueError(f"s beyond table range {table.t_max / np.pi:.4g}")
    t = np.pi * s_arr
    sig, dsig, logint = table.state(t)
    g = np.exp(logint)
    tiny = s_arr < 1e-12
    ss = np.where(tiny, 1.0, s_arr)
    # sigma(t)/s = pi sigma(t)/t; use the series ratio at tiny s
    ratio = np.where(tiny, -1.0, sig / ss)
    g1 = g * ratio
    g2 = np.where(tiny, 0.0, g * ((sig * sig - sig) / (ss * ss) + np.pi * dsig / ss))
    if np.ndim(s) == 0:
        return float(g), float(g1), float(g2)
    return g, g1, g2


# ---------------------------------------------------------------------------
# Wigner surmise


def surmise_constants(beta: float) -> tuple[float, float]:
    """``(a, b)`` with ``int p = 1`` and ``int s p = 1`` for ``p = a s**beta exp(-b s**2)``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    b = (gamma((beta + 2) / 2) / gamma((beta + 1) / 2)) ** 2
    a = 2.0 * b ** ((beta + 1) / 2) / gamma((beta + 1) / 2)
    return float(a), float(b)


def wigner_surmise(beta: float, s):
    """Generalised Wigner surmise density ``a s**beta exp(-b s**2)``."""
    a, b = surmise_constants(beta)
    s = np.asarray(s, dtype=float)
    out = a * np.maximum(s, 0.0) ** beta * np.exp(-b * s * s)
    return float(out) if out.ndim == 0 else out


def surmise_cdf(beta: float, s):
    _, b = surmise_constants(beta)
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    out = gammainc((beta + 1) / 2, b * s * s)
    return float(out) if out.ndim == 0 else out


def surmise_sf(beta: float, s):
    """``1 - surmise_cdf`` without cancellation."""
    _, b = surmise_constants(beta)
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    out = gammaincc((beta + 1) / 2, b * s * s)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# tabulated laws

METHODS = ("fredholm-painleve", "pfaffian-series", "wigner-surmise")


def _monotone_slopes(x, y, m):
    """Fritsch-Carlson limited slopes: the Hermite interpolant of nondecreasing ``y`` stays nondecreasing."""
    m = np.maximum(np.asarray(m, dtype=float), 0.0).copy()
    delta = np.diff(y) / np.diff(x)
    flat = delta <= 0
    m[:-1][flat] = 0.0
    m[1:][flat] = 0.0
    d = np.where(flat, 1.0, delta)
    a, b = m[:-1] / d, m[1:] / d
    r = np.hypot(a, b)
    scale = np.where((r > 3.0) & ~flat, 3.0 / np.maximum(r, 3.0), 1.0)
    # an interior node takes the stricter limit of its two intervals
    m[:-1] *= scale
    m[1:] *= scale
    return m


@dataclass
class LimitLaw:
    beta: float
    grid: np.ndarray
    cdf: np.ndarray
    density: np.ndarray
    method: str
    err_estimate: np.ndarray
    s_switch: float = math.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        slopes = _monotone_slopes(self.grid, self.cdf, self.density)
        self._spline = CubicHermiteSpline(self.grid, self.cdf, slopes)
        # upper half interpolates 1 - F so rounding near 1 cannot break monotonicity
        self._sf_spline = CubicHermiteSpline(self.grid, 1.0 - self.cdf, -slopes)
        j = min(int(np.searchsorted(self.cdf, 0.5)), len(self.grid) - 1)
        self._s_half = float(self.grid[j])

    @property
    def s_max(self) -> float:
        return float(self.grid[-1])

    def cdf_at(self, s):
        """CDF at arbitrary ``s``; scaled surmise tail beyond the grid."""
        s = np.asarray(s, dtype=float)
        inside = np.clip(s, 0.0, self.s_max)
        val = np.where(inside < self._s_half, self._spline(inside), 1.0 - self._sf_spline(inside))
        val = np.clip(val, 0.0, 1.0)
        beyond = s > self.s_max
        if np.any(beyond):
            tail = 1.0 - (1.0 - self.cdf[-1]) * surmise_sf(self.beta, s) / max(surmise_sf(self.beta, self.s_max), 1e-300)
            val = np.where(beyond, tail, val)
        val = np.where(s <= 0, 0.0, val)
        return float(val) if val.ndim == 0 else val

    def mean(self) -> float:
        """``int s dF`` on the grid plus the tail mass placed at ``s_max``."""
        return float(trapezoid(self.grid * self.density, self.grid) + self.s_max * (1.0 - self.cdf[-1]))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("s,cdf,density,err\n")
            for row in zip(self.grid, self.cdf, self.density, self.err_estimate):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def check_invariants(self, tol: float = 1e-9) -> list[str]:
        """Violated type invariants (empty when all hold)."""
        problems = []
        if abs(self.cdf[0]) > tol:
            problems.append(f"cdf(0) = {self.cdf[0]}")
        if np.any(np.diff(self.cdf) < -tol):
            problems.append("cdf decreases")
        if np.any(self.cdf < -tol) or np.any(self.cdf > 1 + tol):
            problems.append("cdf outside [0, 1]")
        if self.s_max >= 6 and self.cdf[-1] < 0.999:
            problems.append(f"cdf(s_max) = {self.cdf[-1]}")
        if np.any(self.density < -tol):
            problems.append("negative density")
        trap = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(self.grid) * (self.density[1:] + self.density[:-1]))])
        h = np.max(np.diff(self.grid))
        slack = self.err_estimate + h * h * np.max(np.abs(np.gradient(self.density, self.grid))) + tol
        if np.any(np.abs(trap - self.cdf) > slack + 1e-4):
            problems.append("density does not integrate to cdf")
        if abs(self.mean() - 1.0) > 1e-2:
            problems.append(f"mean spacing {self.mean()}")
        return problems


def _cache_dir() -> Path:
    root = os.environ.get("RMT_CACHE_DIR")
    return Path(root) if root else Path.home() / ".cache" / "rmtspacing"


def _cache_key(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def _law_from_npz(path: Path) -> LimitLaw:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        return LimitLaw(float(z["beta"]), z["grid"], z["cdf"], z["density"], str(z["method"]),
                        z["err"], float(z["s_switch"]), meta)


def _law_to_npz(law: LimitLaw, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".{os.getpid()}.tmp.npz")
    np.savez(tmp, beta=law.beta, grid=law.grid, cdf=law.cdf, density=law.density, method=law.method,
             err=law.err_estimate, s_switch=law.s_switch, meta=json.dumps(law.meta))
    os.replace(tmp, path)


def _grid(s_max: float, step: float) -> np.ndarray:
    n = max(2, int(round(s_max / step)) + 1)
    return np.linspace(0.0, s_max, n)


def _surmise_law(beta: float, s_max: float, step: float) -> LimitLaw:
    grid = _grid(s_max, step)
    return LimitLaw(beta, grid, surmise_cdf(beta, grid), wigner_surmise(beta, grid), "wigner-surmise",
                    np.zeros_like(grid), math.inf, {})


def _stitch_tail(beta, grid, cdf, dens, err, s_sw, cdf_sw, dens_sw):
    tail = grid > s_sw
    sf_sw = max(surmise_sf(beta, s_sw), 1e-300)
    # quadrature error can push the series CDF a hair above one
    scale = max(1.0 - cdf_sw, 0.0) / sf_sw
    cdf[tail] = 1.0 - scale * surmise_sf(beta, grid[tail])
    dens[tail] = scale * wigner_surmise(beta, grid[tail])
    jump = abs(dens_sw - scale * wigner_surmise(beta, s_sw))
    # the tail carries at most the remaining mass
    err[tail] = np.maximum(err[tail], abs(1.0 - cdf_sw))
    return jump


def _tidy(cdf, dens, err):
    """Clip to [0, 1], enforce monotonicity and nonnegative density; fold the changes into ``err``."""
    fixed = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    err += np.abs(fixed - cdf)
    cdf[:] = fixed
    neg = np.minimum(dens, 0.0)
    dens[:] = np.maximum(dens, 0.0)
    return float(np.max(np.abs(neg)))


def _painleve_law(s_max: float, step: float) -> LimitLaw:
    grid = _grid(s_max, step)
    s_sw = min(s_max, S_SWITCH[2], T_MAX / np.pi)
    inside = grid <= s_sw
    cdf = np.empty_like(grid)
    dens = np.empty_like(grid)
    err = np.zeros_like(grid)
    _, g1, g2 = gap_painleve(grid[inside])
    cdf[inside] = 1.0 + g1
    dens[inside] = g2
    # Nystrom determinant gives an independent error gauge at a few points
    probe = np.linspace(0.25, s_sw, 8)
    h = 1e-4
    fd = np.array([(gap_fredholm(p + h) - gap_fredholm(p - h)) / (2 * h) for p in probe])
    gauge = float(np.max(np.abs(fd - gap_painleve(probe)[1])))
    err[inside] = gauge
    jump = 0.0
    if s_sw < s_max:
        _, g1s, g2s = gap_painleve(s_sw)
        jump = _stitch_tail(2, grid, cdf, dens, err, s_sw, 1.0 + g1s, g2s)
    clipped = _tidy(cdf, dens, err)
    return LimitLaw(2.0, grid, cdf, dens, "fredholm-painleve", err, s_sw,
                    {"stitch_jump": jump, "fredholm_gauge": gauge, "density_clip": clipped})


def _cheb_lobatto(n: int, a: float, b: float) -> np.ndarray:
    x = np.cos(np.pi * np.arange(n) / (n - 1))[::-1]
    return a + 0.5 * (b - a) * (x + 1.0)


def _series_law(beta: int, s_max: float, step: float, n_nodes: int, tol: float) -> LimitLaw:
    grid = _grid(s_max, step)
    s_sw = min(s_max, S_SWITCH[beta])
    nodes = _cheb_lobatto(n_nodes, 0.0, s_sw)
    cdf_n = np.empty(n_nodes)
    dens_n = np.empty(n_nodes)
    bound_n = np.empty(n_nodes)
    for i, s in enumerate(nodes):
        c = spacing_cdf_series(beta, float(s), tol=tol)
        d = spacing_density_series(beta, float(s), tol=tol)
        cdf_n[i], dens_n[i] = c.value, d.value
        bound_n[i] = c.bound
    cdf_i = BarycentricInterpolator(nodes, cdf_n)
    dens_i = BarycentricInterpolator(nodes, dens_n)
    inside = grid <= s_sw
    cdf = np.empty_like(grid)
    dens = np.empty_like(grid)
    err = np.zeros_like(grid)
    cdf[inside] = cdf_i(grid[inside])
    dens[inside] = dens_i(grid[inside])
    # consistency gauge: the CDF series against the integrated density series
    fine = np.linspace(0.0, s_sw, 2001)
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(fine) * (dens_i(fine)[1:] + dens_i(fine)[:-1]))])
    gauge = float(np.max(np.abs(integ - cdf_i(fine))))
    err[inside] = gauge + float(np.max(bound_n))
    jump = 0.0
    if s_sw < s_max:
        jump = _stitch_tail(beta, grid, cdf, dens, err, s_sw, float(cdf_n[-1]), float(dens_n[-1]))
    cdf[0] = 0.0
    clipped = _tidy(cdf, dens, err)
    return LimitLaw(float(beta), grid, cdf, dens, "pfaffian-series", err, s_sw,
                    {"stitch_jump": jump, "consistency_gauge": gauge, "nodes": n_nodes, "density_clip": clipped,
                     "max_enclosure": float(np.max(bound_n))})


def limit_law(beta: float, s_max: float = 6.0, mode: str = "exact", step: float = 0.01,
              n_nodes: int = CHEB_NODES, tol: float = SERIES_TOL, cache: bool = True) -> LimitLaw:
    """Tabulated limiting spacing law ``mu_beta`` on ``[0, s_max]``.

    ``mode="exact"`` (beta in {1, 2, 4}) uses Painleve V for beta = 2 and the
    Pfaffian series for beta = 1, 4, both continued beyond their switch point
    by a rescaled surmise tail. ``mode="surmise"`` uses the Wigner surmise.
    Exact laws are cached on disk under ``$RMT_CACHE_DIR``.
    """
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    if mode == "surmise":
        return _surmise_law(beta, s_max, step)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if beta not in (1, 2, 4):
        raise ValueError("exact laws exist for beta in {1, 2, 4}; use mode='surmise'")
    beta = int(beta)
    params = {"v": CACHE_VERSION, "beta": beta, "s_max": s_max, "step": step, "mode": mode,
              "n_nodes": n_nodes, "tol": tol, "nodes_by_dim": NODES_BY_DIM, "s_switch": S_SWITCH[beta]}
    path = _cache_dir() / f"law-b{beta}-{_cache_key(params)}.npz"
    if cache and path.exists():
        return _law_from_npz(path)
    if beta == 2:
        law = _painleve_law(s_max, step)
    else:
        law = _series_law(beta, s_max, step, n_nodes, tol)
    law.meta["params"] = json.loads(json.dumps(params))  # same form as a cache load
    if cache:
        _law_to_npz(law, path)
    return law
