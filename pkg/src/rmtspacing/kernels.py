"""Sine kernel, limiting 2x2 matrix kernels, correlation determinants/Pfaffians
and the finite-N GUE kernel.

Conventions
-----------
``sinc(u) = sin(pi u) / (pi u)`` is the bulk sine kernel ``K_2(x, y)`` with
``u = x - y``. The matrix kernels for beta = 1, 4 are::

    K_beta(x, y) = [[S(x, y), D(x, y)],
                    [I(x, y), S(y, x)]]

    beta = 1:  S = sinc(u),   D = d/du sinc(u),      I = Si(pi u)/pi - sgn(u)/2
    beta = 4:  S = sinc(2u),  D = d/du sinc(2u),     I = Si(2 pi u)/(2 pi)

with ``sgn(0) = 0``. The k-point limit correlation ``W_k`` is
``det[sinc(t_i - t_j)]`` for beta = 2 and ``Pf[(K_beta(t_i, t_j)) J]`` with
``J = diag(sigma, ..., sigma)``, ``sigma = [[0, 1], [-1, 0]]`` for beta = 1, 4.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

SINC_TAYLOR_RADIUS = 1e-4
# in units of z = pi * u; the cancellation in (z cos z - sin z)/z**2 needs a wide series branch
DSINC_TAYLOR_RADIUS = 0.5
SI_SERIES_RADIUS = 6.0

# Hadamard-type constants: |W_k| <= C**k * k**(k/2) for all real points
GROWTH_CONSTANT = {1: 1.70, 2: 1.0, 4: 2.92}


class KernelError(ArithmeticError):
    pass


def sine_kernel(x, y):
    """``sin(pi (x - y)) / (pi (x - y))`` with the removable singularity filled in."""
    return sinc(np.subtract(x, y))


def sinc(u):
    u = np.asarray(u, dtype=float)
    z = np.pi * u
    small = np.abs(u) < SINC_TAYLOR_RADIUS
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 - z2 / 6.0 + z2 * z2 / 120.0, np.sin(zs) / zs)


def _dsinc_z(z):
    # d/dz (sin z / z)
    small = np.abs(z) < DSINC_TAYLOR_RADIUS
    zs = np.where(small, 1.0, z)
    direct = (zs * np.cos(zs) - np.sin(zs)) / (zs * zs)
    z2 = z * z
    series = np.zeros_like(z)
    term = -z / 6.0  # (-1)**n z**(2n-1) / (2n+1)! at n = 1
    for n in range(1, 12):
        series = series + 2 * n * term
        term = -term * z2 / ((2 * n + 2) * (2 * n + 3))
    return np.where(small, series, direct)


def dsinc(u):
    """Derivative of :func:`sinc` with respect to its argument."""
    u = np.asarray(u, dtype=float)
    return np.pi * _dsinc_z(np.pi * u)


def sine_integral(z):
    """``Si(z) = int_0^z sin(t)/t dt``.

    Power series for ``|z| <= 6``; beyond that the auxiliary functions are
    evaluated through the continued fraction of ``E1(i z)``.
    """
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    out = np.empty_like(a)
    small = a <= SI_SERIES_RADIUS
    if np.any(small):
        x = a[small]
        term = x.copy()
        acc = x.copy()
        x2 = x * x
        for n in range(1, 40):
            term = -term * x2 / ((2 * n) * (2 * n + 1))
            acc = acc + term / (2 * n + 1)
        out[small] = acc
    if np.any(~small):
        out[~small] = _si_continued_fraction(a[~small])
    return np.sign(z) * out


def _si_continued_fraction(t):
    b = 1.0 + 1j * t
    c = np.full(t.shape, 1e300, dtype=complex)
    d = 1.0 / b
    h = d.copy()
    for i in range(2, 400):
        a = -float((i - 1) ** 2)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h = h * delta
        if np.max(np.abs(delta - 1.0)) < 1e-15:
            break
    else:
        raise KernelError("sine integral continued fraction did not converge")
    h = (np.cos(t) - 1j * np.sin(t)) * h
    return 0.5 * np.pi + h.imag


@dataclass
class MatrixKernelValue:
    """Entries of ``K_beta(x, y) = [[S, D], [I, St]]`` where ``St = S(y, x)``."""

    S: np.ndarray
    D: np.ndarray
    I: np.ndarray
    St: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.S, self.D], [self.I, self.St]], dtype=float)


def _kernel_entries(beta, u):
    if beta == 1:
        s = sinc(u)
        return s, dsinc(u), sine_integral(np.pi * u) / np.pi - 0.5 * np.sign(u), s
    if beta == 4:
        s = sinc(2.0 * u)
        return s, 2.0 * dsinc(2.0 * u), sine_integral(2.0 * np.pi * u) / (2.0 * np.pi), s
    raise ValueError(f"matrix kernels exist for beta in {{1, 4}}, got {beta}")


def matrix_kernel(beta: int, x, y) -> MatrixKernelValue:
    u = np.subtract(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return MatrixKernelValue(*_kernel_entries(beta, u))


def _check_skew(a, rtol=1e-10):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if a.shape[0] % 2:
        raise ValueError("Pfaffian requires even dimension")
    scale = np.max(np.abs(a), initial=0.0)
    if np.max(np.abs(a + a.T), initial=0.0) > rtol * max(scale, 1e-300):
        raise ValueError("matrix is not skew-symmetric")
    return a


def pfaffian(a) -> float:
    """Pfaffian by skew-symmetric Gaussian elimination with pivoting (Parlett-Reid)."""
    a = _check_skew(a).copy()
    n = a.shape[0]
    pf = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1 :, k])))
        if kp != k + 1:
            a[[k + 1, kp], :] = a[[kp, k + 1], :]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            pf = -pf
        if a[k + 1, k] == 0.0:
            return 0.0
        pf *= a[k, k + 1]
        if k + 2 < n:
            tau = a[k, k + 2 :] / a[k, k + 1]
            col = a[k + 2 :, k + 1]
            a[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return float(pf)


@njit(cache=True, nogil=True)
def _pf_inplace(a):
    # Parlett-Reid elimination on a single skew matrix; destroys a
    n = a.shape[0]
    pf = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1
        big = abs(a[k + 1, k])
        for i in range(k + 2, n):
            if abs(a[i, k]) > big:
                big = abs(a[i, k])
                kp = i
        if kp != k + 1:
            for j in range(n):
                t = a[k + 1, j]
                a[k + 1, j] = a[kp, j]
                a[kp, j] = t
            for i in range(n):
                t = a[i, k + 1]
                a[i, k + 1] = a[i, kp]
                a[i, kp] = t
            pf = -pf
        piv = a[k, k + 1]
        if piv == 0.0:
            return 0.0
        pf *= piv
        for i in range(k + 2, n):
            ti = a[k, i] / piv
            ci = a[i, k + 1]
            for j in range(k + 2, n):
                a[i, j] += ti * a[j, k + 1] - ci * a[k, j] / piv
    return pf


@njit(cache=True, nogil=True)
def _pfaffian_batch(a):
    m = a.shape[0]
    out = np.empty(m)
    for b in range(m):
        out[b] = _pf_inplace(a[b])
    return out


def pfaffian_batch(a) -> np.ndarray:
    """Pfaffians of a stack of skew-symmetric matrices, shape ``(m, 2n, 2n)``."""
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[1] % 2:
        raise ValueError("expected a stack of even-dimensional square matrices")
    return _pfaffian_batch(a)


def _permutation_sign(p) -> int:
    sign = 1
    seen = [False] * len(p)
    for i in range(len(p)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = p[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def pfaffian_by_definition(a) -> float:
    """Signed-permutation sum ``(2^m m!)^-1 sum sgn(s) a[s1,s2] ... a[s(2m-1),s(2m)]``.

    Factorial cost; dimension at most 8.
    """
    a = _check_skew(a)
    n = a.shape[0]
    if n > 8:
        raise ValueError("definition sum is limited to dimension <= 8")
    m = n // 2
    total = 0.0
    for p in itertools.permutations(range(n)):
        prod = 1.0
        for i in range(m):
            prod *= a[p[2 * i], p[2 * i + 1]]
        total += _permutation_sign(p) * prod
    return total / (2**m * math.factorial(m))


def _kj_matrix(beta, points):
    """Stack of ``(K_beta(t_i, t_j)) J`` for points of shape ``(M, k)``."""
    m, k = points.shape
    u = points[:, :, None] - points[:, None, :]
    s, d, i, st = _kernel_entries(beta, u)
    a = np.empty((m, 2 * k, 2 * k))
    # [[S, D], [I, St]] @ [[0, 1], [-1, 0]] = [[-D, S], [-St, I]]
    a[:, 0::2, 0::2] = -d
    a[:, 0::2, 1::2] = s
    a[:, 1::2, 0::2] = -st
    a[:, 1::2, 1::2] = i
    return a


@njit(cache=True, nogil=True)
def _si_scalar(x):
    a = abs(x)
    if a <= 6.0:
        term = a
        acc = a
        a2 = a * a
        for n in range(1, 40):
            term = -term * a2 / ((2 * n) * (2 * n + 1))
            acc += term / (2 * n + 1)
    else:
        b = 1.0 + 1j * a
        c = 1e300 + 0j
        d = 1.0 / b
        h = d
        for i in range(2, 400):
            an = -float((i - 1) ** 2)
            b = b + 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            h = h * delta
            if abs(delta - 1.0) < 1e-15:
                break
        h = (math.cos(a) - 1j * math.sin(a)) * h
        acc = 0.5 * math.pi + h.imag
    return math.copysign(acc, x) if x != 0.0 else 0.0


@njit(cache=True, nogil=True)
def _sinc_scalar(u):
    if abs(u) < 1e-4:
        z2 = (math.pi * u) ** 2
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0
    z = math.pi * u
    return math.sin(z) / z


@njit(cache=True, nogil=True)
def _dsinc_z_scalar(z):
    if abs(z) < 0.5:
        z2 = z * z
        acc = 0.0
        term = -z / 6.0
        for n in range(1, 12):
            acc += 2 * n * term
            term = -term * z2 / ((2 * n + 2) * (2 * n + 3))
        return acc
    return (z * math.cos(z) - math.sin(z)) / (z * z)


@njit(cache=True, nogil=True)
def _entries_scalar(beta, u):
    # (S, D, I) of K_beta at separation u
    if beta == 1:
        sg = 0.0 if u == 0.0 else math.copysign(0.5, u)
        return (_sinc_scalar(u), math.pi * _dsinc_z_scalar(math.pi * u),
                _si_scalar(math.pi * u) / math.pi - sg)
    return (_sinc_scalar(2.0 * u), 2.0 * math.pi * _dsinc_z_scalar(2.0 * math.pi * u),
            _si_scalar(2.0 * math.pi * u) / (2.0 * math.pi))


@njit(cache=True, nogil=True)
def _w_pfaffian_points(beta, pts):
    m, k = pts.shape
    out = np.empty(m)
    a = np.zeros((2 * k, 2 * k))
    for b in range(m):
        for i in range(k):
            a[2 * i, 2 * i] = 0.0
            a[2 * i + 1, 2 * i + 1] = 0.0
            a[2 * i, 2 * i + 1] = 1.0
            a[2 * i + 1, 2 * i] = -1.0
            for j in range(i + 1, k):
                s, d, v = _entries_scalar(beta, pts[b, i] - pts[b, j])
                # block (i, j) = [[-D, S], [-S, I]]; block (j, i) by parity of D, I
                a[2 * i, 2 * j] = -d
                a[2 * i, 2 * j + 1] = s
                a[2 * i + 1, 2 * j] = -s
                a[2 * i + 1, 2 * j + 1] = v
                a[2 * j, 2 * i] = d
                a[2 * j, 2 * i + 1] = s
                a[2 * j + 1, 2 * i] = -s
                a[2 * j + 1, 2 * i + 1] = -v
        out[b] = _pf_inplace(a)
    return out


def w_k_fast(beta: int, points) -> np.ndarray:
    """Compiled equivalent of :func:`w_k_batch` without the skew check.

    Only the ``i < j`` kernel entries are evaluated; the rest follow from
    ``S`` even and ``D``, ``I`` odd in ``t_i - t_j``.
    """
    points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if beta == 2:
        return np.linalg.det(sinc(points[:, :, None] - points[:, None, :]))
    if beta not in (1, 4):
        raise ValueError(f"beta must be 1, 2 or 4, got {beta}")
    return _w_pfaffian_points(beta, points)


def w_k_batch(beta: int, points, check: bool = True) -> np.ndarray:
    """``W_k^(beta)`` at each row of ``points`` (shape ``(M, k)``)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] < 1:
        raise ValueError("need at least one point")
    if beta == 2:
        return np.linalg.det(sinc(points[:, :, None] - points[:, None, :]))
    if beta not in (1, 4):
        raise ValueError(f"beta must be 1, 2 or 4, got {beta}")
    a = _kj_matrix(beta, points)
    if check:
        asym = np.max(np.abs(a + np.swapaxes(a, 1, 2)))
        if asym > 1e-8 * max(1.0, np.max(np.abs(a))):
            raise KernelError(f"K J is not skew-symmetric (defect {asym:.3e})")
    return _pfaffian_batch(a)


def w_k(beta: int, points) -> float:
    """Limiting k-point correlation ``W_k^(beta)(t_1, ..., t_k)``."""
    return float(w_k_batch(beta, np.asarray(points, dtype=float)[None, :])[0])


# ---------------------------------------------------------------------------
# finite-N GUE kernel, weight exp(-N x**2 / 2), limiting support [-2, 2]


def gue_density(a: float) -> float:
    """Semicircle density for the weight ``exp(-N x**2 / 2)``."""
    return math.sqrt(max(4.0 - a * a, 0.0)) / (2.0 * math.pi)


def _hermite_table(n_max: int, x):
    """Orthonormal functions ``phi_j(x)``, ``j = 0..n_max``, in scaled form.

    Returns ``(mant, logscale)`` with ``phi_j = mant[j] * exp(logscale[j])``,
    for the weight ``exp(-N x**2 / 2)`` where ``N = n_max``.
    """
    x = np.asarray(x, dtype=float)
    n = n_max
    z = math.sqrt(n) * x
    mant = np.empty((n + 1,) + x.shape)
    logs = np.empty((n + 1,) + x.shape)
    # phi_j(x) = N**(1/4) psi_j(sqrt(N) x), psi_0 = exp(-z**2/4) / (2 pi)**(1/4)
    cur_log = -0.25 * z * z - 0.25 * math.log(2 * math.pi) + 0.25 * math.log(n)
    prev = np.zeros_like(z)
    cur = np.ones_like(z)
    mant[0], logs[0] = cur, cur_log
    for j in range(n):
        nxt = (z * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
        prev, cur = cur, nxt
        big = np.maximum(np.abs(cur), np.abs(prev))
        rescale = big > 1e50
        if np.any(rescale):
            f = np.where(rescale, big, 1.0)
            cur = cur / f
            prev = prev / f
            cur_log = cur_log + np.log(f)
        mant[j + 1], logs[j + 1] = cur, cur_log
    return mant, logs


def gue_kernel(n: int, x, y, method: str = "auto"):
    """Unscaled ``K_{N,2}(x, y) = sum_{j<N} phi_j(x) phi_j(y)``.

    ``method`` is ``"sum"``, ``"cd"`` (Christoffel-Darboux) or ``"auto"``
    (Christoffel-Darboux unless ``|x - y|`` is tiny).
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(np.abs(x) > 20.0) or np.any(np.abs(y) > 20.0):
        raise OverflowError("evaluation point far outside the support [-2, 2]")
    mx, lx = _hermite_table(n, x)
    my, ly = _hermite_table(n, y)
    if method == "sum":
        return np.sum(mx[:n] * my[:n] * np.exp(lx[:n] + ly[:n]), axis=0)
    px = mx * np.exp(lx)
    py = my * np.exp(ly)
    diff = x - y
    if method == "cd":
        return (px[n] * py[n - 1] - px[n - 1] * py[n]) / diff
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    near = np.abs(diff) * n < 1e-2
    safe = np.where(near, 1.0, diff)
    cd = (px[n] * py[n - 1] - px[n - 1] * py[n]) / safe
    if np.any(near):
        direct = np.sum(mx[:n] * my[:n] * np.exp(lx[:n] + ly[:n]), axis=0)
        return np.where(near, direct, cd)
    return cd


def finite_n_gue_kernel(n: int, x, y, a: float = 0.0, method: str = "auto"):
    """Rescaled kernel ``K_{N,2}(a + x/(N psi(a)), a + y/(N psi(a))) / (N psi(a))``."""
    c = n * gue_density(a)
    if c <= 0:
        raise ValueError("centre must lie inside the support (-2, 2)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return gue_kernel(n, a + x / c, a + y / c, method=method) / c


def b_nk_gue(n: int, k: int, points, a: float = 0.0) -> float:
    """Rescaled GUE k-point correlation ``B_{N,k}^(2)`` at rescaled points."""
    t = np.asarray(points, dtype=float)
    if t.shape != (k,):
        raise ValueError(f"expected {k} points")
    if k > n:
        raise ValueError("k must not exceed N")
    kernel = finite_n_gue_kernel(n, t[:, None], t[None, :], a=a)
    return float(np.linalg.det(kernel))
