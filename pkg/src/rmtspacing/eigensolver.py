"""Eigenvalues of sampled matrices, delivered as ordered normalised spectra.

Two independent tridiagonal solvers are provided: implicit-shift QL (the
default) and Sturm-sequence bisection. Dense Hermitian input goes through
LAPACK by default, or through the Householder reduction below followed by QL.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from numba import njit

from .sampler import EnsembleSpec, MatrixSample

EPS = np.finfo(float).eps


class EigenError(ArithmeticError):
    pass


class QuaternionPairingError(EigenError):
    """The doubled spectrum of a quaternion embedding did not pair up."""


@njit(cache=True, nogil=True)
def _ql_implicit(d, e):
    # d: diagonal (overwritten with eigenvalues); e[i] couples d[i], d[i+1]; e[n-1] = 0
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                if abs(e[m]) <= eps * (abs(d[m]) + abs(d[m + 1])):
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 60:
                return False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            restart = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    restart = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if restart:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return True


@njit(cache=True, nogil=True)
def _sturm_count(d, e2, x):
    # number of eigenvalues strictly below x (LDL^T inertia)
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    for i in range(1, d.shape[0]):
        if q == 0.0:
            q = 1e-300
        q = d[i] - x - e2[i - 1] / q
        if q < 0.0:
            count += 1
    return count


@njit(cache=True, nogil=True)
def _bisect_all(d, e, tol):
    n = d.shape[0]
    e2 = e * e
    lo = np.inf
    hi = -np.inf
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < n - 1:
            r += abs(e[i])
        lo = min(lo, d[i] - r)
        hi = max(hi, d[i] + r)
    span = max(abs(lo), abs(hi), 1e-300)
    out = np.empty(n)
    for k in range(n):
        a = lo
        b = hi
        while b - a > tol * span:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            if _sturm_count(d, e2, mid) > k:
                b = mid
            else:
                a = mid
        out[k] = 0.5 * (a + b)
    return out


def _check_tridiagonal(diag, offdiag):
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    if diag.ndim != 1 or offdiag.shape != (max(diag.size - 1, 0),):
        raise ValueError("expected n diagonal and n-1 off-diagonal entries")
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(offdiag))):
        raise ValueError("non-finite entries in tridiagonal matrix")
    return diag, offdiag


def eigenvalues_tridiagonal(diag, offdiag, method: str = "ql") -> np.ndarray:
    """All eigenvalues of a real symmetric tridiagonal matrix, ascending.

    ``method`` is ``"ql"`` (implicit shifts) or ``"bisection"`` (Sturm).
    """
    diag, offdiag = _check_tridiagonal(diag, offdiag)
    n = diag.size
    if n == 0:
        return np.empty(0)
    if method == "bisection":
        return _bisect_all(diag.copy(), offdiag.copy(), 4 * EPS)
    if method != "ql":
        raise ValueError(f"unknown method {method!r}")
    d = diag.copy()
    e = np.zeros(n)
    e[: n - 1] = offdiag
    if not _ql_implicit(d, e):
        raise EigenError("QL iteration failed to converge")
    d.sort()
    return d


def householder_tridiagonal(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Reduce a Hermitian matrix to real symmetric tridiagonal form.

    Returns ``(diag, offdiag)``; the off-diagonal is taken in modulus, which is
    a diagonal unitary similarity away from the complex Hermitian result.
    """
    a = np.array(matrix, dtype=complex if np.iscomplexobj(matrix) else float)
    n = a.shape[0]
    offdiag = np.zeros(max(n - 1, 0))
    for k in range(n - 2):
        x = a[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        sub = a[k + 1 :, k + 1 :]
        p = sub @ v
        w = p - np.vdot(v, p).real * v
        sub -= 2.0 * (np.outer(v, w.conj()) + np.outer(w, v.conj()))
        offdiag[k] = alpha
    if n >= 2:
        offdiag[n - 2] = abs(a[n - 1, n - 2])
    return np.real(np.diag(a)).copy(), offdiag


def _check_hermitian(h):
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.max(np.abs(h)) if h.size else 0.0
    if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-12 * max(scale, 1e-300):
        raise ValueError("matrix is not conjugate-symmetric")
    return h


def collapse_doubled(values: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Merge the exactly doubled spectrum of a quaternion embedding."""
    values = np.sort(values)
    if values.size % 2:
        raise QuaternionPairingError("odd number of eigenvalues")
    lo, hi = values[0::2], values[1::2]
    radius = max(np.max(np.abs(values), initial=0.0), 1e-300)
    gap = np.max(np.abs(hi - lo), initial=0.0)
    if gap > rtol * radius:
        raise QuaternionPairingError(f"eigenvalue pairs differ by {gap:.3e} (radius {radius:.3e})")
    return 0.5 * (lo + hi)


def eigenvalues_dense(matrix, quaternion: bool = False, method: str = "lapack") -> np.ndarray:
    """All eigenvalues of a dense Hermitian matrix, ascending.

    ``method="householder"`` uses :func:`householder_tridiagonal` followed by
    QL; ``"lapack"`` calls the LAPACK symmetric/Hermitian driver.
    If ``quaternion`` is set the ``2n`` eigenvalues are collapsed to ``n``.
    """
    h = _check_hermitian(matrix)
    if method == "lapack":
        values = np.linalg.eigvalsh(h)
    elif method == "householder":
        values = eigenvalues_tridiagonal(*householder_tridiagonal(h))
    else:
        raise ValueError(f"unknown method {method!r}")
    if quaternion:
        return collapse_doubled(values)
    return values


@dataclass
class Spectrum:
    """Ascending eigenvalues normalised so the limiting density is (2/pi) sqrt(1 - x**2)."""

    values: np.ndarray
    n: int
    ensemble: Optional[EnsembleSpec] = None


def support_scale(spec: EnsembleSpec) -> float:
    """Linear factor mapping raw eigenvalues onto limiting support [-1, 1]."""
    if spec.family == "beta-tridiagonal":
        return 1.0 / math.sqrt(2.0 * spec.beta * spec.n)
    return 0.5


def spectrum_of(sample: MatrixSample, method: str = "lapack") -> Spectrum:
    if sample.storage == "tridiagonal":
        values = eigenvalues_tridiagonal(sample.diag, sample.offdiag)
    else:
        quaternion = sample.storage == "dense-quaternion-embedded"
        values = eigenvalues_dense(sample.matrix, quaternion=quaternion, method=method)
    return Spectrum(values * support_scale(sample.spec), sample.spec.n, sample.spec)


def write_spectra_csv(path, spectra: Iterable[Spectrum]) -> None:
    """One row per eigenvalue: ``trial, index, lambda``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "index", "lambda"])
        for trial, spec in enumerate(spectra):
            for i, lam in enumerate(spec.values):
                w.writerow([trial, i, repr(float(lam))])
