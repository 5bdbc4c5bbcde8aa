import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmtspacing.eigensolver import (
    QuaternionPairingError,
    collapse_doubled,
    eigenvalues_dense,
    eigenvalues_tridiagonal,
    householder_tridiagonal,
    spectrum_of,
    write_spectra_csv,
)
from rmtspacing.sampler import EnsembleSpec, sample

from conftest import pooled_semicircle_distance, variance_within_3se


def charpoly_roots(diag, offdiag):
    """Eigenvalues by bisection on the three-term characteristic-polynomial recurrence."""
    n = len(diag)
    radius = np.max(np.abs(diag)) + 2 * np.max(np.abs(offdiag), initial=0.0) + 1.0

    def count_below(x):
        # sign changes of p_0, p_1, ..., p_n evaluated at x (Sturm)
        p_prev, p = 1.0, diag[0] - x
        count = int(p < 0)
        for i in range(1, n):
            p_prev, p = p, (diag[i] - x) * p - offdiag[i - 1] ** 2 * p_prev
            scale = max(abs(p), abs(p_prev), 1e-300)
            p, p_prev = p / scale, p_prev / scale
            count += int((p < 0) != (p_prev < 0)) if p != 0 else 0
        return count

    roots = []
    for k in range(n):
        lo, hi = -radius, radius
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if count_below(mid) > k:
                hi = mid
            else:
                lo = mid
        roots.append(0.5 * (lo + hi))
    return np.array(roots)


def dense_oracle(h):
    """Eigenvalues of a Hermitian matrix by bisection on the inertia of ``H - x I``.

    The number of eigenvalues below ``x`` equals the number of negative pivots of
    an unpivoted ``L D L^*`` factorisation (Sylvester's law of inertia).
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    bound = np.max(np.sum(np.abs(h), axis=1)) + 1.0

    def count_below(x):
        a = h - x * np.eye(n)
        neg = 0
        for k in range(n):
            p = a[k, k].real
            if p == 0.0:
                p = 1e-300
            neg += p < 0
            col = a[k + 1 :, k] / p
            a[k + 1 :, k + 1 :] -= p * np.outer(col, col.conj())
        return neg

    roots = []
    for k in range(n):
        lo, hi = -bound, bound
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if count_below(mid) > k:
                hi = mid
            else:
                lo = mid
        roots.append(0.5 * (lo + hi))
    return np.array(roots)


def test_tridiagonal_2x2():
    for method in ("ql", "bisection"):
        assert eigenvalues_tridiagonal([0.0, 0.0], [1.0], method) == pytest.approx([-1.0, 1.0], abs=1e-15)


def test_tridiagonal_1x1():
    assert eigenvalues_tridiagonal([3.25], []).tolist() == [3.25]


@pytest.mark.parametrize("seed", range(5))
def test_tridiagonal_8x8_charpoly(seed):
    rng = np.random.default_rng(seed)
    d, e = rng.normal(size=8), rng.uniform(0.1, 2.0, size=7)
    oracle = charpoly_roots(d, e)
    for method in ("ql", "bisection"):
        assert np.max(np.abs(eigenvalues_tridiagonal(d, e, method) - oracle)) <= 1e-10


def test_tridiagonal_rejects_nonfinite():
    with pytest.raises(ValueError):
        eigenvalues_tridiagonal([0.0, np.nan], [1.0])
    with pytest.raises(ValueError):
        eigenvalues_tridiagonal([0.0, 1.0], [np.inf])


def test_ql_bisection_accuracy_large():
    spec = EnsembleSpec("beta-tridiagonal", 2, 400, seed=1)
    s = sample(spec)
    ql = eigenvalues_tridiagonal(s.diag, s.offdiag, "ql")
    bis = eigenvalues_tridiagonal(s.diag, s.offdiag, "bisection")
    radius = np.max(np.abs(ql))
    assert np.max(np.abs(ql - bis)) <= 1e-12 * radius


def test_dense_2x2_formula():
    a, b, c = 1.3, -0.7, -2.1
    r = math.sqrt(((a - c) / 2) ** 2 + b * b)
    for method in ("lapack", "householder"):
        assert eigenvalues_dense(np.array([[a, b], [b, c]]), method=method) == pytest.approx(
            [(a + c) / 2 - r, (a + c) / 2 + r], abs=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_dense_12x12_hermitian_oracle(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    h = (x + x.conj().T) / 2
    ref = dense_oracle(h)
    for method in ("lapack", "householder"):
        assert np.max(np.abs(eigenvalues_dense(h, method=method) - ref)) <= 1e-8


def test_dense_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigenvalues_dense(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_quaternion_pairing_failure():
    h = np.diag([0.0, 1.0, 2.0, 3.0]).astype(complex)
    with pytest.raises(QuaternionPairingError):
        eigenvalues_dense(h, quaternion=True)


def test_quaternion_doubling_pairs():
    spec = EnsembleSpec("gaussian-invariant", 4, 30, seed=2)
    h = sample(spec).matrix
    v = np.linalg.eigvalsh(h)
    assert np.max(np.abs(v[0::2] - v[1::2])) <= 1e-8 * np.max(np.abs(v))
    assert len(eigenvalues_dense(h, quaternion=True)) == 30


hermitian = st.integers(1, 10).flatmap(
    lambda n: st.tuples(arrays(np.float64, (n, n), elements=st.floats(-5, 5)),
                        arrays(np.float64, (n, n), elements=st.floats(-5, 5)), st.booleans()))


@settings(max_examples=80, deadline=None)
@given(hermitian)
def test_similarity_invariants(parts):
    re, im, use_complex = parts
    h = (re + re.T) / 2
    if use_complex:
        h = h + 1j * (im - im.T) / 2
    fro = float(np.sum(np.abs(h) ** 2))
    for method in ("lapack", "householder"):
        v = eigenvalues_dense(h, method=method)
        assert np.all(np.diff(v) >= 0)
        scale = max(fro, 1e-300)
        assert abs(np.sum(v) - np.trace(h).real) <= 1e-10 * max(math.sqrt(scale) * len(v), 1e-300)
        assert abs(np.sum(v * v) - fro) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-3, 3)),
    arrays(np.float64, max(n - 1, 0), elements=st.floats(0.01, 3)))))
def test_tridiagonal_vs_dense(parts):
    d, e = parts
    t = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    dense = eigenvalues_dense(t)
    for method in ("ql", "bisection"):
        assert np.max(np.abs(eigenvalues_tridiagonal(d, e, method) - dense)) <= 1e-10


def test_householder_preserves_spectrum():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    h = x + x.conj().T
    d, e = householder_tridiagonal(h)
    assert np.all(e >= 0)
    assert np.max(np.abs(eigenvalues_tridiagonal(d, e) - np.linalg.eigvalsh(h))) <= 1e-12


def test_spectrum_n1_gue_variance():
    spec = EnsembleSpec("gaussian-invariant", 2, 1, seed=8)
    x = np.array([spectrum_of(sample(spec, stream=t)).values[0] for t in range(50_000)])
    # N(0, 1) entry halved by the support rescaling
    assert variance_within_3se(x, 0.25)


def test_spectrum_sorted_and_normalised():
    for spec in (EnsembleSpec("gaussian-invariant", 4, 200, seed=1),
                 EnsembleSpec("beta-tridiagonal", 20, 1000, seed=1),
                 EnsembleSpec("wigner-iid", 2, 200, "exponential", seed=1)):
        s = spectrum_of(sample(spec))
        assert s.n == spec.n and len(s.values) == spec.n
        assert np.all(np.diff(s.values) >= 0)
        assert np.max(np.abs(s.values)) < 1.2


def test_beta20_tridiagonal_semicircle():
    assert pooled_semicircle_distance(EnsembleSpec("beta-tridiagonal", 20, 1000, seed=3), 50) <= 0.02


@pytest.mark.slow
def test_gue_n2000_semicircle():
    assert pooled_semicircle_distance(EnsembleSpec("gaussian-invariant", 2, 2000, seed=1), 50) <= 0.02


def test_write_spectra_csv(tmp_path):
    spec = EnsembleSpec("beta-tridiagonal", 2, 4, seed=1)
    spectra = [spectrum_of(sample(spec, stream=t)) for t in range(3)]
    path = tmp_path / "spectra.csv"
    write_spectra_csv(path, spectra)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["trial", "index", "lambda"]
    assert len(rows) == 12
    assert float(rows[5]["lambda"]) == spectra[1].values[1]
