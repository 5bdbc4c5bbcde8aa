import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtspacing.eigensolver import Spectrum, spectrum_of
from rmtspacing.sampler import EnsembleSpec, sample
from rmtspacing.spacings import (
    EmpiricalMeasure,
    EmptyWindowError,
    WindowSpec,
    gamma_measure,
    kolmogorov_distance,
    rescale_local,
    rescaled_in_window,
    semicircle_F,
    spacing_measure,
    unfold,
    verify_combinatorial_identity,
)


def local_window_with_area(area, n=100, center=0.0):
    psi = 2 / math.pi * math.sqrt(1 - center * center)
    return WindowSpec("local-linear", center, area / (2 * n * psi), psi)


def spectrum_from_rescaled(xt, n=100, center=0.0):
    """A spectrum whose local rescaling at ``center`` is exactly ``xt``."""
    psi = 2 / math.pi * math.sqrt(1 - center * center)
    return Spectrum(center + np.asarray(xt, dtype=float) / (n * psi), n)


def test_rescale_local_substitution():
    w = WindowSpec.local(100, 0.0, length=0.1)
    s = Spectrum(np.array([-0.2, 0.0, 0.01, 0.3]), 100)
    out = rescale_local(s, w)
    assert out[0] == 0.0
    assert out[1] == pytest.approx(2 / math.pi, abs=1e-15)
    assert len(out) == 2


def test_rescale_local_membership():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(5, 300))
        a = float(rng.uniform(-0.9, 0.9))
        w = WindowSpec.local(n, a, length=float(rng.uniform(0.01, 0.5)))
        lam = np.sort(rng.uniform(-1, 1, n))
        lo, hi = w.interval
        inside = lam[(lam >= lo) & (lam <= hi)]
        scaled = rescale_local(Spectrum(lam, n), w)
        all_scaled = (lam - a) * n * w.psi_a
        half = w.area(n) / 2
        in_a = all_scaled[(all_scaled >= -half * (1 + 1e-12)) & (all_scaled <= half * (1 + 1e-12))]
        assert len(in_a) == len(inside) == len(scaled)
        assert np.array_equal(np.sort(scaled), scaled)


def test_window_validation():
    with pytest.raises(ValueError):
        WindowSpec("local-linear", 0.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        WindowSpec("local-linear", 1.0, 0.1, 0.5)
    with pytest.raises(ValueError):
        WindowSpec.unfolded(0.5, 1.2)
    with pytest.raises(ValueError):
        rescale_local(Spectrum(np.zeros(2), 2), WindowSpec.unfolded(-0.5, 0.5))


def test_default_local_window_rule():
    for n in (100, 10_000):
        w = WindowSpec.local(n)
        assert w.length == pytest.approx(n**-0.5)
        assert w.psi_a == pytest.approx(2 / math.pi)


def test_semicircle_F_values():
    assert semicircle_F(0.0) == 0.0
    assert semicircle_F(1.0) == pytest.approx(0.5, abs=1e-16)
    assert semicircle_F(-1.0) == pytest.approx(-0.5, abs=1e-16)
    assert semicircle_F(3.0) == semicircle_F(1.0)
    t = np.linspace(-0.99, 0.99, 7)
    h = 1e-6
    fd = (semicircle_F(t + h) - semicircle_F(t - h)) / (2 * h)
    assert np.allclose(fd, 2 / np.pi * np.sqrt(1 - t * t), atol=1e-8)


def test_unfolded_mean_spacing_gue():
    spec = EnsembleSpec("gaussian-invariant", 2, 1000, seed=4)
    w = WindowSpec.unfolded(-0.5, 0.5)
    gaps = np.concatenate([np.diff(rescaled_in_window(spectrum_of(sample(spec, stream=t)), w)) for t in range(5)])
    assert abs(gaps.mean() - 1.0) <= 0.05
    s = spectrum_of(sample(spec))
    assert np.array_equal(unfold(s), 1000 * semicircle_F(s.values))


def test_spacing_measure_three_atoms():
    w = local_window_with_area(2.0)
    s = spectrum_from_rescaled([-0.5, -0.3, 0.1, 0.7, 1.9 - 1.0])
    # rescaled points inside A = [-1, 1]: -0.5, -0.3, 0.1, 0.7, 0.9
    m = spacing_measure(Spectrum(np.array([0.1, 0.7, 1.9]) / (100 * w.psi_a) - 1.0 / (100 * w.psi_a), 100),
                        local_window_with_area(4.0))
    assert np.allclose(m.atoms, [0.6, 1.2])
    assert m.weight_per_atom == pytest.approx(0.25)
    direct = EmpiricalMeasure(np.array([0.6, 1.2]), 0.5)
    assert direct.total_mass == 1.0
    assert len(spacing_measure(s, w)) == 4


def test_spacing_measure_single_eigenvalue():
    w = WindowSpec.unfolded(-0.1, 0.1)
    with pytest.raises(EmptyWindowError):
        spacing_measure(Spectrum(np.array([-0.5, 0.0, 0.5]), 3), w)


def test_spacing_measure_unfolded_count_weight():
    s = Spectrum(np.array([-0.9, -0.05, 0.0, 0.06, 0.8]), 5)
    m = spacing_measure(s, WindowSpec.unfolded(-0.1, 0.1))
    assert len(m) == 2 and m.weight_per_atom == 0.5 and m.total_mass == 1.0
    area = spacing_measure(s, WindowSpec.unfolded(-0.1, 0.1), normalisation="area")
    assert area.weight_per_atom == pytest.approx(1 / (5 * (semicircle_F(0.1) - semicircle_F(-0.1))))


def three_point(k_area=2.0):
    w = local_window_with_area(k_area)
    # rescaled points 0.1, 0.7, 1.9 shifted into A = [-1, 1] by -1: gaps unchanged
    return spectrum_from_rescaled([0.1 - 1.0, 0.7 - 1.0, 1.9 - 1.0]), w


def test_gamma_measure_examples():
    s, w = three_point(2.0)
    g2 = gamma_measure(s, w, 2)
    assert np.allclose(g2.atoms, [0.6, 1.2, 1.8]) and np.all(g2.counts == 1)
    assert g2.weight_per_atom == pytest.approx(0.5)
    g3 = gamma_measure(s, w, 3)
    assert np.allclose(g3.atoms, [1.8]) and g3.total_mass == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gamma_measure(s, w, 1)


def brute_gamma(x, k):
    return sorted(x[c[-1]] - x[c[0]] for c in itertools.combinations(range(len(x)), k))


def test_gamma_multiplicity_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = np.sort(rng.uniform(-5, 5, 12))
        s = spectrum_from_rescaled(x)
        w = local_window_with_area(10.5)
        for k in range(2, 6):
            g = gamma_measure(s, w, k)
            expanded = np.repeat(g.atoms, g.counts.astype(int))
            assert np.allclose(np.sort(expanded), brute_gamma(x, k), atol=1e-12)


def test_identity_three_point_example():
    s, w = three_point(2.0)
    r = verify_combinatorial_identity(s, w, 1.0)
    assert r.sigma_integral == pytest.approx(0.5)
    assert r.residual <= 1e-12 * r.total_mass
    assert r.inequalities_hold
    # gamma(2) below 1: {0.6}; gamma(3) below 1: none
    assert r.partial_sums == pytest.approx([0.5, 0.5])


def test_identity_on_sampled_spectra(tmp_path):
    for i, spec in enumerate([EnsembleSpec("gaussian-invariant", 2, 100, seed=1),
                              EnsembleSpec("beta-tridiagonal", 7, 150, seed=2),
                              EnsembleSpec("wigner-iid", 1, 80, "poisson(2)", seed=3)]):
        s = spectrum_of(sample(spec))
        for w in (WindowSpec.local(spec.n, 0.2, 0.3), WindowSpec.unfolded(-0.5, 0.5)):
            for level in (0.5, 1.0, 2.5):
                r = verify_combinatorial_identity(s, w, level)
                assert r.residual <= 1e-12 * r.total_mass
                assert r.inequalities_hold, r.violations
    out = tmp_path / "identity.json"
    r.to_json(out)
    assert json.loads(out.read_text())["inequalities_hold"] is True


def test_kolmogorov_point_mass_vs_uniform():
    m = EmpiricalMeasure(np.array([1.0]), 1.0)
    assert kolmogorov_distance(m, lambda x: np.clip(np.asarray(x) / 2, 0, 1)) == pytest.approx(0.5)


def test_kolmogorov_self_distance(exact_laws):
    law = exact_laws[2]
    q = (np.arange(1000) + 0.5) / 1000
    grid = np.linspace(0, 6, 60001)
    atoms = np.interp(q, law.cdf_at(grid), grid)
    assert kolmogorov_distance(EmpiricalMeasure(atoms, 1e-3), law) <= 1e-3


def test_kolmogorov_matches_grid_scan():
    rng = np.random.default_rng(2)
    cdf = lambda x: 1 - np.exp(-np.clip(np.asarray(x, dtype=float), 0, None))
    for _ in range(10):
        atoms = np.round(rng.exponential(1.0, 30), 2)
        m = EmpiricalMeasure(atoms, float(rng.uniform(0.02, 0.05)))
        grid = np.linspace(0, 12, 1_000_001)
        grid = np.concatenate([grid, atoms, np.nextafter(atoms, -1)])
        scan = np.max(np.abs(m.cdf(grid) - cdf(grid)))
        scan = max(scan, abs(m.total_mass - 1.0))
        assert abs(kolmogorov_distance(m, cdf) - scan) <= 1e-6


def test_kolmogorov_empty():
    with pytest.raises(EmptyWindowError):
        kolmogorov_distance(EmpiricalMeasure(np.array([]), 1.0), lambda x: x)


def test_measure_csv(tmp_path):
    m = EmpiricalMeasure(np.array([0.3, 0.1]), 0.5, np.array([1.0, 3.0]))
    m.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines == ["atom,weight", "0.1,1.5", "0.3,0.5"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.95, 0.95), min_size=3, max_size=40, unique=True), st.floats(-0.01, 0.01))
def test_local_translation_invariance(values, delta):
    lam = np.sort(values)
    n = 50
    w = WindowSpec.local(n, 0.0, 1.0)
    shifted = WindowSpec("local-linear", delta, w.half_width, w.psi_a)
    try:
        a = spacing_measure(Spectrum(lam, n), w)
    except EmptyWindowError:
        return
    lo, hi = w.interval
    # skip draws where a point sits on the window edge
    if np.min(np.abs(np.concatenate([lam - lo, lam - hi]))) < 1e-9:
        return
    b = spacing_measure(Spectrum(lam + delta, n), shifted)
    assert np.allclose(a.atoms, b.atoms, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=30), st.floats(0.05, 4.0))
def test_pairs_contain_consecutive_and_identity(values, level):
    s = Spectrum(np.sort(values), 30)
    w = WindowSpec.unfolded(-1, 1)
    try:
        sig = spacing_measure(s, w)
    except EmptyWindowError:
        return
    g2 = gamma_measure(s, w, 2)
    assert set(np.round(sig.atoms, 9)) <= set(np.round(g2.atoms, 9))
    r = verify_combinatorial_identity(s, w, level)
    assert r.residual == 0.0 and r.inequalities_hold
