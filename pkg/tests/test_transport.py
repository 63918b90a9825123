import itertools

import numpy as np
import pytest

from mfcontrol.core import geodesic_disp, wrap
from mfcontrol.meanfield import GridDensity
from mfcontrol.transport import (
    density_quantile_atoms,
    quantile_resample,
    w2_circle,
    w2_circle_density,
    w2_line,
)


def brute_force_w2(xs, ys, dist):
    n = len(xs)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        c = sum(dist(xs[perm[i]], ys[i]) ** 2 for i in range(n)) / n
        best = min(best, c)
    return np.sqrt(best)


def test_w2_line_trivial():
    assert w2_line([0.2, 0.4], [0.2, 0.4]) == 0.0
    assert w2_line([0.0], [0.5]) == pytest.approx(0.5)


def test_w2_line_matches_brute_force():
    xs = np.array([0.1, 0.5, 0.9])
    ys = np.array([0.2, 0.4, 0.8])
    assert w2_line(xs, ys) == pytest.approx(
        brute_force_w2(xs, ys, lambda a, b: abs(a - b)), abs=1e-12
    )


def test_w2_line_rejects_empty():
    with pytest.raises(ValueError):
        w2_line([], [0.1])


def test_w2_circle_trivial():
    assert w2_circle([0.0], [0.9]) == pytest.approx(0.1)
    mu = np.array([0.1, 0.4, 0.77])
    assert w2_circle(mu, mu) == 0.0


def test_w2_circle_matches_brute_force():
    rng = np.random.Generator(np.random.PCG64(42))
    for _ in range(5):
        xs = rng.uniform(0, 1, 5)
        ys = rng.uniform(0, 1, 5)
        expected = brute_force_w2(xs, ys, lambda a, b: abs(geodesic_disp(a, b)))
        assert w2_circle(xs, ys) == pytest.approx(expected, abs=1e-12)


def test_metric_properties_on_random_triples():
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(10):
        a, b, c = (rng.uniform(0, 1, 6) for _ in range(3))
        for dist in (w2_line, w2_circle):
            dab, dba = dist(a, b), dist(b, a)
            assert dab == pytest.approx(dba, abs=1e-12)
            assert dist(a, c) <= dab + dist(b, c) + 1e-12


def test_circle_below_line_on_lifts():
    rng = np.random.Generator(np.random.PCG64(11))
    for _ in range(10):
        a = rng.uniform(0, 1, 8)
        b = rng.uniform(0, 1, 8)
        assert w2_circle(a, b) <= w2_line(a, b) + 1e-12


def test_shifted_copies():
    rng = np.random.Generator(np.random.PCG64(8))
    mu = rng.uniform(0, 1, 16)
    for s in (0.1, 0.3, 0.7):
        shifted = wrap(mu + s)
        bound = min(abs(s), 1 - abs(s))
        assert w2_circle(mu, shifted) <= bound + 1e-12
    # equality for single atoms
    assert w2_circle([0.2], [wrap(0.2 + 0.3)]) == pytest.approx(0.3, abs=1e-12)


def test_quantile_resample_replication():
    atoms = np.array([0.3, 0.1, 0.7])
    out = quantile_resample(atoms, 9)
    assert np.array_equal(np.sort(out), np.repeat(np.sort(atoms), 3))


def test_unequal_sizes_resampled():
    # same measure at different atom multiplicities: distance stays zero
    assert w2_line([0.2, 0.6], [0.2, 0.2, 0.6, 0.6]) == pytest.approx(0.0, abs=1e-12)


def test_density_quantile_self_distance():
    g = GridDensity.from_function(lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x), 64)
    atoms = density_quantile_atoms(g, 128)
    assert w2_circle_density(atoms, g, 128) < g.dx


def test_uniform_vs_equispaced():
    n = 32
    g = GridDensity.uniform(64)
    mu = np.arange(n) / n
    assert w2_circle_density(mu, g, n) < 1.0 / n


def test_narrow_bump_vs_point():
    n = 256
    g_vals = np.zeros(n)
    g_vals[n // 2] = float(n)  # unit mass in one cell at x = 0.5
    g = GridDensity(g_vals)
    d = w2_circle_density(np.array([0.0]), g, 64)
    assert d == pytest.approx(0.5, abs=2.0 / n)


def test_w2_circle_density_requires_normalised():
    with pytest.raises(ValueError):
        GridDensity(np.full(64, 2.0))


def test_w2_circle_density_m_too_small():
    g = GridDensity.uniform(16)
    with pytest.raises(ValueError):
        w2_circle_density(np.arange(10) / 10, g, 5)
