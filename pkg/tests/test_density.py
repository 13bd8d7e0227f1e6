import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csbsd import density as D
from csbsd.model import PriorParams

GRID = D.ValueGrid.for_prior(64, 10.0)


def pmfs(n=64):
    return st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n).filter(
        lambda v: sum(v) > 1e-3).map(lambda v: np.array(v) / np.sum(v))


def test_grid_layout():
    assert GRID.step == pytest.approx(0.9375)
    assert GRID.points[GRID.zero_index] == 0.0
    assert np.allclose(GRID.points[1:], -GRID.points[1:][::-1])
    with pytest.raises(ValueError):
        D.ValueGrid(48, 1.0)


def test_spike_slab_prior():
    p = D.spike_slab_prior(GRID, PriorParams(0.05, 10.0))
    assert p.mass[GRID.zero_index] >= 0.95
    assert abs(p.total() - 1.0) < 1e-12
    half = D.spike_slab_prior(GRID, PriorParams(0.5, 10.0)).mass
    assert half.argmax() == GRID.zero_index
    assert np.all(half[GRID.zero_index] > np.delete(half, GRID.zero_index))


def test_slab_only_limit():
    slab = D.slab_mass(GRID, 10.0)
    w = np.exp(-0.5 * (GRID.points / 10.0) ** 2)
    assert slab[GRID.zero_index] == pytest.approx(1.0 / w.sum())


def test_gaussian():
    g = D.gaussian(GRID, 0.0, 5.0).mass
    assert np.abs(g[1:] - g[1:][::-1]).max() < 1e-12
    flat = D.gaussian(GRID, 0.0, 100 * GRID.half_range).mass
    assert flat.max() / flat.min() < 1.2
    sigma = GRID.half_range / 6
    mean, var = D.moments(D.gaussian(GRID, 0.0, sigma))
    assert abs(mean) < 1e-6    # the one-sided endpoint breaks exact symmetry
    assert var == pytest.approx(sigma ** 2, rel=0.02)
    with pytest.raises(ValueError):
        D.gaussian(GRID, 0.0, 0.0)


def test_delta_at():
    assert D.delta_at(GRID, 0.0).mass[GRID.zero_index] == 1.0
    assert D.delta_at(GRID, GRID.points[3]).mass[3] == 1.0
    x3, x4 = GRID.points[3], GRID.points[4]
    assert D.delta_at(GRID, x3 + 0.6 * (x4 - x3)).mass[4] == 1.0
    assert D.delta_at(GRID, 0.5 * (x3 + x4)).mass[3] == 1.0     # tie goes low
    far = D.delta_at(GRID, 1e3)
    assert far.mass[-1] == 1.0 and far.clamped == 1
    assert D.delta_at(GRID, -1e3).mass[0] == 1.0


def test_normalize():
    u = D.DiscreteDensity(GRID, np.full(64, 2.0))
    assert np.allclose(D.normalize(u).mass, 1 / 64)
    with pytest.raises(D.DegenerateMessage):
        D.normalize(D.DiscreteDensity(GRID, np.zeros(64)))


def test_product():
    g = D.gaussian(GRID, 3.0, 4.0)
    p = D.normalize(D.product(g, D.uniform(GRID)))
    assert np.allclose(p.mass, g.mass)
    assert D.product(D.delta_at(GRID, 1.0), D.delta_at(GRID, -5.0)).total() == 0.0
    # Gaussian product identity
    m1, s1, m2, s2 = -2.0, 3.0, 4.0, 4.0
    prod = D.normalize(D.product(D.gaussian(GRID, m1, s1), D.gaussian(GRID, m2, s2)))
    var = 1 / (1 / s1 ** 2 + 1 / s2 ** 2)
    mean = var * (m1 / s1 ** 2 + m2 / s2 ** 2)
    got_mean, got_var = D.moments(prod)
    assert got_mean == pytest.approx(mean, rel=0.02, abs=0.02)
    assert got_var == pytest.approx(var, rel=0.02)


def test_mirror():
    sym = D.gaussian(GRID, 0.0, 4.0)
    assert np.abs(D.mirror(sym).mass - sym.mass).max() < 1e-12
    assert D.mirror(D.delta_at(GRID, GRID.points[3])).mass[64 - 3] == 1.0


def test_convolve_direct():
    g = D.gaussian(GRID, 2.0, 3.0)
    assert np.allclose(D.convolve_direct(g, D.delta_at(GRID, 0.0)).mass, g.mass)
    s1, s2 = 3.0, 4.0
    c = D.convolve_direct(D.gaussian(GRID, 0.0, s1), D.gaussian(GRID, 0.0, s2))
    assert abs(c.total() - 1.0) < 1e-12
    assert D.moments(c)[1] == pytest.approx(s1 ** 2 + s2 ** 2, rel=0.02)


def test_convolve_fft_matches_direct_on_narrow_bells():
    sigma = GRID.half_range / 8
    a, b = D.gaussian(GRID, 1.0, sigma), D.gaussian(GRID, -2.0, sigma)
    assert np.abs(D.convolve_fft(a, b).mass - D.convolve_direct(a, b).mass).max() < 1e-3
    assert np.abs(D.convolve_fft(a, D.delta_at(GRID, 0.0)).mass - a.mass).max() < 1e-12


def test_circular_tails_heavier_on_wide_inputs():
    wide = D.gaussian(GRID, 0.0, GRID.half_range / 2)
    tail = np.abs(GRID.points) >= GRID.half_range / 2
    tail[[0, -1]] = False     # direct mode piles overflow onto the boundary bins
    circ = D.convolve_fft(wide, wide).mass[tail].sum()
    lin = D.convolve_direct(wide, wide).mass[tail].sum()
    assert circ - lin > 0


def test_symmetric_density_has_zero_mean():
    m = D.gaussian(GRID, 0.0, 4.0).mass.copy()
    m[0] = 0.0
    mean, _ = D.moments(D.normalize(D.DiscreteDensity(GRID, m)))
    assert abs(mean) < 1e-10


def test_moments_errors_and_delta():
    with pytest.raises(ValueError):
        D.moments(D.DiscreteDensity(GRID, np.full(64, 1.0)))
    mean, var = D.moments(D.delta_at(GRID, GRID.points[10]))
    assert mean == GRID.points[10] and var == 0.0


def test_grid_mismatch():
    other = D.ValueGrid(64, 5.0)
    with pytest.raises(ValueError):
        D.product(D.uniform(GRID), D.uniform(other))


@settings(max_examples=40, deadline=None)
@given(pmfs(), pmfs())
def test_mass_conservation(a, b):
    da, db = D.DiscreteDensity(GRID, a), D.DiscreteDensity(GRID, b)
    assert abs(D.convolve_fft(da, db).total() - 1.0) < 1e-12
    assert abs(D.convolve_direct(da, db).total() - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(pmfs(), pmfs(), pmfs())
def test_fft_commutative_associative_nary(a, b, c):
    da, db, dc = (D.DiscreteDensity(GRID, v) for v in (a, b, c))
    ab = D.convolve_fft(da, db).mass
    assert np.abs(ab - D.convolve_fft(db, da).mass).max() < 1e-10
    left = D.convolve_fft(D.convolve_fft(da, db), dc).mass
    right = D.convolve_fft(da, D.convolve_fft(db, dc)).mass
    assert np.abs(left - right).max() < 1e-10
    assert np.abs(D.convolve_fft(da, db, dc).mass - left).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(pmfs(), pmfs())
def test_mirror_commutes_with_convolution(a, b):
    da, db = D.DiscreteDensity(GRID, a), D.DiscreteDensity(GRID, b)
    lhs = D.mirror(D.convolve_fft(da, db)).mass
    rhs = D.convolve_fft(D.mirror(da), D.mirror(db)).mass
    assert np.abs(lhs - rhs).max() < 1e-10
    assert np.array_equal(D.mirror(D.mirror(da)).mass, da.mass)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 5.0), min_size=64, max_size=64))
def test_normalize_sums_to_one(v):
    assert abs(D.normalize(D.DiscreteDensity(GRID, np.array(v))).total() - 1.0) < 1e-12


def test_to_csv(tmp_path):
    path = tmp_path / "d.csv"
    D.delta_at(GRID, 0.0).to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x_k,mass" and len(lines) == 65
