import numpy as np
import pytest

from star_gns import (
    DampingProfile,
    GaussianPacket,
    GridFunction,
    GridSpec,
    PolyFunction,
    SeriesOrder,
    StarChain,
    StarVariant,
    TestFunction,
    make_theta,
    star_chain_fourier,
    star_closed,
    star_fft,
    star_gaussian_closed,
    star_series,
    tilde_star_2pt,
)
from star_gns.nccore import GridError
from star_gns.star import chain_fourier_batch, series_coefficients, twist_phase

from oracles import Axis, Separable, chain_fourier_oracle, relerr
from test_nccore import random_spd

TH01 = make_theta(2, [(0, 1, 0.1)])


def random_function(rng, d=2, terms=1, spread=1.0):
    return TestFunction.of(*(
        GaussianPacket(complex(rng.normal(), rng.normal()), rng.uniform(-spread, spread, d),
                       rng.uniform(-spread, spread, d), random_spd(rng, d, 0.7, 1.5))
        for _ in range(terms)))


def unit():
    return TestFunction.gaussian(2)


# ---------------------------------------------------------------- series engine

def test_series_theta_zero_order_zero_is_pointwise():
    rng = np.random.default_rng(10)
    f, g = random_function(rng), random_function(rng)
    h = star_series(f, g, make_theta(2), 0)
    x = rng.normal(size=(30, 2))
    assert relerr(h(x), f(x) * g(x)) < 1e-14
    assert all(set(t.poly) == {(0, 0)} for t in h.terms)


def test_series_coordinate_commutator():
    x0 = PolyFunction.coordinate(2, 0)
    x1 = PolyFunction.coordinate(2, 1)
    comm = (star_series(x0, x1, TH01, 8) - star_series(x1, x0, TH01, 8)).as_polynomial()
    assert dict(comm) == {(0, 0): 0.1j}


def test_series_coordinate_commutator_4d():
    th = make_theta(4, [(0, 1, 0.1), (0, 3, -0.25), (2, 3, 0.2)])
    for mu in range(4):
        for nu in range(4):
            xm, xn = PolyFunction.coordinate(4, mu), PolyFunction.coordinate(4, nu)
            comm = (star_series(xm, xn, th, 3) - star_series(xn, xm, th, 3)).as_polynomial()
            expect = {(0, 0, 0, 0): 1j * th.entries[mu, nu]} if th.entries[mu, nu] else {}
            assert dict(comm) == expect


def test_series_coefficients_first_order():
    c = series_coefficients(TH01, 1)
    assert c[((0, 0), (0, 0))] == 1
    assert c[((1, 0), (0, 1))] == 0.05j
    assert c[((0, 1), (1, 0))] == -0.05j
    assert len(c) == 3


def test_series_vs_fft_unit_gaussians():
    th = make_theta(2, [(0, 1, 0.05)])
    f = TestFunction.gaussian(2, center=[0.3, 0.0])
    g = TestFunction.gaussian(2, center=[0.0, -0.4])
    grid = GridSpec.fitting([f, g])
    ref = star_fft(f, g, th, grid).samples
    assert relerr(star_series(f, g, th, 8)(grid.points()), ref) < 1e-6


def test_series_monotone_convergence():
    f = TestFunction.gaussian(2, center=[0.5, -0.2], momentum=[0.8, 0.3])
    g = TestFunction.gaussian(2, center=[-0.3, 0.4], momentum=[-0.5, 0.9])
    th = make_theta(2, [(0, 1, 0.1)])
    pts = GridSpec.cube(2, 6.0, 32).points()
    ref = star_closed(f, g, th)(pts)
    errs = [relerr(star_series(f, g, th, m)(pts), ref) for m in range(1, 9)]
    assert all(b < a for a, b in zip(errs, errs[1:])), errs
    assert errs[-1] < 1e-8


def test_series_order_validation():
    f = unit()
    with pytest.raises(ValueError):
        star_series(f, f, TH01, 33)
    with pytest.raises(ValueError):
        SeriesOrder(-1)
    with pytest.raises(ValueError):
        star_series(f, TestFunction.gaussian(3), TH01, 2)


# ---------------------------------------------------------------- closed form

def test_closed_theta_zero_sums_widths():
    a = GaussianPacket(1.0, np.array([0.2, 0.1]), np.zeros(2), np.array([[1.0, 0.2], [0.2, 0.8]]))
    b = GaussianPacket(2.0, np.array([-0.3, 0.4]), np.array([0.5, 0.0]), np.array([[0.7, 0.0], [0.0, 1.3]]))
    h = star_gaussian_closed(a, b, make_theta(2))
    assert np.allclose(h.terms[0].width, a.width + b.width, atol=1e-14)
    x = np.random.default_rng(11).normal(size=(20, 2))
    assert relerr(h(x), a(x) * b(x)) < 1e-13


def test_closed_vs_fft_fine_grid():
    f = unit()
    grid = GridSpec.cube(2, 16.0, 1024)
    fft = star_fft(f, f, TH01, grid).samples
    assert relerr(fft, star_closed(f, f, TH01)(grid.points())) < 1e-8


def test_closed_swap_is_conjugate_for_real_packets():
    w = np.array([[1.1, 0.2], [0.2, 0.9]])
    c = np.array([0.3, -0.2])
    f = TestFunction.of(GaussianPacket(1.5, c, np.zeros(2), w))
    g = TestFunction.of(GaussianPacket(-0.7, c, np.zeros(2), w))
    th = make_theta(2, [(0, 1, 0.1)])
    pts = GridSpec.cube(2, 6.0, 32).points()
    fg = star_closed(f, g, th)(pts)
    gf = star_closed(g, f, th)(pts)
    assert relerr(gf, np.conj(fg)) < 1e-13
    assert relerr(fg, star_series(f, g, th, 12)(pts)) < 1e-10
    assert relerr(gf, star_series(g, f, th, 12)(pts)) < 1e-10


def test_closed_swap_distinct_real_packets():
    f = TestFunction.of(GaussianPacket(1.0, np.array([0.5, 0.0]), np.zeros(2), np.eye(2)))
    g = TestFunction.of(GaussianPacket(1.0, np.array([0.0, 0.5]), np.zeros(2), 1.3 * np.eye(2)))
    pts = GridSpec.cube(2, 6.0, 32).points()
    fg = star_closed(f, g, TH01)(pts)
    gf = star_closed(g, f, TH01)(pts)
    assert relerr(gf, np.conj(fg)) < 1e-13
    assert np.abs(fg - gf).max() > 1e-3  # the product really is noncommutative here
    assert relerr(fg, star_series(f, g, TH01, 12)(pts)) < 1e-10


def test_closed_dimension_mismatch():
    with pytest.raises(ValueError):
        star_gaussian_closed(GaussianPacket.unit(2), GaussianPacket.unit(3), TH01)


# ---------------------------------------------------------------- FFT engine

def test_fft_theta_zero_is_pointwise():
    rng = np.random.default_rng(12)
    f, g = random_function(rng, terms=2), random_function(rng)
    grid = GridSpec.fitting([f, g])
    h = star_fft(f, g, make_theta(2), grid)
    pts = grid.points()
    assert relerr(h.samples, f(pts) * g(pts)) < 1e-10


def test_fft_trace_property():
    rng = np.random.default_rng(13)
    for _ in range(5):
        f, g = random_function(rng), random_function(rng)
        grid = GridSpec.fitting([f, g])
        pts = grid.points()
        plain = np.sum(f(pts) * g(pts)) * grid.cell_volume
        assert abs(star_fft(f, g, TH01, grid).integral() - plain) / abs(plain) < 1e-8


def test_fft_self_convergence():
    rng = np.random.default_rng(14)
    f, g = random_function(rng), random_function(rng)
    grid = GridSpec.fitting([f, g])
    coarse = star_fft(f, g, TH01, grid).samples
    fine = star_fft(f, g, TH01, grid.refined()).samples[::2, ::2]
    assert relerr(coarse, fine) < 1e-8


def test_fft_associativity():
    rng = np.random.default_rng(15)
    f, g, h = (random_function(rng, spread=0.5) for _ in range(3))
    grid = GridSpec.fitting([f, g, h]).refined()
    left = star_fft(star_fft(f, g, TH01, grid), h, TH01, grid)
    right = star_fft(f, star_fft(g, h, TH01, grid), TH01, grid)
    assert relerr(left.samples, right.samples) < 1e-7


def test_fft_3d_matches_closed():
    th = make_theta(3, [(0, 1, 0.1), (1, 2, -0.05), (0, 2, 0.07)])
    f = TestFunction.gaussian(3, center=[0.2, 0.0, -0.1], momentum=[0.3, 0.0, 0.5])
    g = TestFunction.gaussian(3, center=[0.0, 0.1, 0.2], width=1.2)
    # 32^3 keeps the O(N^5 log N) cost small; the guard would ask for a finer grid
    grid = GridSpec.cube(3, 6.0, 32)
    assert relerr(star_fft(f, g, th, grid, decay_tol=None).samples, star_closed(f, g, th)(grid.points())) < 1e-6


def test_fft_box_too_small():
    with pytest.raises(GridError):
        star_fft(unit(), unit(), TH01, GridSpec.cube(2, 3.0, 64))


def test_fft_grid_too_coarse():
    f = TestFunction.gaussian(2, momentum=[4.0, 0.0])
    with pytest.raises(GridError):
        star_fft(f, f, TH01, GridSpec.cube(2, 10.0, 16))


def test_fft_accepts_grid_functions():
    grid = GridSpec.cube(2, 8.0, 64)
    f = GridFunction.sample(unit(), grid)
    assert relerr(star_fft(f, f, TH01, grid).samples, star_fft(unit(), unit(), TH01, grid).samples) < 1e-15
    with pytest.raises(GridError):
        star_fft(f, f, TH01, GridSpec.cube(2, 8.0, 32))


# ---------------------------------------------------------------- chains

def test_chain_single_function_has_no_twist():
    f = TestFunction.gaussian(2, center=[0.1, 0.2], momentum=[0.3, 0.0])
    k = np.array([[0.7, -0.4]])
    assert star_chain_fourier(StarChain((f,), TH01), k) == f.fourier_at(k[0])


def test_chain_theta_zero_factorizes():
    f = TestFunction.gaussian(2, center=[0.1, 0.2])
    g = TestFunction.gaussian(2, momentum=[0.5, 0.5])
    k = np.array([[0.7, -0.4], [1.0, 2.0]])
    val = star_chain_fourier(StarChain((f, g), make_theta(2)), k)
    assert abs(val - f.fourier_at(k[0]) * g.fourier_at(k[1])) < 1e-15


def test_chain_three_unit_gaussians_vs_derivative_oracle():
    k = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    val = star_chain_fourier(StarChain((unit(),) * 3, TH01), k)
    ref = chain_fourier_oracle([Separable((Axis(1.0), Axis(1.0)))] * 3, TH01.entries, k)
    assert abs(val - ref) / abs(ref) < 1e-6


def test_chain_general_packets_vs_derivative_oracle():
    seps = [Separable((Axis(1.2, 0.3, 0.5), Axis(0.8, -0.2, 1.0)), 0.7 + 0.2j),
            Separable((Axis(0.9, -0.1, -1.0), Axis(1.5, 0.4, 0.2))),
            Separable((Axis(1.0, 0.0, 0.3), Axis(1.1, 0.2, -0.6)), -1.0)]
    fs = tuple(TestFunction.gaussian(2, [a.a for a in s.axes], [a.p for a in s.axes],
                                     np.diag([a.w for a in s.axes]), s.coeff) for s in seps)
    rng = np.random.default_rng(16)
    th = make_theta(2, [(0, 1, 0.3)])
    for _ in range(3):
        k = rng.uniform(-1.5, 1.5, size=(3, 2))
        val = star_chain_fourier(StarChain(fs, th), k)
        ref = chain_fourier_oracle(seps, th.entries, k, order=12)
        assert abs(val - ref) / abs(ref) < 1e-10


def test_chain_order_matters():
    f = TestFunction.gaussian(2, center=[0.5, 0.0])
    g = TestFunction.gaussian(2, momentum=[0.0, 1.0])
    k = np.array([[1.0, 0.5], [-0.3, 1.2]])
    a = star_chain_fourier(StarChain((f, g), TH01), k)
    b = star_chain_fourier(StarChain((g, f), TH01), k[::-1])
    assert abs(a - b) > 1e-3


def test_chain_conjugation_reversal():
    rng = np.random.default_rng(17)
    th = make_theta(2, [(0, 1, 0.1)])
    for n in range(2, 6):
        fs = [random_function(rng, terms=2) for _ in range(n)]
        for _ in range(10):
            k = rng.normal(size=(n, 2))
            lhs = star_chain_fourier(StarChain(tuple(f.conj() for f in reversed(fs)), th), k[::-1])
            rhs = np.conj(star_chain_fourier(StarChain(tuple(fs), th), -k))
            assert abs(lhs - rhs) / abs(rhs) < 1e-10


def test_chain_zero_function_short_circuits():
    chain = StarChain((unit(), TestFunction.zero(2)), TH01)
    assert star_chain_fourier(chain, np.zeros((2, 2))) == 0


def test_chain_errors():
    xi = StarVariant("xi_damped", DampingProfile("gaussian_xi", theta_sup=0.1))
    with pytest.raises(ValueError):
        star_chain_fourier(StarChain((unit(), unit()), TH01, xi), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        star_chain_fourier(StarChain((unit(), unit()), TH01), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        StarChain((TestFunction.gaussian(3),), TH01)


def test_twist_phase_pairwise_definition():
    rng = np.random.default_rng(18)
    th = make_theta(3, [(0, 1, 0.2), (1, 2, -0.1)])
    k = rng.normal(size=(4, 3))
    s = sum(k[a] @ th.entries @ k[b] for a in range(4) for b in range(a + 1, 4))
    assert abs(twist_phase(th, k) - np.exp(-0.5j * s)) < 1e-15


def test_chain_batch_shape_check():
    with pytest.raises(ValueError):
        chain_fourier_batch([unit()], TH01, np.zeros((5, 2, 2)))


# ---------------------------------------------------------------- two-point variants

GRID2 = GridSpec.cube(2, 6.0, 32)
LOOSE = 1e-6


def _pair():
    return (TestFunction.gaussian(2, center=[0.3, 0.0], momentum=[0.0, 0.5]),
            TestFunction.gaussian(2, center=[0.0, -0.2], momentum=[0.4, 0.0]))


def test_two_point_plain_diagonal():
    f, g = _pair()
    grid = GridSpec.cube(2, 8.0, 64)
    two = tilde_star_2pt(StarVariant(), f, g, TH01, grid)
    ref = star_fft(f, g, TH01, grid).samples
    assert relerr(two.diagonal(), ref) < 1e-8


def test_two_point_theta_zero_is_product():
    f, g = _pair()
    two = tilde_star_2pt(StarVariant(), f, g, make_theta(2), GRID2, decay_tol=LOOSE)
    pts = GRID2.points()
    expect = np.multiply.outer(f(pts), g(pts))
    assert relerr(two.samples, expect) < 1e-7


def test_two_point_xi_diagonal_equals_plain():
    f, g = _pair()
    xi = StarVariant("xi_damped", DampingProfile("gaussian_xi", theta_sup=0.1))
    plain = tilde_star_2pt(StarVariant(), f, g, TH01, GRID2, decay_tol=LOOSE)
    damped = tilde_star_2pt(xi, f, g, TH01, GRID2, decay_tol=LOOSE)
    assert np.array_equal(damped.diagonal(), plain.diagonal())


def test_two_point_eta_vs_xi_bound():
    f, g = _pair()
    theta_sup, alpha, eps = 0.1, 1.0, 0.1
    xi = StarVariant("xi_damped", DampingProfile("gaussian_xi", theta_sup=theta_sup))
    eta = StarVariant("eta_regularized", DampingProfile("plateau_eta", alpha=alpha, epsilon=eps))
    plain = tilde_star_2pt(StarVariant(), f, g, TH01, GRID2, decay_tol=LOOSE).samples
    a = tilde_star_2pt(xi, f, g, TH01, GRID2, decay_tol=LOOSE).samples
    b = tilde_star_2pt(eta, f, g, TH01, GRID2, decay_tol=LOOSE).samples
    ax = GRID2.axes()
    mesh = np.meshgrid(*ax, *ax, indexing="ij", sparse=True)
    u2 = np.maximum(np.abs(mesh[0] - mesh[2]), np.abs(mesh[1] - mesh[3])) ** 2
    outside = np.broadcast_to(u2 >= alpha, plain.shape)
    assert outside.any()
    bound = np.exp(-(alpha - eps) / theta_sup) * np.abs(plain).max()
    assert np.abs(a - b)[outside].max() <= bound
    assert np.array_equal(np.diagonal(np.diagonal(b, axis1=0, axis2=2), axis1=0, axis2=1),
                          np.diagonal(np.diagonal(plain, axis1=0, axis2=2), axis1=0, axis2=1))
