"""
Moyal-type star products.

Three engines that check one another:

* ``star_series``  truncated bidifferential exponential, exact on polynomials
* ``star_fft``     discrete twisted convolution on a periodic grid
* ``star_gaussian_closed``  analytic Gaussian integral for packet pairs

plus the Fourier form of the multi-point chain and the damped two-point
variants. With fhat(k) = int f exp(-i k.x), plane waves multiply as

    e^{iq.x} * e^{ir.x} = exp(-i/2 q^T theta r) e^{i(q+r).x}.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .nccore import (
    GaussianPacket,
    GridError,
    GridFunction,
    GridSpec,
    StarVariant,
    TestFunction,
    ThetaMatrix,
    sqrt_det,
    PLAIN,
)

__all__ = [
    "Poly",
    "PolyGaussian",
    "PolyFunction",
    "SeriesOrder",
    "star_series",
    "series_coefficients",
    "star_gaussian_closed",
    "star_closed",
    "star_fft",
    "StarChain",
    "star_chain_fourier",
    "chain_fourier_batch",
    "twist_phase",
    "tilde_star_2pt",
    "ClosedFormError",
]

MAX_SERIES_ORDER = 32


class ClosedFormError(ValueError):
    """Result width lost its positive-definite real part."""


# ----------------------------------------------------------------------------
# polynomial-prefactor packets for the series engine
# ----------------------------------------------------------------------------

class Poly(dict):
    """Sparse polynomial {exponent tuple: complex coefficient}."""

    def __init__(self, dim: int, terms=None):
        super().__init__()
        self.dim = dim
        if terms:
            for k, v in terms.items():
                if v != 0:
                    self[tuple(k)] = complex(v)

    @classmethod
    def const(cls, dim: int, c: complex = 1.0) -> "Poly":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def coordinate(cls, dim: int, mu: int) -> "Poly":
        e = [0] * dim
        e[mu] = 1
        return cls(dim, {tuple(e): 1.0})

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self), default=0)

    def add(self, other: "Poly", scale: complex = 1.0) -> "Poly":
        out = Poly(self.dim, self)
        for k, v in other.items():
            out[k] = out.get(k, 0) + scale * v
        return Poly(self.dim, out)

    def scale(self, c: complex) -> "Poly":
        return Poly(self.dim, {k: c * v for k, v in self.items()})

    def mul(self, other: "Poly") -> "Poly":
        out: dict = defaultdict(complex)
        for k1, v1 in self.items():
            for k2, v2 in other.items():
                out[tuple(a + b for a, b in zip(k1, k2))] += v1 * v2
        return Poly(self.dim, out)

    def diff(self, mu: int) -> "Poly":
        out = {}
        for k, v in self.items():
            if k[mu]:
                kk = list(k)
                kk[mu] -= 1
                out[tuple(kk)] = v * k[mu]
        return Poly(self.dim, out)

    def times_coordinate(self, mu: int, c: complex = 1.0) -> "Poly":
        out = {}
        for k, v in self.items():
            kk = list(k)
            kk[mu] += 1
            out[tuple(kk)] = c * v
        return Poly(self.dim, out)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=complex)
        for k, v in self.items():
            term = np.full(x.shape[:-1], v, dtype=complex)
            for mu, e in enumerate(k):
                if e:
                    term = term * x[..., mu] ** e
            out += term
        return out


@dataclass(frozen=True, eq=False)
class PolyGaussian:
    """P(x) * exp(-1/2 x^T W x + b.x + c0); W may vanish (pure polynomial)."""

    poly: Poly
    w: np.ndarray
    b: np.ndarray
    c0: complex = 0.0

    @property
    def dim(self) -> int:
        return self.poly.dim

    @classmethod
    def from_packet(cls, p: GaussianPacket) -> "PolyGaussian":
        w, b, c0 = p.exponent()
        return cls(Poly.const(p.dim), w, b, c0)

    @classmethod
    def polynomial(cls, poly: Poly) -> "PolyGaussian":
        d = poly.dim
        return cls(poly, np.zeros((d, d), dtype=complex), np.zeros(d, dtype=complex), 0.0)

    def key(self) -> tuple:
        return (self.w.tobytes(), self.b.tobytes(), complex(self.c0))

    def diff(self, mu: int) -> "PolyGaussian":
        # d/dx_mu (P e^Q) = (dP + P * (b_mu - (W x)_mu)) e^Q
        p = self.poly.diff(mu)
        if self.b[mu] != 0:
            p = p.add(self.poly, self.b[mu])
        for nu in range(self.dim):
            if self.w[mu, nu] != 0:
                p = p.add(self.poly.times_coordinate(nu, -self.w[mu, nu]))
        return PolyGaussian(p, self.w, self.b, self.c0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        q = -0.5 * np.einsum("...i,ij,...j->...", x, self.w, x) + x @ self.b + self.c0
        return self.poly(x) * np.exp(q)


@dataclass(frozen=True)
class PolyFunction:
    """Finite sum of PolyGaussian terms: the series engine's working class."""

    terms: tuple[PolyGaussian, ...]
    dim: int

    @classmethod
    def coordinate(cls, dim: int, mu: int) -> "PolyFunction":
        return cls((PolyGaussian.polynomial(Poly.coordinate(dim, mu)),), dim)

    @classmethod
    def constant(cls, dim: int, c: complex) -> "PolyFunction":
        return cls((PolyGaussian.polynomial(Poly.const(dim, c)),), dim)

    @classmethod
    def coerce(cls, f) -> "PolyFunction":
        if isinstance(f, PolyFunction):
            return f
        if isinstance(f, TestFunction):
            return cls(tuple(PolyGaussian.from_packet(t) for t in f.terms if t.coeff != 0), f.dim)
        raise TypeError(f"cannot use {type(f).__name__} in the series engine")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=complex)
        for t in self.terms:
            out += t(x)
        return out

    def __sub__(self, other: "PolyFunction") -> "PolyFunction":
        neg = tuple(PolyGaussian(t.poly.scale(-1), t.w, t.b, t.c0) for t in other.terms)
        return PolyFunction(self.terms + neg, self.dim).simplified()

    def simplified(self, atol: float = 0.0) -> "PolyFunction":
        """Merge terms sharing an exponent and drop vanishing coefficients."""
        groups: dict = {}
        for t in self.terms:
            k = t.key()
            if k in groups:
                g = groups[k]
                groups[k] = PolyGaussian(g.poly.add(t.poly), g.w, g.b, g.c0)
            else:
                groups[k] = t
        out = []
        for t in groups.values():
            p = Poly(t.poly.dim, {k: v for k, v in t.poly.items() if abs(v) > atol})
            if p:
                out.append(PolyGaussian(p, t.w, t.b, t.c0))
        return PolyFunction(tuple(out), self.dim)

    def as_polynomial(self) -> Poly:
        """The polynomial, when every term has a trivial exponent."""
        total = Poly(self.dim)
        for t in self.terms:
            if np.any(t.w) or np.any(t.b) or t.c0 != 0:
                raise ValueError("function is not a pure polynomial")
            total = total.add(t.poly)
        return total


@dataclass(frozen=True)
class SeriesOrder:
    max_order: int = 8

    def __post_init__(self):
        if not isinstance(self.max_order, (int, np.integer)) or not 0 <= self.max_order <= MAX_SERIES_ORDER:
            raise ValueError(f"series order must be an integer in [0, {MAX_SERIES_ORDER}]")


def series_coefficients(theta: ThetaMatrix, order: int) -> dict[tuple, complex]:
    """Coefficients c[(alpha, beta)] of sum_m (i/2)^m/m! (theta^{mu nu} d_x^mu d_y^nu)^m."""
    d = theta.dim
    nz = theta.nonzero()
    zero = (0,) * d
    level = {(zero, zero): 1.0 + 0j}
    out = dict(level)
    for m in range(1, order + 1):
        nxt: dict = defaultdict(complex)
        for (a, b), c in level.items():
            for mu, nu, t in nz:
                aa = list(a)
                bb = list(b)
                aa[mu] += 1
                bb[nu] += 1
                nxt[(tuple(aa), tuple(bb))] += c * t
        level = dict(nxt)
        pref = (0.5j) ** m / math.factorial(m)
        for k, c in level.items():
            out[k] = out.get(k, 0) + pref * c
    return {k: v for k, v in out.items() if v != 0}


def _derivatives(t: PolyGaussian, multi: set[tuple]) -> dict[tuple, Poly]:
    cache: dict[tuple, PolyGaussian] = {(0,) * t.dim: t}

    def get(alpha):
        if alpha not in cache:
            mu = next(i for i, a in enumerate(alpha) if a)
            prev = list(alpha)
            prev[mu] -= 1
            cache[alpha] = get(tuple(prev)).diff(mu)
        return cache[alpha]

    return {a: get(a).poly for a in sorted(multi, key=sum)}


def star_series(f, g, theta: ThetaMatrix, order: SeriesOrder | int = 8) -> PolyFunction:
    """Truncated series sum_{m<=order} (1/m!) ((i/2) theta d_x d_y)^m f(x) g(y) at y = x.

    Derivatives are exact: Gaussian packets are carried with polynomial
    prefactors, so linear coordinate functions are admissible inputs too.
    """
    if not isinstance(order, SeriesOrder):
        order = SeriesOrder(order)
    F = PolyFunction.coerce(f)
    G = PolyFunction.coerce(g)
    if not (F.dim == G.dim == theta.dim):
        raise ValueError(f"dimension mismatch: f {F.dim}, g {G.dim}, theta {theta.dim}")
    coeffs = series_coefficients(theta, order.max_order)
    by_alpha: dict[tuple, list] = defaultdict(list)
    for (a, b), c in coeffs.items():
        by_alpha[a].append((b, c))
    alphas = set(by_alpha)
    betas = {b for (_, b) in coeffs}
    terms = []
    for tf in F.terms:
        df = _derivatives(tf, alphas)
        for tg in G.terms:
            dg = _derivatives(tg, betas)
            total = Poly(F.dim)
            for a, row in by_alpha.items():
                inner = Poly(F.dim)
                for b, c in row:
                    inner = inner.add(dg[b], c)
                total = total.add(df[a].mul(inner))
            terms.append(PolyGaussian(total, tf.w + tg.w, tf.b + tg.b, complex(tf.c0) + complex(tg.c0)))
    return PolyFunction(tuple(terms), F.dim).simplified()


# ----------------------------------------------------------------------------
# closed form on Gaussian packets
# ----------------------------------------------------------------------------

def star_gaussian_closed(f: GaussianPacket, g: GaussianPacket, theta: ThetaMatrix) -> TestFunction:
    """Exact packet representation of f * g.

    Both spectra are Gaussians, so the double inverse transform of
    fhat(q) ghat(r) exp(-i/2 q^T theta r) is a single complex Gaussian
    integral over z = (q, r) with the complex symmetric matrix

        M = [[W_f^-1, i theta / 2], [-i theta / 2, W_g^-1]].
    """
    d = theta.dim
    if f.dim != d or g.dim != d:
        raise ValueError(f"dimension mismatch: f {f.dim}, g {g.dim}, theta {d}")
    if f.coeff == 0 or g.coeff == 0:
        return TestFunction.zero(d)
    w1, b1, c1 = f.exponent()
    w2, b2, c2 = g.exponent()
    v1 = np.linalg.inv(w1)
    v2 = np.linalg.inv(w2)
    th = theta.entries
    m = np.block([[v1, 0.5j * th], [-0.5j * th, v2]])
    n = np.linalg.inv(m)
    l0 = np.concatenate([-1j * (v1 @ b1), -1j * (v2 @ b2)])
    e = np.vstack([np.eye(d), np.eye(d)])
    w = e.T @ n @ e
    w = 0.5 * (w + w.T)
    if np.linalg.eigvalsh(w.real).min() <= 0:
        raise ClosedFormError("star product width lost its positive-definite real part; theta too large for this pair")
    b = 1j * (e.T @ n @ l0)
    # log K1 + log K2 - d log(2 pi) - 1/2 log det M, with K = (2 pi)^{d/2} det(W)^{-1/2} exp(c + b V b / 2)
    c = (c1 + 0.5 * (b1 @ v1 @ b1) + c2 + 0.5 * (b2 @ v2 @ b2) + 0.5 * (l0 @ n @ l0)
         - np.log(sqrt_det(w1)) - np.log(sqrt_det(w2)) - np.log(sqrt_det(m)))
    return TestFunction.of(GaussianPacket.from_exponent(w, b, c))


def star_closed(f: TestFunction, g: TestFunction, theta: ThetaMatrix) -> TestFunction:
    """Bilinear extension of star_gaussian_closed to packet sums."""
    terms: list[GaussianPacket] = []
    for a in f.terms:
        for b in g.terms:
            terms.extend(star_gaussian_closed(a, b, theta).terms)
    return TestFunction(tuple(terms), theta.dim)


# ----------------------------------------------------------------------------
# FFT engine
# ----------------------------------------------------------------------------

GridInput = Union[TestFunction, GridFunction]


def _on_grid(f, grid: GridSpec, decay_tol: float, name: str) -> GridFunction:
    if isinstance(f, GridFunction):
        if f.grid != grid:
            raise GridError(f"{name} lives on a different grid")
        gf = f
    else:
        gf = GridFunction.sample(f, grid)
    if decay_tol is not None:
        r = gf.boundary_ratio()
        if r > decay_tol:
            raise GridError(f"box too small for {name}: boundary/peak = {r:.2e} > {decay_tol:.1e}")
        # wrap-around in the twisted convolution needs both spectra beyond half-Nyquist
        r = gf.spectral_tail_ratio()
        if r > math.sqrt(decay_tol):
            raise GridError(f"grid too coarse for {name}: spectral tail/peak = {r:.2e} > {math.sqrt(decay_tol):.1e}")
    return gf


def twisted_convolution(fs: np.ndarray, gs: np.ndarray, theta: ThetaMatrix, grid: GridSpec) -> np.ndarray:
    """H(k) = (2 pi)^-d sum_q dq F(q) G(k - q) exp(-i/2 q^T theta k), circular in k - q.

    Loops over all but the last frequency axis; the last axis is a plain
    convolution done with FFTs after folding in the phase factors that do
    not couple q_last with k_last.
    """
    d = grid.dim
    th = theta.entries
    ks = grid.frequencies()
    n = grid.n
    norm = 1.0 / float(np.prod(grid.lengths))
    if theta.is_zero:
        # circular convolution theorem
        prod = np.fft.fftn(np.fft.ifftn(fs) * np.fft.ifftn(gs))
        return prod * float(np.prod(n)) * norm
    last = d - 1
    k_last = ks[last]
    lead_shape = n[:last]
    qgrid = np.stack(np.meshgrid(*ks[:last], indexing="ij"), axis=-1) if last else np.zeros((0,))
    # exp(-i/2 q' . theta[:l, l] k_l): couples leading q with k_last
    a_lead = qgrid @ th[:last, last]
    couple = np.exp(-0.5j * a_lead[..., None] * k_last)
    fg_last = np.fft.fft(gs, axis=-1)
    out = np.empty(n, dtype=complex)
    for kidx in np.ndindex(*lead_shape):
        kvec = np.array([ks[ax][i] for ax, i in enumerate(kidx)])
        # q' theta'' k' and q_l theta[l, :l] k'
        ph_lead = np.exp(-0.5j * (qgrid @ (th[:last, :last] @ kvec)))
        ph_last = np.exp(-0.5j * k_last * (th[last, :last] @ kvec))
        t = fs * ph_lead[..., None] * ph_last
        idx = np.ix_(*[(i - np.arange(m)) % m for i, m in zip(kidx, lead_shape)])
        conv = np.fft.ifft(np.fft.fft(t, axis=-1) * fg_last[idx], axis=-1)
        out[kidx] = np.sum(conv * couple, axis=tuple(range(last))) * norm
    return out


def star_fft(f: GridInput, g: GridInput, theta: ThetaMatrix, grid: GridSpec,
             decay_tol: float | None = 1e-10) -> GridFunction:
    """Grid sampling of f * g via the discrete twisted convolution of spectra."""
    if grid.dim != theta.dim:
        raise ValueError(f"grid dimension {grid.dim} does not match theta {theta.dim}")
    fg = _on_grid(f, grid, decay_tol, "f")
    gg = _on_grid(g, grid, decay_tol, "g")
    spec = twisted_convolution(fg.spectrum(), gg.spectrum(), theta, grid)
    return GridFunction.from_spectrum(grid, spec)


# ----------------------------------------------------------------------------
# multi-point chains
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class StarChain:
    """Ordered star chain f_1(x_1) * ... * f_n(x_n)."""

    functions: tuple[TestFunction, ...]
    theta: ThetaMatrix
    variant: StarVariant = PLAIN

    def __post_init__(self):
        fs = tuple(self.functions)
        for f in fs:
            if f.dim != self.theta.dim:
                raise ValueError(f"chain function dimension {f.dim} != theta dimension {self.theta.dim}")
        object.__setattr__(self, "functions", fs)

    def __len__(self) -> int:
        return len(self.functions)

    @property
    def is_zero(self) -> bool:
        return any(f.is_zero for f in self.functions)


def twist_phase(theta: ThetaMatrix, kappa: np.ndarray) -> np.ndarray:
    """prod_{a<b} exp(-i/2 k_a^T theta k_b) for kappa of shape (..., n, d)."""
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-2]
    if n < 2 or theta.is_zero:
        return np.ones(kappa.shape[:-2], dtype=complex)
    tk = kappa @ theta.entries.T  # (theta k_b)
    pair = np.einsum("...ad,...bd->...ab", kappa, tk)
    s = np.sum(np.triu(pair, k=1), axis=(-2, -1))
    return np.exp(-0.5j * s)


def chain_fourier_batch(functions: Sequence[TestFunction], theta: ThetaMatrix, kappa: np.ndarray) -> np.ndarray:
    """Vectorized star_chain_fourier over leading axes of kappa (shape (..., n, d))."""
    kappa = np.asarray(kappa, dtype=float)
    n = len(functions)
    if kappa.shape[-2:] != (n, theta.dim):
        raise ValueError(f"momenta must have shape (..., {n}, {theta.dim}), got {kappa.shape}")
    out = twist_phase(theta, kappa)
    for a, f in enumerate(functions):
        if f.is_zero:
            return np.zeros(kappa.shape[:-2], dtype=complex)
        out = out * f.fourier_at(kappa[..., a, :])
    return out


def star_chain_fourier(chain: StarChain, momenta) -> complex:
    """prod_a fhat_a(k_a) * prod_{a<b} exp(-i/2 k_a^T theta k_b)."""
    if chain.variant.tag != "plain_star":
        raise ValueError("damped variants have no factorized Fourier form; use tilde_star_2pt")
    k = np.asarray(momenta, dtype=float)
    if k.shape != (len(chain), chain.theta.dim):
        raise ValueError(f"need {len(chain)} momenta of dimension {chain.theta.dim}")
    if chain.is_zero:
        return 0j
    return complex(chain_fourier_batch(chain.functions, chain.theta, k))


def tilde_star_2pt(variant: StarVariant, f: GridInput, g: GridInput, theta: ThetaMatrix,
                   grid: GridSpec, decay_tol: float | None = 1e-10) -> GridFunction:
    """Two-variable function m(x - y) (f * g)(x, y) on grid x grid.

    (f * g)(x, y) is the two-point chain; its joint spectrum is the
    pointwise product fhat(q) ghat(r) exp(-i/2 q^T theta r), inverted with
    one 2d-dimensional FFT. m is 1, xi or eta per the variant.
    """
    if grid.dim != theta.dim:
        raise ValueError(f"grid dimension {grid.dim} does not match theta {theta.dim}")
    fg = _on_grid(f, grid, decay_tol, "f")
    gg = _on_grid(g, grid, decay_tol, "g")
    d = grid.dim
    fs = fg.spectrum()
    gs = gg.spectrum()
    joint = np.multiply.outer(fs, gs)
    if not theta.is_zero:
        ks = grid.frequencies()
        q = np.stack(np.meshgrid(*ks, indexing="ij"), axis=-1)
        # exponent -i/2 sum_{mu nu} q_mu theta_{mu nu} r_nu, as an outer product
        tq = q @ theta.entries
        s = np.zeros(joint.shape)
        for nu in range(d):
            s += np.multiply.outer(tq[..., nu], q[..., nu])
        joint *= np.exp(-0.5j * s)
    two = grid.product(grid)
    h = GridFunction.from_spectrum(two, joint)
    if variant.tag == "plain_star":
        return h
    axes = grid.axes()
    mesh = np.meshgrid(*axes, *axes, indexing="ij", sparse=True)
    u = np.stack(np.broadcast_arrays(*[mesh[i] - mesh[d + i] for i in range(d)]), axis=-1)
    return GridFunction(two, h.samples * variant.multiplier(u))
