"""
Noncommutativity geometry, the Gaussian-packet test-function class, grids,
and the damping profiles used by the tilde-star variants.

A Gaussian packet is

    coeff * exp(-1/2 (x - center)^T W (x - center) + i momentum . x)

with W complex symmetric and Re(W) positive definite. Packets read from
configs have real W; complex widths appear as results of star products of
anisotropic packets.

Fourier convention used throughout the package:

    fhat(k) = int f(x) exp(-i k . x) dx,
    f(x)    = (2 pi)^-d int fhat(k) exp(i k . x) dk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ThetaMatrix",
    "make_theta",
    "GaussianPacket",
    "TestFunction",
    "packet_fourier",
    "packet_inverse_fourier",
    "GridSpec",
    "GridFunction",
    "GridError",
    "DampingProfile",
    "StarVariant",
    "profile_eval",
    "sqrt_det",
    "max_norm",
]

MAX_DIM = 4


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def max_norm(u) -> np.ndarray:
    """Component-wise max norm |u| = max_i |u_i| over the last axis."""
    return np.max(np.abs(np.asarray(u, dtype=float)), axis=-1)


def sqrt_det(m: np.ndarray) -> complex:
    """det(m)^(1/2) on the branch continuous from real positive matrices.

    Valid for complex symmetric m with positive-definite real part: every
    eigenvalue then has positive real part, so the principal square root
    of each eigenvalue is continuous along the path to the identity.
    """
    lam = np.linalg.eigvals(np.asarray(m, dtype=complex))
    return complex(np.prod(np.sqrt(lam)))


# ----------------------------------------------------------------------------
# theta
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaMatrix:
    """Constant antisymmetric noncommutativity matrix."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"theta must be square, got shape {m.shape}")
        if not 2 <= m.shape[0] <= MAX_DIM:
            raise ValueError(f"theta dimension must be in [2, {MAX_DIM}]")
        if not np.all(np.isfinite(m)):
            raise ValueError("theta entries must be finite")
        if not np.array_equal(m, -m.T):
            raise ValueError("theta must be antisymmetric")
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.entries)))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.entries)

    def scaled(self, factor: float) -> "ThetaMatrix":
        return ThetaMatrix(self.entries * float(factor))

    def nonzero(self) -> list[tuple[int, int, float]]:
        """(mu, nu, value) for every nonzero entry, both triangles."""
        idx = np.argwhere(self.entries != 0)
        return [(int(i), int(j), float(self.entries[i, j])) for i, j in idx]

    def __eq__(self, other):
        return isinstance(other, ThetaMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def make_theta(dim: int, upper_entries: Iterable[tuple[int, int, float]] = ()) -> ThetaMatrix:
    """Build theta from its strict upper triangle.

    >>> make_theta(2, [(0, 1, 0.1)]).entries.tolist()
    [[0.0, 0.1], [-0.1, 0.0]]
    """
    if not isinstance(dim, (int, np.integer)) or not 2 <= dim <= MAX_DIM:
        raise ValueError(f"dim must be an integer in [2, {MAX_DIM}], got {dim!r}")
    m = np.zeros((dim, dim))
    for mu, nu, value in upper_entries:
        if not (0 <= mu < dim and 0 <= nu < dim):
            raise ValueError(f"index ({mu}, {nu}) out of range for dim {dim}")
        if mu >= nu:
            raise ValueError(f"upper entries need mu < nu, got ({mu}, {nu})")
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"theta[{mu}][{nu}] is not finite")
        m[mu, nu] = value
        m[nu, mu] = -value
    return ThetaMatrix(m)


# ----------------------------------------------------------------------------
# Gaussian packets
# ----------------------------------------------------------------------------

def _as_width(width, dim: int) -> np.ndarray:
    w = np.asarray(width, dtype=complex)
    if w.ndim == 0:
        w = w * np.eye(dim)
    elif w.ndim == 1:
        w = np.diag(w)
    if w.shape != (dim, dim):
        raise ValueError(f"width must be {dim}x{dim}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("width must be finite")
    if not np.allclose(w, w.T, rtol=0, atol=1e-12 * max(1.0, np.abs(w).max())):
        raise ValueError("width must be symmetric")
    w = 0.5 * (w + w.T)
    if np.linalg.eigvalsh(w.real).min() <= 0:
        raise ValueError("width must have positive-definite real part")
    if not np.any(w.imag):
        w = w.real.astype(complex)
    return w


@dataclass(frozen=True, eq=False)
class GaussianPacket:
    """coeff * exp(-1/2 (x-center)^T width (x-center) + i momentum . x)."""

    coeff: complex
    center: np.ndarray
    momentum: np.ndarray
    width: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        d = c.size
        if not 1 <= d <= MAX_DIM:
            raise ValueError(f"packet dimension must be in [1, {MAX_DIM}]")
        p = np.array(self.momentum, dtype=float).reshape(-1)
        if p.size != d:
            raise ValueError("center and momentum dimensions differ")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(p))):
            raise ValueError("center and momentum must be finite")
        coeff = complex(self.coeff)
        if not (math.isfinite(coeff.real) and math.isfinite(coeff.imag)):
            raise ValueError("coeff must be finite")
        object.__setattr__(self, "coeff", coeff)
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "momentum", _frozen(p))
        object.__setattr__(self, "width", _frozen(_as_width(self.width, d)))

    @property
    def dim(self) -> int:
        return self.center.size

    def __eq__(self, other):
        if not isinstance(other, GaussianPacket):
            return NotImplemented
        return (self.coeff == other.coeff and np.array_equal(self.center, other.center)
                and np.array_equal(self.momentum, other.momentum)
                and np.array_equal(self.width, other.width))

    def __hash__(self):
        return hash((self.coeff, self.center.tobytes(), self.momentum.tobytes(), self.width.tobytes()))

    @classmethod
    def unit(cls, dim: int, coeff: complex = 1.0) -> "GaussianPacket":
        return cls(coeff, np.zeros(dim), np.zeros(dim), np.eye(dim))

    # exponent form: log g(x) = -1/2 x^T W x + b . x + c0
    def exponent(self) -> tuple[np.ndarray, np.ndarray, complex]:
        w = self.width
        a = self.center
        b = w @ a + 1j * self.momentum
        if self.coeff == 0:
            raise ValueError("zero packet has no exponent form")
        return w, b, complex(np.log(self.coeff)) - 0.5 * complex(a @ w @ a)

    @classmethod
    def from_exponent(cls, w, b, c0) -> "GaussianPacket":
        """Inverse of `exponent`; solves W a + i p = b for real a, p."""
        w = np.asarray(w, dtype=complex)
        b = np.asarray(b, dtype=complex)
        a = np.linalg.solve(w.real, b.real)
        p = b.imag - w.imag @ a
        coeff = np.exp(complex(c0) + 0.5 * complex(a @ w @ a))
        return cls(coeff, a, p, w)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x - self.center
        quad = np.einsum("...i,ij,...j->...", y, self.width, y)
        return self.coeff * np.exp(-0.5 * quad + 1j * (x @ self.momentum))

    def conj(self) -> "GaussianPacket":
        return GaussianPacket(np.conj(self.coeff), self.center, -self.momentum, np.conj(self.width))

    def scaled(self, factor: complex) -> "GaussianPacket":
        return GaussianPacket(self.coeff * factor, self.center, self.momentum, self.width)

    def fourier(self) -> "GaussianPacket":
        w, b, c0 = self.exponent()
        v = np.linalg.inv(w)
        c = c0 + 0.5 * complex(b @ v @ b) + 0.5 * self.dim * math.log(2 * math.pi)
        return GaussianPacket.from_exponent(v, -1j * (v @ b), c - np.log(sqrt_det(w)))

    def inverse_fourier(self) -> "GaussianPacket":
        w, b, c0 = self.exponent()
        v = np.linalg.inv(w)
        c = c0 + 0.5 * complex(b @ v @ b) - 0.5 * self.dim * math.log(2 * math.pi)
        return GaussianPacket.from_exponent(v, 1j * (v @ b), c - np.log(sqrt_det(w)))


@dataclass(frozen=True)
class TestFunction:
    """Finite sum of Gaussian packets; the empty sum is the zero function."""

    __test__ = False  # keep pytest from collecting this class

    terms: tuple[GaussianPacket, ...] = ()
    dim: int = field(default=0)

    def __post_init__(self):
        terms = tuple(self.terms)
        dims = {t.dim for t in terms}
        if len(dims) > 1:
            raise ValueError(f"mixed packet dimensions {sorted(dims)}")
        d = dims.pop() if dims else self.dim
        if d == 0:
            raise ValueError("zero TestFunction needs an explicit dim")
        if self.dim and self.dim != d:
            raise ValueError(f"dim={self.dim} does not match packet dimension {d}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "dim", d)

    @classmethod
    def of(cls, *packets: GaussianPacket) -> "TestFunction":
        return cls(tuple(packets))

    @classmethod
    def zero(cls, dim: int) -> "TestFunction":
        return cls((), dim)

    @classmethod
    def gaussian(cls, dim: int, center=None, momentum=None, width=1.0, coeff=1.0) -> "TestFunction":
        center = np.zeros(dim) if center is None else center
        momentum = np.zeros(dim) if momentum is None else momentum
        return cls.of(GaussianPacket(coeff, center, momentum, width))

    @property
    def is_zero(self) -> bool:
        return all(t.coeff == 0 for t in self.terms)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=complex)
        for t in self.terms:
            out += t(x)
        return out

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if not isinstance(other, TestFunction):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return TestFunction(self.terms + other.terms, self.dim)

    def __mul__(self, factor) -> "TestFunction":
        if isinstance(factor, TestFunction):
            return NotImplemented
        return TestFunction(tuple(t.scaled(factor) for t in self.terms), self.dim)

    __rmul__ = __mul__

    def __neg__(self) -> "TestFunction":
        return self * -1

    def __sub__(self, other: "TestFunction") -> "TestFunction":
        return self + (-other)

    def conj(self) -> "TestFunction":
        return TestFunction(tuple(t.conj() for t in self.terms), self.dim)

    def fourier(self) -> "TestFunction":
        return packet_fourier(self)

    def inverse_fourier(self) -> "TestFunction":
        return packet_inverse_fourier(self)

    def fourier_at(self, k) -> np.ndarray:
        """Evaluate fhat at the points k (shape (..., d))."""
        if not self.terms:
            return np.zeros(np.shape(k)[:-1], dtype=complex)
        return self.fourier()(k)


def packet_fourier(f: TestFunction) -> TestFunction:
    """Exact Fourier transform, term by term."""
    if not f.terms:
        raise ValueError("packet_fourier needs at least one term")
    return TestFunction(tuple(t.fourier() for t in f.terms), f.dim)


def packet_inverse_fourier(fhat: TestFunction) -> TestFunction:
    if not fhat.terms:
        raise ValueError("packet_inverse_fourier needs at least one term")
    return TestFunction(tuple(t.inverse_fourier() for t in fhat.terms), fhat.dim)


# ----------------------------------------------------------------------------
# grids
# ----------------------------------------------------------------------------

class GridError(ValueError):
    """Grid too small or too coarse for the functions placed on it."""


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic uniform grid: x_j = lower + j * (upper - lower) / n, j < n."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        n = np.atleast_1d(self.n)
        if n.size == 1:
            n = np.repeat(n, len(lower))
        n = tuple(int(v) for v in n)
        if not (len(lower) == len(upper) == len(n)):
            raise ValueError("lower, upper and n must have equal length")
        if any(u <= lo for lo, u in zip(lower, upper)):
            raise ValueError("upper bound must exceed lower bound on every axis")
        if not all(_is_pow2(v) for v in n):
            raise GridError(f"sample counts must be powers of two, got {n}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "n", n)

    @classmethod
    def cube(cls, dim: int, half_width: float, n: int) -> "GridSpec":
        return cls((-half_width,) * dim, (half_width,) * dim, (n,) * dim)

    @classmethod
    def fitting(cls, functions: Sequence[TestFunction], tol: float = 1e-13,
                max_n: int = 1024) -> "GridSpec":
        """Smallest power-of-two cube grid holding every packet and its spectrum.

        Spatial decay below `tol` at the box edge, spectral decay below `tol`
        at half the Nyquist frequency (so a twisted convolution of two such
        spectra does not wrap around).
        """
        terms = [t for f in functions for t in f.terms]
        if not terms:
            raise ValueError("no packets to fit")
        dim = terms[0].dim
        depth = math.sqrt(2 * math.log(1 / tol))
        half = 0.0
        kmax = 0.0
        for t in terms:
            lam = np.linalg.eigvalsh(t.width.real).min()
            half = max(half, np.abs(t.center).max() + depth / math.sqrt(lam))
            vhat = np.linalg.inv(t.width).real
            kmax = max(kmax, np.abs(t.momentum).max() + depth / math.sqrt(np.linalg.eigvalsh(vhat).min()))
        half = math.ceil(half)
        nyquist = 2 * kmax
        n = 2 ** math.ceil(math.log2(max(8, nyquist * 2 * half / math.pi)))
        if n > max_n:
            raise GridError(f"fitting grid needs n={n} > max_n={max_n}")
        return cls.cube(dim, half, n)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.n)

    @property
    def lengths(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [lo + np.arange(n) * h for lo, n, h in zip(self.lower, self.n, self.spacing)]

    def points(self) -> np.ndarray:
        """Grid points, shape n_1 x ... x n_d x d."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def frequencies(self) -> list[np.ndarray]:
        """Angular frequencies per axis in FFT order."""
        return [2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(self.n, self.spacing)]

    def refined(self) -> "GridSpec":
        return GridSpec(self.lower, self.upper, tuple(2 * v for v in self.n))

    def product(self, other: "GridSpec") -> "GridSpec":
        return GridSpec(self.lower + other.lower, self.upper + other.upper, self.n + other.n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples of a function on a GridSpec."""

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.shape != self.grid.n:
            raise ValueError(f"samples shape {s.shape} does not match grid {self.grid.n}")
        object.__setattr__(self, "samples", _frozen(s))

    @classmethod
    def sample(cls, f, grid: GridSpec) -> "GridFunction":
        return cls(grid, f(grid.points()))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def integral(self) -> complex:
        return complex(self.samples.sum() * self.grid.cell_volume)

    def boundary_ratio(self) -> float:
        """max |f| on the outermost grid layer, relative to max |f|."""
        a = np.abs(self.samples)
        peak = a.max()
        if peak == 0:
            return 0.0
        edge = 0.0
        for ax in range(a.ndim):
            edge = max(edge, np.take(a, 0, axis=ax).max(), np.take(a, -1, axis=ax).max())
        return float(edge / peak)

    def spectrum(self) -> np.ndarray:
        """Samples of the continuous Fourier transform at grid frequencies (FFT order)."""
        g = self.grid
        spec = np.fft.fftn(self.samples) * g.cell_volume
        for ax, (k, lo) in enumerate(zip(g.frequencies(), g.lower)):
            shape = [1] * g.dim
            shape[ax] = -1
            spec = spec * np.exp(-1j * k * lo).reshape(shape)
        return spec

    @classmethod
    def from_spectrum(cls, grid: GridSpec, spec: np.ndarray) -> "GridFunction":
        for ax, (k, lo) in enumerate(zip(grid.frequencies(), grid.lower)):
            shape = [1] * grid.dim
            shape[ax] = -1
            spec = spec * np.exp(1j * k * lo).reshape(shape)
        return cls(grid, np.fft.ifftn(spec) / grid.cell_volume)

    def spectral_tail_ratio(self) -> float:
        """max |fhat| beyond half the Nyquist frequency on any axis, relative to max |fhat|."""
        spec = np.abs(np.fft.fftn(self.samples))
        peak = spec.max()
        if peak == 0:
            return 0.0
        mask = np.zeros(spec.shape, dtype=bool)
        for ax, n in enumerate(self.grid.n):
            f = np.abs(np.fft.fftfreq(n))
            shape = [1] * spec.ndim
            shape[ax] = -1
            mask |= (f > 0.25).reshape(shape)
        return float(spec[mask].max() / peak) if mask.any() else 0.0

    def diagonal(self) -> np.ndarray:
        """For a 2d-variable function on a product grid, the restriction x = y."""
        d = self.dim // 2
        if 2 * d != self.dim or self.grid.n[:d] != self.grid.n[d:]:
            raise ValueError("diagonal needs a product grid of two equal halves")
        n = self.grid.n[:d]
        idx = np.indices(n)
        return self.samples[tuple(idx) + tuple(idx)]


# ----------------------------------------------------------------------------
# damping profiles
# ----------------------------------------------------------------------------

PROFILE_KINDS = ("none", "gaussian_xi", "plateau_eta")
VARIANT_TAGS = ("plain_star", "xi_damped", "eta_regularized")


@dataclass(frozen=True)
class DampingProfile:
    """xi (Gaussian damping) or eta (plateau regularization) multiplier of x - y."""

    kind: str = "none"
    C: float = 1.0
    theta_sup: float = 1.0
    alpha: float = 1.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        for name in ("C", "theta_sup", "alpha", "epsilon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.epsilon >= self.alpha:
            raise ValueError("epsilon must be smaller than alpha")
        if self.kind == "gaussian_xi" and self.C < 1:
            # xi(0) = 1 must satisfy the bound
            raise ValueError("gaussian_xi needs C >= 1")

    def __call__(self, u) -> np.ndarray:
        return profile_eval(self, u)

    def xi_bound(self, u) -> np.ndarray:
        return self.C * np.exp(-max_norm(u) ** 2 / self.theta_sup)


def profile_eval(p: DampingProfile, u) -> np.ndarray | float:
    """xi(u) or eta(u); u has shape (..., d), the norm is the component max."""
    if p.kind == "none":
        raise ValueError("profile kind 'none' has no multiplier")
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("u must be finite")
    s = max_norm(u) ** 2
    if p.kind == "gaussian_xi":
        out = np.exp(-s / p.theta_sup)
    else:
        t = np.clip((p.alpha - s) / p.epsilon, 0.0, 1.0)
        out = t * t * (3.0 - 2.0 * t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StarVariant:
    tag: str = "plain_star"
    profile: DampingProfile | None = None

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ValueError(f"unknown variant {self.tag!r}")
        need = {"plain_star": None, "xi_damped": "gaussian_xi", "eta_regularized": "plateau_eta"}[self.tag]
        have = None if self.profile is None or self.profile.kind == "none" else self.profile.kind
        if need != have:
            raise ValueError(f"variant {self.tag} requires profile {need}, got {have}")

    def multiplier(self, u) -> np.ndarray:
        if self.profile is None:
            return np.ones(np.shape(u)[:-1])
        return profile_eval(self.profile, u)


PLAIN = StarVariant()
