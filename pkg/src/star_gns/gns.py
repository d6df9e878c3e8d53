"""
Finite-dimensional skeleton of the field-operator space.

Vectors are finite sums of star chains applied to the vacuum; the scalar
product is the Wightman functional of the conjugated, reversed bra chain
followed by the ket chain. Degenerate directions are quotiented out by an
eigenvalue threshold and the remaining indefinite form is split into its
positive and negative parts.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nccore import TestFunction, ThetaMatrix, make_theta
from .wightman import DEFAULT_BUDGET, BudgetExceeded, ModeField, fourier_rows, smeared_from_rows

__all__ = [
    "SequenceVector",
    "GramMatrix",
    "QuotientResult",
    "KreinDecomposition",
    "KreinError",
    "SweepResult",
    "vacuum",
    "apply_field_operator",
    "apply_word",
    "gram",
    "isotropic_quotient",
    "krein_decompose",
    "cyclicity_profile",
    "commutative_limit_sweep",
    "numerical_rank",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SequenceVector:
    """Finite sum of terms coeff * (f_1 * ... * f_i); the empty chain is the g_0 slot."""

    terms: tuple[tuple[complex, tuple[TestFunction, ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((complex(c), tuple(fs)) for c, fs in self.terms))

    @property
    def scalar(self) -> complex:
        return sum((c for c, fs in self.terms if not fs), 0j)

    def levels(self) -> dict[int, list[tuple[complex, tuple[TestFunction, ...]]]]:
        out: dict[int, list] = {}
        for c, fs in self.terms:
            out.setdefault(len(fs), []).append((c, fs))
        return out

    @property
    def max_level(self) -> int:
        return max((len(fs) for _, fs in self.terms), default=0)

    def canonical(self) -> dict:
        out: dict = {}
        for c, fs in self.terms:
            out[fs] = out.get(fs, 0) + c
        return {k: v for k, v in out.items() if v != 0}

    def simplified(self) -> "SequenceVector":
        return SequenceVector(tuple((c, fs) for fs, c in self.canonical().items()))

    def __eq__(self, other):
        if not isinstance(other, SequenceVector):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(frozenset(self.canonical().items()))

    def __add__(self, other: "SequenceVector") -> "SequenceVector":
        return SequenceVector(self.terms + other.terms)

    def __mul__(self, c: complex) -> "SequenceVector":
        return SequenceVector(tuple((c * k, fs) for k, fs in self.terms))

    __rmul__ = __mul__

    def __sub__(self, other: "SequenceVector") -> "SequenceVector":
        return self + other * -1


def vacuum() -> SequenceVector:
    return SequenceVector(((1.0, ()),))


def apply_field_operator(f: TestFunction, v: SequenceVector) -> SequenceVector:
    """phi_f: prepend f to every chain (the scalar slot becomes a level-1 chain)."""
    for _, fs in v.terms:
        if fs and fs[0].dim != f.dim:
            raise ValueError(f"dimension mismatch: f {f.dim}, chain {fs[0].dim}")
    return SequenceVector(tuple((c, (f,) + fs) for c, fs in v.terms))


def apply_word(word: Sequence[TestFunction], v: SequenceVector | None = None) -> SequenceVector:
    """phi_{w_1} ... phi_{w_k} v; the last operator in the word acts first."""
    v = vacuum() if v is None else v
    for f in reversed(word):
        v = apply_field_operator(f, v)
    return v


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    basis: tuple[SequenceVector, ...] | None = None
    tolerance: float = DEFAULT_TOL

    def __post_init__(self):
        e = np.array(self.entries, dtype=complex)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("Gram matrix must be square")
        if self.basis is not None and len(self.basis) != e.shape[0]:
            raise ValueError("basis length does not match matrix size")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def hermiticity_residual(self) -> float:
        if self.size == 0:
            return 0.0
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def hermitian_part(self) -> np.ndarray:
        return 0.5 * (self.entries + self.entries.conj().T)

    def product(self, x, y) -> complex:
        """<x, y> for coefficient vectors over the basis."""
        return complex(np.conj(x) @ self.entries @ y)


class _FourierTable:
    """Fourier rows per function; conj(f) is read off f's row."""

    def __init__(self, field: ModeField):
        self.field = field
        self.rows: dict[int, np.ndarray] = {}
        self.keep: list = []

    def row(self, f: TestFunction, conj: bool) -> np.ndarray:
        key = id(f)
        if key not in self.rows:
            self.keep.append(f)
            self.rows[key] = fourier_rows(self.field, f)
        r = self.rows[key]
        # conj(f)^(k) = conj(fhat(-k))
        return np.conj(r[::-1]) if conj else r


def _entry(bra: SequenceVector, ket: SequenceVector, table: _FourierTable, theta: ThetaMatrix,
           field: ModeField, budget: int) -> complex:
    total = 0j
    for cb, fb in bra.terms:
        if cb == 0:
            continue
        bra_rows = [table.row(f, True) for f in reversed(fb)]
        for ck, fk in ket.terms:
            if ck == 0 or (len(fb) + len(fk)) % 2:
                continue
            rows = bra_rows + [table.row(f, False) for f in fk]
            arr = np.array(rows).reshape(len(rows), 2, field.n_modes)
            total += np.conj(cb) * ck * smeared_from_rows(field, theta, arr, budget)
    return total


def gram(basis: Sequence[SequenceVector], field: ModeField, theta: ThetaMatrix,
         tolerance: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET, threads: int = 1,
         assume_hermitian: bool = False) -> GramMatrix:
    """Pairwise Wightman scalar products of the basis vectors.

    With `assume_hermitian` only the upper triangle is evaluated and the
    rest filled by conjugation (used where Hermiticity is checked elsewhere).
    """
    if theta.dim != field.dim:
        raise ValueError(f"theta dimension {theta.dim} != field dimension {field.dim}")
    basis = tuple(basis)
    n = len(basis)
    table = _FourierTable(field)
    for v in basis:
        for _, fs in v.terms:
            for f in fs:
                table.row(f, False)
    pairs = [(a, b) for a in range(n) for b in range(n) if not assume_hermitian or b >= a]

    def work(ab):
        a, b = ab
        try:
            return _entry(basis[a], basis[b], table, theta, field, budget)
        except BudgetExceeded as exc:
            raise BudgetExceeded(f"Gram entry ({a}, {b}): {exc}") from exc

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(work, pairs))
    else:
        values = [work(ab) for ab in pairs]
    g = np.zeros((n, n), dtype=complex)
    for (a, b), v in zip(pairs, values):
        g[a, b] = v
        if assume_hermitian and a != b:
            g[b, a] = np.conj(v)
    return GramMatrix(g, basis, tolerance)


def numerical_rank(m: np.ndarray, tol: float = DEFAULT_TOL) -> int:
    if m.size == 0:
        return 0
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    top = np.abs(lam).max()
    if top == 0:
        return 0
    return int(np.sum(np.abs(lam) > tol * top))


@dataclass(frozen=True, eq=False)
class QuotientResult:
    reduced: GramMatrix
    null_dim: int
    projector: np.ndarray
    embedding: np.ndarray
    asymmetry: float
    eigenvalues: np.ndarray

    @property
    def all_isotropic(self) -> bool:
        return self.reduced.size == 0


def isotropic_quotient(G: GramMatrix, tolerance: float | None = None) -> QuotientResult:
    """Drop the numerical isotropic subspace.

    Columns of `embedding` are the kept eigenvectors of the Hermitian part;
    `reduced` is embedding^H G embedding, `projector` the orthogonal
    projector onto their span.
    """
    tol = G.tolerance if tolerance is None else tolerance
    asym = G.hermiticity_residual()
    if asym > tol * max(1.0, float(np.abs(G.entries).max(initial=0.0))):
        log.warning("Gram matrix asymmetric by %.3e; using its Hermitian part", asym)
    h = G.hermitian_part()
    n = G.size
    if n == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return QuotientResult(GramMatrix(empty, (), tol), 0, empty, np.zeros((0, 0)), asym, np.zeros(0))
    lam, u = np.linalg.eigh(h)
    top = np.abs(lam).max()
    keep = np.abs(lam) > tol * top if top > 0 else np.zeros(n, dtype=bool)
    q = u[:, keep]
    if not keep.any():
        log.warning("Gram matrix is entirely isotropic")
    reduced = q.conj().T @ h @ q
    basis = None
    if G.basis is not None:
        basis = tuple(
            SequenceVector(tuple((q[b, a] * c, fs) for b in range(n) for c, fs in G.basis[b].terms))
            for a in range(q.shape[1])
        )
    return QuotientResult(GramMatrix(reduced, basis, tol), int(n - keep.sum()), q @ q.conj().T, q, asym, lam)


class KreinError(ValueError):
    """Nondegeneracy violated: an eigenvalue sits within tolerance of zero."""


@dataclass(frozen=True, eq=False)
class KreinDecomposition:
    """Fundamental decomposition of a nondegenerate indefinite Gram matrix.

    Coordinates are coefficient vectors over the Gram basis. Columns of
    positive_basis (negative_basis) have <e, e> = +1 (-1) and the two
    families are mutually orthogonal under <.,.>.
    """

    gram: np.ndarray
    positive_basis: np.ndarray
    negative_basis: np.ndarray
    null_dim: int = 0
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    _proj_pos: np.ndarray = field(default=None, repr=False)
    _proj_neg: np.ndarray = field(default=None, repr=False)

    @property
    def signature(self) -> tuple[int, int]:
        return self.positive_basis.shape[1], self.negative_basis.shape[1]

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=complex)
        return self._proj_pos @ x, self._proj_neg @ x

    def indefinite(self, x, y) -> complex:
        return complex(np.conj(x) @ self.gram @ y)

    def positive_product(self, x, y) -> complex:
        """(x, y) = <x+, y+> - <x-, y->."""
        xp, xm = self.split(x)
        yp, ym = self.split(y)
        return self.indefinite(xp, yp) - self.indefinite(xm, ym)

    def norm(self, x) -> float:
        return math.sqrt(max(self.positive_product(x, x).real, 0.0))

    def positive_gram(self) -> np.ndarray:
        """Matrix of (.,.) over the basis."""
        p, m = self._proj_pos, self._proj_neg
        return p.conj().T @ self.gram @ p - m.conj().T @ self.gram @ m

    def reconstruct(self) -> np.ndarray:
        """<x+, y+> + <x-, y-> as a matrix; equals the Gram matrix."""
        p, m = self._proj_pos, self._proj_neg
        return p.conj().T @ self.gram @ p + m.conj().T @ self.gram @ m

    def cross_residual(self) -> float:
        if 0 in self.signature:
            return 0.0
        return float(np.max(np.abs(self.positive_basis.conj().T @ self.gram @ self.negative_basis)))


def krein_decompose(G: GramMatrix | np.ndarray, tolerance: float | None = None,
                    null_dim: int = 0) -> KreinDecomposition:
    if isinstance(G, GramMatrix):
        tol = G.tolerance if tolerance is None else tolerance
        g = G.hermitian_part()
    else:
        tol = DEFAULT_TOL if tolerance is None else tolerance
        g = 0.5 * (np.asarray(G, dtype=complex) + np.asarray(G, dtype=complex).conj().T)
    lam, u = np.linalg.eigh(g)
    top = np.abs(lam).max(initial=0.0)
    small = np.abs(lam) <= tol * top if top > 0 else np.ones(lam.size, dtype=bool)
    if small.any():
        raise KreinError(
            f"{int(small.sum())} eigenvalue(s) within {tol:g} * max|lambda| of zero; "
            "quotient the isotropic subspace first or retune the tolerance"
        )
    pos = lam > 0
    up, um = u[:, pos], u[:, ~pos]
    return KreinDecomposition(
        gram=g,
        positive_basis=up / np.sqrt(lam[pos]),
        negative_basis=um / np.sqrt(-lam[~pos]),
        null_dim=null_dim,
        eigenvalues=lam,
        _proj_pos=up @ up.conj().T,
        _proj_neg=um @ um.conj().T,
    )


def cyclicity_profile(field: ModeField, theta: ThetaMatrix, generators: Sequence[TestFunction],
                      max_level: int, tolerance: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET,
                      threads: int = 1) -> list[tuple[int, int]]:
    """Numerical rank of span{phi_{f_i1}..phi_{f_ij} vacuum : j <= level} per level."""
    if not 0 <= max_level <= 3:
        raise ValueError("max_level must be in [0, 3]")
    if len(generators) > 6:
        raise ValueError("at most 6 generators")
    gens = list(generators)
    basis = [vacuum()]
    level_of = [0]
    if gens:
        for lev in range(1, max_level + 1):
            for word in itertools.product(range(len(gens)), repeat=lev):
                basis.append(apply_word([gens[i] for i in word]))
                level_of.append(lev)
    G = gram(basis, field, theta, tolerance, budget, threads, assume_hermitian=True)
    level_of = np.array(level_of)
    top = max_level if gens else 0
    out = []
    for lev in range(top + 1):
        idx = np.flatnonzero(level_of <= lev)
        out.append((lev, numerical_rank(G.entries[np.ix_(idx, idx)], tolerance)))
    return out


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[tuple[float, float], ...]
    slope: float | None
    monotone: bool
    min_slope: float = 0.9

    @property
    def passed(self) -> bool:
        return self.monotone and (self.slope is None or self.slope >= self.min_slope)


def _as_theta(t, dim: int) -> ThetaMatrix:
    if isinstance(t, ThetaMatrix):
        return t
    return make_theta(dim, [(0, 1, float(t))])


def commutative_limit_sweep(basis_builder: Callable[[], Sequence[SequenceVector]] | Sequence[SequenceVector],
                            field: ModeField, theta_values: Sequence, noise: float = 0.05,
                            min_slope: float = 0.9, budget: int = DEFAULT_BUDGET,
                            threads: int = 1) -> SweepResult:
    """Deviation max|G(theta) - G(0)| along a descending theta sequence ending at 0.

    Plain numbers in `theta_values` mean theta^{01}.
    """
    thetas = [_as_theta(t, field.dim) for t in theta_values]
    if len(thetas) < 3:
        raise ValueError("need at least 3 theta values")
    sups = [t.sup_norm() for t in thetas]
    if sups[-1] != 0:
        raise ValueError("theta sequence must end at 0")
    if any(b > a for a, b in zip(sups, sups[1:])):
        raise ValueError("theta values must be descending")
    basis = basis_builder() if callable(basis_builder) else list(basis_builder)
    g0 = gram(basis, field, thetas[-1], budget=budget, threads=threads).entries
    rows = []
    for t, s in zip(thetas[:-1], sups[:-1]):
        g = gram(basis, field, t, budget=budget, threads=threads).entries
        rows.append((s, float(np.max(np.abs(g - g0)))))
    rows.append((0.0, 0.0))
    devs = [d for _, d in rows]
    scale = max(devs)
    monotone = all(b <= a * (1 + noise) + 1e-300 for a, b in zip(devs, devs[1:]))
    fit = [(math.log(s), math.log(d)) for s, d in rows[:-1] if s > 0 and d > 1e-14 * max(scale, 1e-300)]
    slope = None
    if len(fit) >= 2 and scale > 0:
        xs, ys = np.array(fit).T
        slope = float(np.polyfit(xs, ys, 1)[0])
    return SweepResult(tuple(rows), slope, monotone, min_slope)
