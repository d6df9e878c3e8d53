"""
Free scalar field on a spatial circle: a Wightman family with finite,
exactly summable smeared n-point functionals.

Spacetime is 2-dimensional, x = (t, s). Modes k_j = 2 pi j / L for
j = -K..K with omega_j = sqrt(k_j^2 + m^2) and

    W_2(x, y) = sum_j exp(-i omega_j (t_x - t_y) + i k_j (s_x - s_y)) / (2 omega_j L).

Higher W_n are Wick sums over perfect matchings. Smearing a star chain
against W_n reduces, pairing by pairing and mode by mode, to the Fourier
form of the chain at momenta +p_j (earlier slot) and -p_j (later slot)
with p_j = (omega_j, k_j).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .nccore import TestFunction
from .star import StarChain, twist_phase

__all__ = [
    "ModeField",
    "PairingTable",
    "pairings",
    "BudgetExceeded",
    "two_point",
    "wightman_npoint",
    "wick_npoint_smeared",
    "fourier_rows",
    "smeared_from_rows",
    "hermiticity_check",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 2_000_000


class BudgetExceeded(RuntimeError):
    """The Wick sum would exceed the configured term budget."""


@dataclass(frozen=True)
class ModeField:
    mass: float = 1.0
    box_length: float = 2 * math.pi
    cutoff: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise ValueError("mass must be positive")
        if not (math.isfinite(self.box_length) and self.box_length > 0):
            raise ValueError("box_length must be positive")
        if not isinstance(self.cutoff, (int, np.integer)) or self.cutoff < 0:
            raise ValueError("cutoff must be a non-negative integer")

    dim = 2

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.arange(-self.cutoff, self.cutoff + 1) / self.box_length

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.k ** 2 + self.mass ** 2)

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / (2 * self.omega * self.box_length)

    @property
    def momenta(self) -> np.ndarray:
        """p_j = (omega_j, k_j), shape (2K+1, 2)."""
        return np.stack([self.omega, self.k], axis=-1)

    @property
    def n_modes(self) -> int:
        return 2 * self.cutoff + 1


@lru_cache(maxsize=None)
def pairings(n: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All perfect matchings of range(n), each pair ordered (i < j)."""
    if n % 2:
        return ()
    if n == 0:
        return ((),)
    out = []
    for j in range(1, n):
        rest = [i for i in range(1, n) if i != j]
        for sub in pairings(n - 2):
            out.append(((0, j),) + tuple((rest[a], rest[b]) for a, b in sub))
    return tuple(out)


@dataclass(frozen=True)
class PairingTable:
    n: int
    pairings: tuple

    @classmethod
    def build(cls, n: int) -> "PairingTable":
        if n < 0 or n % 2:
            raise ValueError("PairingTable needs an even n >= 0")
        return cls(n, pairings(n))

    def __len__(self) -> int:
        return len(self.pairings)


def two_point(field: ModeField, x, y) -> np.ndarray:
    """W_2(x, y); x and y broadcast over leading axes, last axis (t, s)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dt = (x[..., 0] - y[..., 0])[..., None]
    ds = (x[..., 1] - y[..., 1])[..., None]
    terms = field.weights * np.exp(-1j * field.omega * dt + 1j * field.k * ds)
    return terms.sum(axis=-1)


def wightman_npoint(field: ModeField, points) -> np.ndarray:
    """Unsmeared W_n(x_1..x_n) by the Wick sum; points has shape (..., n, 2)."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[-2]
    if n % 2:
        return np.zeros(pts.shape[:-2], dtype=complex)
    total = np.zeros(pts.shape[:-2], dtype=complex)
    for pairing in pairings(n):
        term = np.ones(pts.shape[:-2], dtype=complex)
        for a, b in pairing:
            term = term * two_point(field, pts[..., a, :], pts[..., b, :])
        total = total + term
    return total


def _term_count(field: ModeField, n: int) -> int:
    return field.n_modes ** (n // 2) * len(pairings(n))


def fourier_rows(field: ModeField, f: TestFunction) -> np.ndarray:
    """fhat(+p_j) and fhat(-p_j) for every mode, shape (2, 2K+1)."""
    if f.is_zero:
        return np.zeros((2, field.n_modes), dtype=complex)
    ft = f.fourier()
    p = field.momenta
    return np.stack([ft(p), ft(-p)])


def smeared_from_rows(field: ModeField, theta, rows: np.ndarray, budget: int = DEFAULT_BUDGET) -> complex:
    """Wick sum for a chain given its per-slot Fourier rows, shape (n, 2, 2K+1)."""
    n = rows.shape[0]
    if n == 0:
        return 1.0 + 0j
    if n % 2:
        return 0j
    count = _term_count(field, n)
    if count > budget:
        raise BudgetExceeded(f"Wick sum for n={n}, K={field.cutoff} needs {count} terms > budget {budget}")
    p = field.momenta
    half = n // 2
    modes = np.array(list(itertools.product(range(field.n_modes), repeat=half)), dtype=int)
    weight = np.prod(field.weights[modes], axis=1)
    parts = []
    for pairing in pairings(n):
        kappa = np.empty((len(modes), n, 2))
        value = weight.astype(complex)
        for slot, (a, b) in enumerate(pairing):
            j = modes[:, slot]
            kappa[:, a] = p[j]
            kappa[:, b] = -p[j]
            value = value * rows[a, 0, j] * rows[b, 1, j]
        parts.append(np.sum(value * twist_phase(theta, kappa)))
    # fixed-order pairwise reduction: bit-stable regardless of caller threading
    return complex(np.sum(np.array(parts)))


def wick_npoint_smeared(field: ModeField, chain: StarChain, coeff: complex = 1.0,
                        budget: int = DEFAULT_BUDGET) -> complex:
    """int W_n(x_1..x_n) (f_1 * ... * f_n)(x_1..x_n) dx as a finite exact sum.

    The empty chain gives `coeff` (W_0 = 1); odd chains give exactly 0.
    """
    if chain.variant.tag != "plain_star":
        raise ValueError("smeared n-point functionals are defined for plain_star chains")
    if chain.theta.dim != field.dim:
        raise ValueError(f"chain dimension {chain.theta.dim} != field dimension {field.dim}")
    n = len(chain)
    if n % 2 or (n and chain.is_zero):
        return 0j
    rows = np.array([fourier_rows(field, f) for f in chain.functions]).reshape(n, 2, field.n_modes)
    return complex(coeff) * smeared_from_rows(field, chain.theta, rows, budget)


def hermiticity_check(field: ModeField, n: int, samples: int, seed: int = 0,
                      spread: float | None = None) -> float:
    """max |W_n(x_1..x_n) - conj W_n(x_n..x_1)| over random point tuples."""
    if n % 2 or not 0 < n <= 6:
        raise ValueError("hermiticity_check needs even n in {2, 4, 6}")
    rng = np.random.default_rng(seed)
    spread = field.box_length if spread is None else spread
    pts = rng.uniform(-spread, spread, size=(samples, n, 2))
    fwd = wightman_npoint(field, pts)
    rev = wightman_npoint(field, pts[:, ::-1, :])
    return float(np.max(np.abs(fwd - np.conj(rev))))
