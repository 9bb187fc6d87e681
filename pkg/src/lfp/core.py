"""Domain types, frequency lattices, LFP coefficients and FP-norms."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi
DEFAULT_LATTICE_CAP = 10_000_000
# complex entries materialised per evaluation chunk
_CHUNK_ENTRIES = 2_000_000


class LatticeSizeError(ValueError):
    pass


class HermitianSymmetryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Labelled samples ``(x_i, y_i)`` with ``x_i`` in a box of R^d."""

    X: np.ndarray
    y: np.ndarray
    domain: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        # a flat array is a list of 1-d inputs
        X = X.reshape(-1, 1) if X.ndim <= 1 else X
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} labels")
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite coordinate in dataset")
        if len(np.unique(X, axis=0)) != X.shape[0]:
            raise ValueError("dataset inputs must be distinct")
        if self.domain is None:
            domain = (X.min(axis=0), X.max(axis=0))
        else:
            lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in self.domain)
            if np.any(X < lo) or np.any(X > hi):
                raise ValueError("sample outside the declared domain")
            domain = (lo, hi)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "domain", domain)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def M(self) -> int:
        return self.X.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(self.d)] + ["y"])
        for xi, yi in zip(self.X, self.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def sha256(self) -> str:
        return hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[-1] != "y" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
            raise ValueError(f"unexpected dataset header {header!r}")
        arr = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(arr[:, :-1], arr[:, -1])


# ---------------------------------------------------------------------------
# Frequency lattice
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyLattice:
    """Truncated lattice ``(1/L') (Z^d ∩ [-K+1, K-1]^d)`` without the origin.

    Frequencies are stored in lexicographic order of the integer index ``k``.
    Negation reverses that order, so ``-xi[j] == xi[n - 1 - j]`` and the
    second half of the arrays holds the lexicographically positive indices.
    """

    d: int
    L_prime: float
    K: int
    k: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.k.shape[0]

    @property
    def xi(self) -> np.ndarray:
        return self.k / self.L_prime

    @property
    def half(self) -> int:
        return self.size // 2

    @property
    def k_pos(self) -> np.ndarray:
        return self.k[self.half:]

    @property
    def xi_pos(self) -> np.ndarray:
        return self.k_pos / self.L_prime

    def index_of(self, k) -> int:
        """Position of the integer index ``k`` in the stored order."""
        k = np.asarray(k, dtype=int).reshape(-1)
        if k.shape[0] != self.d or np.all(k == 0) or np.any(np.abs(k) > self.K - 1):
            raise KeyError(f"{tuple(k)} is not a lattice index")
        flat = int(np.ravel_multi_index(tuple(k + self.K - 1), (2 * self.K - 1,) * self.d))
        return flat if flat < self.half else flat - 1

    def params(self) -> dict:
        return {"d": self.d, "L_prime": self.L_prime, "K": self.K}


def build_lattice(d: int, L_prime: float, K: int, cap: int = DEFAULT_LATTICE_CAP) -> FrequencyLattice:
    if d < 1:
        raise ValueError("dimension must be positive")
    if K < 2:
        raise ValueError("K must be at least 2")
    if not L_prime > 0:
        raise ValueError("L_prime must be positive")
    count = (2 * K - 1) ** d - 1
    if count > cap:
        raise LatticeSizeError(f"lattice would hold {count} frequencies (cap {cap})")
    axis = np.arange(-K + 1, K)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    k = np.stack([g.reshape(-1) for g in grids], axis=1)
    origin = count // 2
    k = np.delete(k, origin, axis=0)
    return FrequencyLattice(d=d, L_prime=float(L_prime), K=int(K), k=k)


# ---------------------------------------------------------------------------
# LFP coefficient c(xi) = A/|xi|^(d+3) + B/|xi|^(d+1)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LfpCoefficients:
    A: float
    B: float
    d: int

    def __post_init__(self):
        if self.A < 0 or self.B < 0 or not self.A + self.B > 0:
            raise ValueError(f"need A, B >= 0 and A + B > 0, got A={self.A}, B={self.B}")

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        """Vectorised coefficient over rows of ``xi`` (shape ``(n, d)``)."""
        r = np.linalg.norm(np.atleast_2d(xi), axis=1)
        if np.any(r == 0):
            raise ZeroDivisionError("LFP coefficient is singular at xi = 0")
        return self.A / r ** (self.d + 3) + self.B / r ** (self.d + 1)

    def as_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "d": self.d}


def lfp_coefficient(xi, c: LfpCoefficients) -> float:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape[-1] != c.d:
        raise ValueError(f"frequency has dimension {xi.shape[-1]}, coefficients are for d={c.d}")
    return float(c(xi.reshape(1, -1))[0])


def coefficients_from_init(net) -> LfpCoefficients:
    """Empirical means over the hidden neurons of an initial network."""
    r2 = np.sum(net.R ** 2, axis=1)
    w2 = net.w ** 2
    A = float(np.mean(r2 + w2))
    B = float(4.0 * np.pi ** 2 * np.mean(r2 * w2))
    return LfpCoefficients(A=A, B=B, d=net.d)


# ---------------------------------------------------------------------------
# Spectral functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralSolution:
    """Real function ``b + sum_xi h(xi) exp(2 pi i xi.x)`` on a lattice.

    Only the coefficients of the positive half of the lattice are stored;
    ``h(-xi) = conj(h(xi))`` is implied.
    """

    lattice: FrequencyLattice
    coeffs: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if coeffs.shape[0] != self.lattice.half:
            raise ValueError(f"expected {self.lattice.half} coefficients, got {coeffs.shape[0]}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "intercept", float(self.intercept))

    @classmethod
    def zeros(cls, lattice: FrequencyLattice, intercept: float = 0.0) -> "SpectralSolution":
        return cls(lattice, np.zeros(lattice.half, dtype=complex), intercept)

    @classmethod
    def from_full(cls, lattice, full, intercept=0.0, rtol=1e-12) -> "SpectralSolution":
        full = np.asarray(full, dtype=complex).reshape(-1)
        if full.shape[0] != lattice.size:
            raise ValueError(f"expected {lattice.size} coefficients, got {full.shape[0]}")
        mirrored = np.conj(full[::-1])
        scale = max(np.max(np.abs(full), initial=0.0), np.finfo(float).tiny)
        err = np.max(np.abs(full - mirrored), initial=0.0)
        if err > rtol * scale:
            raise HermitianSymmetryError(f"h(-xi) != conj(h(xi)): deviation {err:.3e}")
        return cls(lattice, full[lattice.half:], intercept)

    def full(self) -> np.ndarray:
        return np.concatenate([np.conj(self.coeffs[::-1]), self.coeffs])

    def __add__(self, other: "SpectralSolution") -> "SpectralSolution":
        return SpectralSolution(self.lattice, self.coeffs + other.coeffs, self.intercept + other.intercept)

    def __sub__(self, other: "SpectralSolution") -> "SpectralSolution":
        return SpectralSolution(self.lattice, self.coeffs - other.coeffs, self.intercept - other.intercept)

    def scaled(self, a: float) -> "SpectralSolution":
        return SpectralSolution(self.lattice, a * self.coeffs, a * self.intercept)

    def __call__(self, x) -> np.ndarray:
        return evaluate_spectrum(self, x)


def _points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if d == 1 else x.reshape(1, -1)
    if x.shape[1] != d:
        raise ValueError(f"points have dimension {x.shape[1]}, expected {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite evaluation point")
    return x


def fourier_features(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``exp(2 pi i xi.x)`` as an ``(m, n)`` matrix."""
    return np.exp(1j * TWO_PI * (x @ xi.T))


def evaluate_spectrum(s: SpectralSolution, x) -> np.ndarray:
    """Evaluate ``s`` at the rows of ``x``; returns a real array.

    Each +/- xi pair contributes ``2 Re(h(xi) e^{2 pi i xi.x})``, so the
    result is real by construction.
    """
    x = _points(x, s.lattice.d)
    xi = s.lattice.xi_pos
    out = np.empty(x.shape[0])
    step = max(1, _CHUNK_ENTRIES // max(1, xi.shape[0]))
    for start in range(0, x.shape[0], step):
        E = fourier_features(x[start:start + step], xi)
        out[start:start + step] = 2.0 * np.real(E @ s.coeffs)
    return s.intercept + out


def fp_norm(spectrum: SpectralSolution, c: LfpCoefficients) -> float:
    """FP-norm ``(sum_xi c(xi)^-1 |f(xi)|^2)^(1/2)``; the intercept is unpenalised."""
    weights = 1.0 / c(spectrum.lattice.xi_pos)
    return float(np.sqrt(2.0 * np.sum(weights * np.abs(spectrum.coeffs) ** 2)))


def gamma_l2_norm(lattice: FrequencyLattice, c: LfpCoefficients) -> float:
    if lattice.size == 0:
        raise ValueError("empty lattice")
    return float(np.sqrt(2.0 * np.sum(c(lattice.xi_pos))))
