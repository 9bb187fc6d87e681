"""Ridge / min-FP-norm solve of the LFP model through its dual Gram system."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    TWO_PI,
    Dataset,
    FrequencyLattice,
    LfpCoefficients,
    SpectralSolution,
    _CHUNK_ENTRIES,
    _points,
    evaluate_spectrum,
)


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class RidgeConfig:
    epsilon: float = 1e-6
    intercept_mode: str = "unpenalized"
    solver_tolerance: float = 1e-12

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.intercept_mode not in ("unpenalized", "none"):
            raise ValueError(f"unknown intercept_mode {self.intercept_mode!r}")
        if not self.solver_tolerance > 0:
            raise ValueError("solver_tolerance must be positive")


@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    intercept: float
    gram: np.ndarray
    data: Dataset
    lattice: FrequencyLattice
    coefficients: LfpCoefficients
    epsilon: float
    condition: float
    h_ini: SpectralSolution | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "lattice": self.lattice.params(),
                "A": self.coefficients.A,
                "B": self.coefficients.B,
                "epsilon": self.epsilon,
                "alpha": [float(a) for a in self.alpha],
                "intercept": self.intercept,
                "dataset_sha256": self.data.sha256(),
            },
            indent=2,
        )


def _cos_sin_features(x: np.ndarray, xi: np.ndarray, cvals: np.ndarray):
    phase = TWO_PI * (x @ xi.T)
    scale = np.sqrt(2.0 * cvals)
    return np.cos(phase) * scale, np.sin(phase) * scale


def gram_matrix(X, lattice: FrequencyLattice, c: LfpCoefficients) -> np.ndarray:
    """``G_ij = sum_xi c(xi) cos(2 pi xi.(x_i - x_j))``, grouped in +/- xi pairs."""
    X = _points(X, lattice.d)
    C, S = _cos_sin_features(X, lattice.xi_pos, c(lattice.xi_pos))
    G = C @ C.T + S @ S.T
    return 0.5 * (G + G.T)


def kernel_matrix(Xa, Xb, lattice: FrequencyLattice, c: LfpCoefficients) -> np.ndarray:
    """Cross kernel ``k(a, b) = sum_xi c(xi) cos(2 pi xi.(a - b))``."""
    Xa = _points(Xa, lattice.d)
    Xb = _points(Xb, lattice.d)
    xi = lattice.xi_pos
    cvals = c(xi)
    Cb, Sb = _cos_sin_features(Xb, xi, cvals)
    out = np.empty((Xa.shape[0], Xb.shape[0]))
    step = max(1, _CHUNK_ENTRIES // max(1, xi.shape[0]))
    for start in range(0, Xa.shape[0], step):
        Ca, Sa = _cos_sin_features(Xa[start:start + step], xi, cvals)
        out[start:start + step] = Ca @ Cb.T + Sa @ Sb.T
    return out


def _solve_refined(K: np.ndarray, rhs: np.ndarray, tol: float, n_data: int, max_refine: int = 5):
    """Dense solve with Jacobi equilibration and iterative refinement.

    Returns ``(solution, condition)`` where the condition number is that of
    the equilibrated matrix.
    """
    diag = np.diag(K)[:n_data]
    scale = np.ones(K.shape[0])
    scale[:n_data] = 1.0 / np.sqrt(diag)
    if K.shape[0] > n_data:
        scale[n_data:] = np.sqrt(np.mean(diag))
    Ks = K * scale[:, None] * scale[None, :]
    cond = float(np.linalg.cond(Ks))
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SingularSystemError(f"linear system is numerically singular (cond ~ {cond:.3e})", cond)
    lu = scipy.linalg.lu_factor(Ks)
    sol = scale * scipy.linalg.lu_solve(lu, scale * rhs)
    size = max(np.max(np.abs(rhs)), np.finfo(float).tiny)
    for _ in range(max_refine):
        res = rhs - K @ sol
        if np.max(np.abs(res)) <= tol * size:
            break
        sol = sol + scale * scipy.linalg.lu_solve(lu, scale * res)
    return sol, cond


def recover_spectrum(alpha, X, lattice: FrequencyLattice, c: LfpCoefficients) -> np.ndarray:
    """Stationarity identity ``h(xi) = c(xi) sum_i alpha_i exp(-2 pi i xi.x_i)``, positive half."""
    xi = lattice.xi_pos
    E = np.exp(-1j * TWO_PI * (X @ xi.T))
    return c(xi) * (alpha @ E)


def _dual_solve(data, lattice, c, epsilon, intercept_mode, tol, h_ini):
    if data.d != lattice.d or c.d != lattice.d:
        raise ValueError(f"dimension mismatch: data d={data.d}, lattice d={lattice.d}, coefficients d={c.d}")
    y = data.y.copy()
    if h_ini is not None:
        y = y - evaluate_spectrum(h_ini, data.X)
    G = gram_matrix(data.X, lattice, c)
    M = data.M
    if intercept_mode == "unpenalized":
        K = np.zeros((M + 1, M + 1))
        K[:M, :M] = G + epsilon * np.eye(M)
        K[:M, M] = 1.0
        K[M, :M] = 1.0
        rhs = np.concatenate([y, [0.0]])
        sol, cond = _solve_refined(K, rhs, tol, M)
        alpha, b = sol[:M], float(sol[M])
    else:
        sol, cond = _solve_refined(G + epsilon * np.eye(M), y, tol, M)
        alpha, b = sol, 0.0
    coeffs = recover_spectrum(alpha, data.X, lattice, c)
    spec = SpectralSolution(lattice, coeffs, b)
    if h_ini is not None:
        spec = spec + h_ini
    dual = DualSolution(alpha, b, G, data, lattice, c, epsilon, cond, h_ini)
    return dual, spec


def solve_lfp(data: Dataset, lattice: FrequencyLattice, c: LfpCoefficients,
              cfg: RidgeConfig = RidgeConfig(), h_ini: SpectralSolution | None = None):
    """Minimise ``sum_i (h(x_i)-y_i)^2 + eps * sum_xi c(xi)^-1 |h(xi)-h_ini(xi)|^2``.

    With ``intercept_mode="unpenalized"`` the zero frequency is a free
    intercept, solved exactly through the bordered system
    ``[[G + eps I, 1], [1^T, 0]] [alpha; b] = [Y; 0]``.
    Returns ``(DualSolution, SpectralSolution)``.
    """
    return _dual_solve(data, lattice, c, cfg.epsilon, cfg.intercept_mode, cfg.solver_tolerance, h_ini)


def solve_interpolant(data: Dataset, lattice: FrequencyLattice, c: LfpCoefficients,
                      intercept_mode: str = "unpenalized", h_ini: SpectralSolution | None = None,
                      tol: float = 1e-12):
    """The eps -> 0 limit: exact min-FP-norm interpolation."""
    return _dual_solve(data, lattice, c, 0.0, intercept_mode, tol, h_ini)


def predict(sol, X_test) -> np.ndarray:
    if isinstance(sol, SpectralSolution):
        return evaluate_spectrum(sol, X_test)
    k = kernel_matrix(X_test, sol.data.X, sol.lattice, sol.coefficients)
    out = sol.intercept + k @ sol.alpha
    if sol.h_ini is not None:
        out = out + evaluate_spectrum(sol.h_ini, X_test)
    return out


def interpolation_residual(sol, data: Dataset) -> float:
    """``max_i |h(x_i) - y_i|``.

    For a ridge solution this equals ``eps * max_i |alpha_i|`` up to solver
    tolerance, since ``Y - h(X) = eps * alpha`` at the optimum.
    """
    return float(np.max(np.abs(predict(sol, data.X) - data.y)))


def spectrum_csv(s: SpectralSolution) -> str:
    d = s.lattice.d
    lines = [",".join([f"k{j + 1}" for j in range(d)] + ["re", "im"])]
    lines.append(",".join(["0"] * d + [repr(s.intercept), "0.0"]))
    for k, h in zip(s.lattice.k_pos, s.coeffs):
        lines.append(",".join([str(int(v)) for v in k] + [repr(float(h.real)), repr(float(h.imag))]))
    return "\n".join(lines) + "\n"
