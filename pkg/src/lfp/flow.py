"""Gradient flow vs. minimum-norm solution: closed forms, integrators, equivalence checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    TWO_PI,
    Dataset,
    FrequencyLattice,
    LfpCoefficients,
    SpectralSolution,
    evaluate_spectrum,
)
from .solver import RidgeConfig, gram_matrix, solve_lfp

log = logging.getLogger(__name__)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, message, singular_value):
        super().__init__(message)
        self.singular_value = singular_value


class StepSizeError(ValueError):
    pass


class FlowDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearFlowProblem:
    """``du/dt = P*(g - P u)``, ``u(0) = u_ini`` with ``P`` of full row rank."""

    P: np.ndarray
    g: np.ndarray
    u_ini: np.ndarray
    rank_tol: float = 1e-10

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P))
        g = np.asarray(self.g).reshape(-1)
        u = np.asarray(self.u_ini).reshape(-1)
        if P.shape != (g.shape[0], u.shape[0]):
            raise ValueError(f"P has shape {P.shape}, g has {g.shape[0]} rows, u_ini has {u.shape[0]}")
        s = np.linalg.svd(P, compute_uv=False)
        if P.shape[0] > P.shape[1] or s[-1] <= self.rank_tol * max(s[0], 1.0):
            smallest = s[-1] if P.shape[0] <= P.shape[1] else 0.0
            raise RankDeficientError(f"P is not of full row rank (smallest singular value {smallest:.3e})", smallest)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "u_ini", u)

    def residual(self, u) -> np.ndarray:
        return self.g - self.P @ u

    def rhs(self, u) -> np.ndarray:
        return self.P.conj().T @ (self.g - self.P @ u)


def min_norm_closed_form(p: LinearFlowProblem) -> np.ndarray:
    """``P*(PP*)^-1 (g - P u_ini) + u_ini``."""
    Ph = p.P.conj().T
    return Ph @ np.linalg.solve(p.P @ Ph, p.residual(p.u_ini)) + p.u_ini


def power_iteration(apply, n: int, iters: int = 200, seed: int = 0, dtype=float) -> float:
    """Largest eigenvalue of a symmetric PSD operator given as a matvec."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n).astype(dtype)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply(v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        lam_new = float(np.real(np.vdot(v, w)))
        v = w / nrm
        if abs(lam_new - lam) <= 1e-12 * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return lam


def _rk4(f, u, dt):
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step(f, u, dt, method):
    if method == "rk4":
        return _rk4(f, u, dt)
    if method == "euler":
        return u + dt * f(u)
    raise ValueError(f"unknown integrator {method!r}")


@dataclass
class LinearFlowTrajectory:
    times: np.ndarray
    states: np.ndarray
    residuals: np.ndarray
    u_final: np.ndarray
    converged: bool
    lambda_max: float


def integrate_linear_flow(p: LinearFlowProblem, dt: float, T: float, method: str = "rk4",
                          record_every: int = 1, tol: float = 0.0) -> LinearFlowTrajectory:
    lam = power_iteration(lambda v: p.P @ (p.P.conj().T @ v), p.P.shape[0], dtype=p.P.dtype)
    if not 0 < dt < 2.0 / lam:
        raise StepSizeError(f"dt={dt} violates the stability bound 2/lambda_max = {2.0 / lam:.4g}")
    n_steps = int(np.ceil(T / dt))
    u = p.u_ini.astype(np.result_type(p.P, p.u_ini, p.g, float)).copy()
    times, states, residuals = [0.0], [u.copy()], [float(np.linalg.norm(p.residual(u)))]
    g_norm = max(np.linalg.norm(p.g), np.finfo(float).tiny)
    converged = residuals[0] <= tol * g_norm
    for step in range(1, n_steps + 1):
        if converged:
            break
        u = _step(p.rhs, u, dt, method)
        res = float(np.linalg.norm(p.residual(u)))
        converged = res <= tol * g_norm
        if step % record_every == 0 or step == n_steps or converged:
            times.append(step * dt)
            states.append(u.copy())
            residuals.append(res)
    return LinearFlowTrajectory(np.array(times), np.array(states), np.array(residuals), u, converged, lam)


# ---------------------------------------------------------------------------
# Spectral gradient flow on a lattice
# ---------------------------------------------------------------------------


@dataclass
class SpectralFlowState:
    lattice: FrequencyLattice
    coefficients: LfpCoefficients
    spectrum: SpectralSolution
    t: float
    dt: float


@dataclass
class SpectralFlowResult:
    state: SpectralFlowState
    times: np.ndarray
    residuals: np.ndarray
    tracked_index: np.ndarray
    tracked: np.ndarray            # (n_records, n_tracked) complex coefficients
    tracked_residual: np.ndarray   # per-frequency |h(xi, t) - h_limit(xi)| at the end, if known
    converged: bool
    steps: int
    lambda_max: float

    def trajectory_csv(self) -> str:
        xi = self.state.lattice.xi_pos[self.tracked_index]
        names = ["|h(" + ";".join(f"{v:g}" for v in row) + ")|" for row in xi]
        lines = [",".join(["t", "residual"] + names)]
        for t, r, row in zip(self.times, self.residuals, self.tracked):
            lines.append(",".join([repr(float(t)), repr(float(r))] + [repr(float(abs(v))) for v in row]))
        return "\n".join(lines) + "\n"


def integrate_spectral_flow(data: Dataset, lattice: FrequencyLattice, c: LfpCoefficients,
                            h_ini: SpectralSolution | None = None, dt: float | None = None,
                            t_max: float = 1e7, method: str = "rk4", tol: float = 1e-8,
                            max_steps: int = 10_000_000, record_every: int = 1,
                            track: np.ndarray | None = None) -> SpectralFlowResult:
    """Integrate ``dh(xi)/dt = c(xi) sum_i (y_i - h(x_i, t)) exp(-2 pi i xi.x_i)``.

    Stops once ``|Y - h(X, t)| <= tol * |Y - h_ini(X)|`` or at ``t_max``.
    The zero frequency (intercept of ``h_ini``) is left untouched.
    """
    if h_ini is None:
        h_ini = SpectralSolution.zeros(lattice)
    xi = lattice.xi_pos
    cvals = c(xi)
    E = np.exp(1j * TWO_PI * (data.X @ xi.T))       # (M, n_half)
    Ec = E.conj()
    G = gram_matrix(data.X, lattice, c)
    lam = power_iteration(lambda v: G @ v, data.M)
    if dt is None:
        dt = 1.0 / lam
    if not 0 < dt < 2.0 / lam:
        raise StepSizeError(f"dt={dt} violates the stability bound 2/lambda_max(G) = {2.0 / lam:.4g}")
    b = h_ini.intercept
    y = data.y

    def values(h):
        return b + 2.0 * np.real(E @ h)

    def rhs(h):
        return cvals * ((y - values(h)) @ Ec)

    if track is None:
        track = np.arange(min(lattice.half, 16))
    track = np.asarray(track, dtype=int)

    h = h_ini.coeffs.copy()
    res0 = float(np.linalg.norm(y - values(h)))
    target = tol * max(res0, np.finfo(float).tiny)
    times, residuals, tracked = [0.0], [res0], [h[track].copy()]
    res = res0
    prev = res0
    growth = 0
    converged = res0 <= target or res0 == 0.0
    step = 0
    while not converged and step < max_steps and step * dt < t_max:
        h = _step(rhs, h, dt, method)
        step += 1
        res = float(np.linalg.norm(y - values(h)))
        growth = growth + 1 if res > prev else 0
        if growth >= 10:
            raise FlowDivergedError(f"residual grew for 10 consecutive steps (now {res:.3e} at t={step * dt:.4g})")
        prev = res
        converged = res <= target
        if step % record_every == 0 or converged:
            times.append(step * dt)
            residuals.append(res)
            tracked.append(h[track].copy())
    if not converged:
        log.warning("spectral flow stopped at t=%.4g with residual %.3e (target %.3e)", step * dt, res, target)
    if times[-1] != step * dt:
        times.append(step * dt)
        residuals.append(res)
        tracked.append(h[track].copy())
    spec = SpectralSolution(lattice, h, b)
    state = SpectralFlowState(lattice, c, spec, step * dt, dt)
    return SpectralFlowResult(state, np.array(times), np.array(residuals), track, np.array(tracked),
                              np.array([]), converged, step, lam)


def per_frequency_convergence(result: SpectralFlowResult, limit: SpectralSolution | None = None):
    """Time at which ``|h(xi,t) - h(xi,inf)|`` first drops to half its initial value.

    Returns a list of ``(xi, time)`` sorted by ``|xi|``; ``time`` is ``inf``
    if the tracked coefficient never got there, ``0`` if it starts converged.
    """
    lattice = result.state.lattice
    final = (limit if limit is not None else result.state.spectrum).coeffs[result.tracked_index]
    gaps = np.abs(result.tracked - final)
    rows = []
    for j, idx in enumerate(result.tracked_index):
        g0 = gaps[0, j]
        if g0 == 0.0:
            t_half = 0.0
        else:
            hit = np.nonzero(gaps[:, j] <= 0.5 * g0)[0]
            t_half = float(result.times[hit[0]]) if hit.size else np.inf
        rows.append((lattice.xi_pos[idx].copy(), t_half))
    rows.sort(key=lambda row: (float(np.linalg.norm(row[0])), tuple(row[0])))
    return rows


# ---------------------------------------------------------------------------
# Three-way equivalence
# ---------------------------------------------------------------------------


def weighted_closed_form(data: Dataset, lattice: FrequencyLattice, c: LfpCoefficients,
                         h_ini: SpectralSolution | None = None) -> SpectralSolution:
    """Min-norm solution over the full complex lattice after the change of variables ``v = h / gamma``."""
    if h_ini is None:
        h_ini = SpectralSolution.zeros(lattice)
    gamma = np.sqrt(c(lattice.xi))
    PG = np.exp(1j * TWO_PI * (data.X @ lattice.xi.T)) * gamma
    v_ini = h_ini.full() / gamma
    problem = LinearFlowProblem(PG, data.y - h_ini.intercept, v_ini)
    v = min_norm_closed_form(problem)
    return SpectralSolution.from_full(lattice, gamma * v, h_ini.intercept, rtol=1e-9)


def relative_l2(a: SpectralSolution, b: SpectralSolution) -> float:
    diff = np.linalg.norm(a.coeffs - b.coeffs)
    scale = np.linalg.norm(b.coeffs)
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def weighted_norm(s: SpectralSolution, c: LfpCoefficients) -> float:
    """``(sum_xi c(xi)^-1 |h(xi)|^2)^(1/2)`` over the full lattice."""
    return float(np.sqrt(2.0 * np.sum(np.abs(s.coeffs) ** 2 / c(s.lattice.xi_pos))))


def null_space_perturbation(data: Dataset, lattice: FrequencyLattice, c: LfpCoefficients,
                            rng: np.random.Generator, scale: float = 1.0) -> SpectralSolution:
    """Random Hermitian spectrum that leaves ``h(x_i)`` unchanged (projected in ``c^-1``-weighted space)."""
    gamma = np.sqrt(c(lattice.xi_pos))
    E = np.exp(1j * TWO_PI * (data.X @ lattice.xi_pos.T))
    z = (rng.standard_normal(lattice.half) + 1j * rng.standard_normal(lattice.half)) * scale
    # in v = h/gamma coordinates the constraint map is v -> 2 Re(E diag(gamma) v)
    A = E * gamma
    G = 2.0 * np.real(A @ A.conj().T)
    lam = np.linalg.solve(G, 2.0 * np.real(A @ z))
    z = z - A.conj().T @ lam
    return SpectralSolution(lattice, gamma * z, 0.0)


@dataclass
class EquivalenceReport:
    flow: SpectralSolution
    ridge: dict                    # epsilon -> SpectralSolution
    closed: SpectralSolution
    distances: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    flow_converged: bool = True
    flow_time: float = 0.0

    def max_distance(self) -> float:
        return max(self.distances.values()) if self.distances else 0.0


def equivalence_report(data: Dataset, lattice: FrequencyLattice, c: LfpCoefficients,
                       h_ini: SpectralSolution | None = None,
                       epsilons=(1e-6, 1e-7, 1e-8), **flow_kwargs) -> EquivalenceReport:
    if h_ini is None:
        h_ini = SpectralSolution.zeros(lattice)
    flow = integrate_spectral_flow(data, lattice, c, h_ini, **flow_kwargs)
    ridge = {}
    for eps in epsilons:
        _, spec = solve_lfp(data, lattice, c, RidgeConfig(eps, "none"), h_ini=h_ini)
        ridge[eps] = spec
    closed = weighted_closed_form(data, lattice, c, h_ini)
    best = ridge[min(epsilons)]
    flow_spec = flow.state.spectrum
    distances = {
        "flow_vs_ridge": relative_l2(flow_spec, best),
        "flow_vs_closed": relative_l2(flow_spec, closed),
        "ridge_vs_closed": relative_l2(best, closed),
    }
    residuals = {"flow": float(np.max(np.abs(evaluate_spectrum(flow_spec, data.X) - data.y))),
                 "closed": float(np.max(np.abs(evaluate_spectrum(closed, data.X) - data.y)))}
    for eps, spec in ridge.items():
        residuals[f"ridge_{eps:g}"] = float(np.max(np.abs(evaluate_spectrum(spec, data.X) - data.y)))
    return EquivalenceReport(flow_spec, ridge, closed, distances, residuals, flow.converged, flow.state.t)
