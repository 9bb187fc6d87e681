"""Rademacher and a priori generalization bounds in terms of the FP-norm."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from .core import (
    Dataset,
    FrequencyLattice,
    LfpCoefficients,
    SpectralSolution,
    build_lattice,
    coefficients_from_init,
    fp_norm,
    gamma_l2_norm,
)
from .data import sine
from .solver import gram_matrix, solve_interpolant

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundInputs:
    fp_norm_f: float
    gamma_l2: float
    M: int
    delta: float
    sup_norm_f: float | None = None
    c0: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.fp_norm_f < 0 or self.gamma_l2 < 0:
            raise ValueError("norms must be non-negative")


def rademacher_bound(Q: float, gamma_l2: float, M: int, c0: float | None = None) -> float:
    """``Q |gamma| / sqrt(M)``, plus ``c0 / sqrt(M)`` when the zero frequency is capped by ``c0``."""
    if Q < 0 or gamma_l2 < 0:
        raise ValueError("Q and gamma_l2 must be non-negative")
    value = Q * gamma_l2 / math.sqrt(M)
    if c0 is not None:
        value += c0 / math.sqrt(M)
    return value


def empirical_rademacher_mc(X, lattice: FrequencyLattice, c: LfpCoefficients, Q: float,
                            trials: int = 500, seed: int = 0):
    """Monte-Carlo estimate of the empirical Rademacher complexity of ``{|h|_gamma <= Q}``.

    The supremum over the ball is attained by Cauchy-Schwarz, giving
    ``(Q/M) E_eps (sum_xi c(xi) |eps_hat(xi)|^2)^(1/2)``; the inner sum is
    the quadratic form ``eps^T G eps`` of the lattice Gram matrix.
    Returns ``(mean, standard error)``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    X = np.asarray(X, dtype=float)
    X = X.reshape(-1, lattice.d) if X.ndim < 2 else X
    M = X.shape[0]
    if Q == 0:
        return 0.0, 0.0
    G = gram_matrix(X, lattice, c)
    rng = np.random.default_rng(seed)
    eps = rng.choice([-1.0, 1.0], size=(trials, M))
    quad = np.einsum("ti,ij,tj->t", eps, G, eps)
    samples = Q / M * np.sqrt(np.maximum(quad, 0.0))
    stderr = float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(samples.mean()), stderr


def _confidence_factor(M: int, delta: float) -> float:
    return 2.0 / math.sqrt(M) + 4.0 * math.sqrt(2.0 * math.log(4.0 / delta) / M)


def generalization_bound(inputs: BoundInputs, variant: str = "ii") -> float:
    """A priori population-risk bound.

    variant ``"i"``:  ``|f-h_ini|_g |g| (2/sqrt(M) + 4 sqrt(2 log(4/delta)/M))``
    variant ``"ii"``: ``(|f-h_ini|_inf + 2 |f-h_ini|_g |g|)`` times the same factor.
    """
    factor = _confidence_factor(inputs.M, inputs.delta)
    prod = inputs.fp_norm_f * inputs.gamma_l2
    if variant == "i":
        return prod * factor
    if variant == "ii":
        if inputs.sup_norm_f is None:
            raise ValueError("variant ii needs sup_norm_f")
        return (inputs.sup_norm_f + 2.0 * prod) * factor
    raise ValueError(f"unknown bound variant {variant!r}")


def zero_freq_cap(sup_norm_f: float, fp_norm_f: float, gamma_l2: float) -> float:
    """Cap ``|f - h_ini|_inf + |f - h_ini|_gamma |gamma|`` on the zero-frequency coefficient of the solution."""
    return sup_norm_f + fp_norm_f * gamma_l2


def sup_norm_estimate(f, h_ini=None, resolution: int = 10_000, domain=(0.0, 1.0), d: int = 1) -> float:
    """Max of ``|f - h_ini|`` on a uniform grid; a lower estimate of the true sup."""
    lo, hi = domain
    axis = np.linspace(lo, hi, resolution)
    if d == 1:
        grid = axis.reshape(-1, 1)
    else:
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        grid = np.stack([m.reshape(-1) for m in mesh], axis=1)
    vals = np.asarray(f(grid), dtype=float).reshape(-1)
    if h_ini is not None:
        vals = vals - np.asarray(h_ini(grid), dtype=float).reshape(-1)
    return float(np.max(np.abs(vals)))


def spectrum_from_samples(values: np.ndarray, lattice: FrequencyLattice) -> SpectralSolution:
    """Torus Fourier coefficients of a 1-periodic function from uniform samples on ``[0, 1)^d`` via the DFT.

    Requires ``L' = 1`` and enough samples per axis to resolve ``K - 1``.
    """
    if lattice.L_prime != 1.0:
        raise ValueError("DFT spectra are defined on the unit torus (L' = 1)")
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2 * lattice.K - 1:
        raise ValueError(f"{n} samples per axis cannot resolve frequencies up to {lattice.K - 1}")
    F = np.fft.fftn(values) / values.size
    idx = tuple(np.mod(lattice.k_pos, n).T)
    mean = float(np.real(F[(0,) * lattice.d]))
    return SpectralSolution(lattice, F[idx], mean)


def truncation_report(c: LfpCoefficients, L_prime: float, K: int, v: int | None = None) -> dict:
    """Lattice sums at ``K`` and ``2K`` and their relative difference.

    Covers ``|gamma|`` always and the FP-norm of ``sin(2 pi v x)`` when ``v`` is given (needs ``L' = 1``).
    """
    small, large = build_lattice(c.d, L_prime, K), build_lattice(c.d, L_prime, 2 * K)
    g1, g2 = gamma_l2_norm(small, c), gamma_l2_norm(large, c)
    out = {"K": K, "gamma_l2_K": g1, "gamma_l2_2K": g2, "gamma_l2_rel_diff": abs(g2 - g1) / g2}
    if v is not None:
        q1, q2 = fp_norm(sine_spectrum(v, small), c), fp_norm(sine_spectrum(v, large), c)
        out.update(fp_norm_K=q1, fp_norm_2K=q2, fp_norm_rel_diff=abs(q2 - q1) / q2)
    return out


def sine_spectrum(v: int, lattice: FrequencyLattice) -> SpectralSolution:
    """``sin(2 pi v x)`` on the unit torus, sampled and transformed by the DFT."""
    n = max(2 * lattice.K, 4 * v + 2)
    x = np.arange(n) / n
    return spectrum_from_samples(np.sin(2 * np.pi * v * x), lattice)


# ---------------------------------------------------------------------------
# FP-norm sweep over sine targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    v_list: tuple = tuple(range(1, 11))
    n_train: int = 20
    n_test: int = 500
    width: int = 5000
    seed: int = 0
    delta: float = 0.1
    lattice_K: int = 2000
    learning_rate: float = 1e-4
    max_steps: int = 200_000
    stop_loss: float = 1e-6
    workers: int = 1
    init: dict = field(default_factory=lambda: {
        "w": {"kind": "xavier_normal"},
        "r": {"kind": "xavier_normal"},
        "l": {"kind": "uniform", "a": -1.0, "b": 1.0},
    })


SWEEP_COLUMNS = ("v", "fp_norm", "fp_norm_normalized", "train_loss", "test_loss",
                 "bound_i", "bound_ii", "steps", "stopped_by", "status")


def _sweep_net(cfg: SweepConfig):
    from .nn import InitSpec, apply_asi, init_net

    spec = InitSpec.parse({**cfg.init, "seed": cfg.seed})
    return apply_asi(init_net(1, cfg.width // 2, spec, "general_d"))


def _sweep_row(v: int, cfg: SweepConfig) -> dict:
    from .nn import TrainConfig, train

    row = {"v": v}
    net = _sweep_net(cfg)
    c = coefficients_from_init(net)
    lattice = build_lattice(1, 1.0, cfg.lattice_K)
    g = gamma_l2_norm(lattice, c)
    f_spec = sine_spectrum(v, lattice)
    q = fp_norm(f_spec, c)
    sup = sup_norm_estimate(lambda x: np.sin(2 * np.pi * v * x[:, 0]))
    row.update(fp_norm=q, gamma_l2=g)
    inputs = BoundInputs(q, g, cfg.n_train, cfg.delta, sup_norm_f=sup)
    row["bound_i"] = generalization_bound(inputs, "i")
    row["bound_ii"] = generalization_bound(inputs, "ii")
    try:
        data = sine(v, cfg.n_train)
        tcfg = TrainConfig("adam", cfg.learning_rate, cfg.max_steps, cfg.stop_loss, record_every=1000)
        res = train(net, data, tcfg)
        x_test = np.arange(cfg.n_test) / cfg.n_test
        err = res.net(x_test) - np.sin(2 * np.pi * v * x_test)
        row.update(train_loss=res.final_loss, test_loss=0.5 * float(np.mean(err ** 2)),
                   steps=res.steps, stopped_by=res.stopped_by, status="ok")
    except Exception as exc:  # one failed row must not abort the sweep
        log.error("sweep row v=%s failed: %s", v, exc)
        row.update(train_loss=np.nan, test_loss=np.nan, steps=0, stopped_by="", status=f"error: {exc}")
    return row


@dataclass
class SweepResult:
    rows: list
    spearman: float
    truncation: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(
                repr(float(row[k])) if isinstance(row[k], (float, np.floating)) else str(row[k])
                for k in SWEEP_COLUMNS))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        fp = [r["fp_norm"] for r in self.rows]
        return {
            "spearman_fp_norm_vs_test_loss": self.spearman,
            "fp_norm_strictly_increasing": bool(all(b > a for a, b in zip(fp, fp[1:]))),
            "rows": len(self.rows),
            "failed_rows": sum(1 for r in self.rows if r["status"] != "ok"),
            "truncation": self.truncation,
        }


def fpnorm_sweep(v_list=None, cfg: SweepConfig = SweepConfig()) -> SweepResult:
    if v_list is not None:
        cfg = replace(cfg, v_list=tuple(v_list))
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(_sweep_row, cfg.v_list, [cfg] * len(cfg.v_list)))
    else:
        rows = [_sweep_row(v, cfg) for v in cfg.v_list]
    top = max(r["fp_norm"] for r in rows)
    for r in rows:
        r["fp_norm_normalized"] = r["fp_norm"] / top if top > 0 else 0.0
    ok = [r for r in rows if r["status"] == "ok"]
    if len(ok) >= 2:
        rho = float(spearmanr([r["fp_norm"] for r in ok], [r["test_loss"] for r in ok]).statistic)
    else:
        rho = float("nan")
    c = coefficients_from_init(_sweep_net(cfg))
    return SweepResult(rows, rho, truncation_report(c, 1.0, cfg.lattice_K, max(cfg.v_list)))


# ---------------------------------------------------------------------------
# Bound validity on random-sample sine tasks
# ---------------------------------------------------------------------------


def bound_validity_trial(v: int, seed: int, c: LfpCoefficients, M: int = 20, delta: float = 0.1,
                         K: int = 2000, grid: int = 10_000) -> dict:
    """One draw of ``M`` uniform samples of ``sin(2 pi v x)``, fitted by the min-FP-norm interpolant.

    Population risk is ``mean |h_M - f|^2`` over a uniform grid of ``[0, 1)``;
    the bound is the variant-ii a priori bound with ``h_ini = 0``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=M)
    f = lambda t: np.sin(2 * np.pi * v * np.asarray(t).reshape(-1))
    data = Dataset(x, f(x), domain=([0.0], [1.0]))
    lattice = build_lattice(1, 1.0, K)
    _, h = solve_interpolant(data, lattice, c)
    t = np.arange(grid) / grid
    risk = float(np.mean((h(t) - f(t)) ** 2))
    inputs = BoundInputs(fp_norm(sine_spectrum(v, lattice), c), gamma_l2_norm(lattice, c), M, delta,
                         sup_norm_f=sup_norm_estimate(lambda g: f(g[:, 0]), resolution=grid))
    bound = generalization_bound(inputs, "ii")
    return {"v": v, "seed": seed, "risk": risk, "bound": bound, "holds": risk <= bound}


def bound_validity_suite(c: LfpCoefficients, n_tasks: int = 20, v_max: int = 5, **kwargs) -> list:
    return [bound_validity_trial(1 + i % v_max, i, c, **kwargs) for i in range(n_tasks)]
