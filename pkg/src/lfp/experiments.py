"""Experiment pipelines behind the command line: presets, configs, reports and manifests."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import SweepConfig, SweepResult, fpnorm_sweep
from .core import (
    Dataset,
    LfpCoefficients,
    SpectralSolution,
    build_lattice,
    coefficients_from_init,
)
from .data import gen_data
from .flow import (
    LinearFlowProblem,
    RankDeficientError,
    equivalence_report,
    integrate_linear_flow,
    min_norm_closed_form,
    null_space_perturbation,
    weighted_norm,
)
from .nn import InitSpec, TrainConfig, apply_asi, init_net, stable_learning_rate, train_with_backoff
from .plot import Series, dual_axis, heatmap, identity_scatter, line_plot
from .solver import RidgeConfig, predict, solve_lfp

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_GD = {"optimizer": "gd", "learning_rate": 3e-5, "lr_policy": "ntk", "lr_fraction": 1.0,
       "lr_recheck_every": 1000, "lr_retries": 6, "max_steps": 200_000, "stop_loss": 1e-6, "record_every": 1000}

PRESETS = {
    "fig1_smooth": {
        "command": "compare",
        "dataset": {"kind": "random_1d", "params": {"M": 12}, "seed": 0},
        "form": "one_d",
        "init": {"w": {"kind": "uniform", "a": -0.1, "b": 0.1},
                 "r": {"kind": "uniform", "a": -0.25, "b": 0.25},
                 "l": {"kind": "uniform", "a": -1.0, "b": 1.0}},
        "widths": [200, 1000, 5000],
        "seeds": [0, 1, 2, 3, 4],
        "train": dict(_GD),
        "lattice": {"L_prime": 20.0, "K": 2000},
        "ridge": {"epsilon": 1e-6, "intercept_mode": "unpenalized"},
        "test_grid": {"lo": -1.0, "hi": 1.0, "n": 800},
        "workers": 1,
    },
    "fig2_xor": {
        "command": "compare",
        "dataset": {"kind": "xor_2d", "params": {"a": 0.5}, "seed": 0},
        "form": "general_d",
        "init": {"w": {"kind": "normal", "var": 1.0},
                 "r": {"kind": "normal", "var": 0.49},
                 "l": {"kind": "uniform", "a": -4.0, "b": 4.0}},
        "widths": [200, 1000],
        "seeds": [0, 1, 2, 3, 4],
        "train": dict(_GD),
        "lattice": {"L_prime": 24.0, "K": 120},
        "ridge": {"epsilon": 1e-6, "intercept_mode": "unpenalized"},
        "test_grid": {"lo": -1.0, "hi": 1.0, "n": 40},
        "workers": 1,
    },
    "fig3_sweep": {
        "command": "sweep",
        "v_list": list(range(1, 11)),
        "n_train": 20,
        "n_test": 500,
        "width": 5000,
        "seed": 0,
        "delta": 0.1,
        "lattice_K": 2000,
        "learning_rate": 1e-4,
        "max_steps": 200_000,
        "stop_loss": 1e-6,
        "init": {"w": {"kind": "xavier_normal"}, "r": {"kind": "xavier_normal"},
                 "l": {"kind": "uniform", "a": -1.0, "b": 1.0}},
        "workers": 1,
    },
    "flow_suite": {
        "command": "flow-verify",
        "instances": 20,
        "seed": 0,
        "epsilon": 1e-8,
        "tol": 1e-5,
        "method": "rk4",
        "matrix_tests": 5,
        "matrix_shape": [5, 20],
        "matrix_tol": 1e-8,
        "perturbations": 100,
        "perturb_tol": 1e-10,
        "zero_data_probe": True,
        "rank_deficient_probe": True,
    },
}

PRESETS["fig1_rough"] = copy.deepcopy(PRESETS["fig1_smooth"])
PRESETS["fig1_rough"]["init"]["w"] = {"kind": "uniform", "a": -2.0, "b": 2.0}
PRESETS["fig1_rough"]["init"]["r"] = {"kind": "uniform", "a": -2.0, "b": 2.0}
PRESETS["fig4_asym"] = copy.deepcopy(PRESETS["fig2_xor"])
PRESETS["fig4_asym"]["dataset"] = {"kind": "asym_2d", "params": {"M": 5}, "seed": 0}

DEFAULT_PRESET = {"compare": "fig1_smooth", "sweep": "fig3_sweep", "flow-verify": "flow_suite"}

# widths at the scale of the original figures; slow on a desk machine
PAPER_SCALE = {"widths": [500, 16000], "seeds": list(range(10))}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config_file(path) -> dict:
    """A JSON config, or a run manifest whose ``config`` block is re-used verbatim."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "manifest_version" in raw:
        return raw["config"]
    return raw


def resolve_config(command: str, raw: dict | None = None, overrides: dict | None = None) -> dict:
    """Preset (named in ``raw["preset"]`` or the command default) overridden field-by-field."""
    raw = dict(raw or {})
    name = raw.pop("preset", None) or DEFAULT_PRESET.get(command)
    if name is not None and name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[name] if name else {"command": command}
    if base.get("command", command) != command:
        raise ConfigError(f"preset {name!r} belongs to '{base['command']}', not '{command}'")
    if raw.get("command", command) != command:
        raise ConfigError(f"config was written for '{raw['command']}', not '{command}'")
    cfg = merge(base, raw)
    cfg = merge(cfg, overrides or {})
    cfg["command"] = command
    return cfg


# ---------------------------------------------------------------------------
# Manifests and deterministic output
# ---------------------------------------------------------------------------


def version_string() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                              text=True, timeout=5, cwd=Path(__file__).parent).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_outputs(out_dir, files: dict, command: str, config: dict, datasets: dict | None = None) -> dict:
    """Write ``files`` (name -> text) and a ``manifest.json`` that can re-run the command."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    manifest = {
        "manifest_version": 1,
        "command": command,
        "config": config,
        "seeds": _seeds_of(config),
        "version": version_string(),
        "datasets": datasets or {},
        "outputs": {name: sha256_text(text) for name, text in sorted(files.items()) if name.endswith(".csv")},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _seeds_of(config: dict) -> list:
    seeds = list(config.get("seeds", []))
    for key in ("seed",):
        if key in config:
            seeds.append(config[key])
    ds = config.get("dataset", {})
    if isinstance(ds, dict) and "seed" in ds:
        seeds.append(ds["seed"])
    return seeds


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_num(row.get(c, "")) for c in columns))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# NN vs LFP comparison
# ---------------------------------------------------------------------------

CELL_COLUMNS = ("width", "seed", "A", "B", "learning_rate", "final_learning_rate", "train_loss", "steps",
                "stopped_by", "L1", "L2", "status")
SUMMARY_COLUMNS = ("width", "n_ok", "mean_L1", "mean_L2")


def dataset_from_config(spec: dict) -> Dataset:
    if "path" in spec:
        if not Path(spec["path"]).is_file():
            raise ConfigError(f"dataset file {spec['path']} does not exist")
        return Dataset.load(spec["path"])
    try:
        return gen_data(spec["kind"], spec.get("params", {}), int(spec.get("seed", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad dataset spec {spec!r}: {exc}") from exc


def evaluation_grid(spec: dict, d: int) -> np.ndarray:
    axis = np.linspace(spec["lo"], spec["hi"], int(spec["n"]))
    if d == 1:
        return axis.reshape(-1, 1)
    if d == 2:
        X1, X2 = np.meshgrid(axis, axis)       # row i <-> x2 = axis[i]
        return np.stack([X1.reshape(-1), X2.reshape(-1)], axis=1)
    raise ConfigError("test grids are only defined for d = 1 or 2")


def validate_compare(cfg: dict) -> None:
    try:
        widths = [int(w) for w in cfg["widths"]]
        seeds = [int(s) for s in cfg["seeds"]]
        InitSpec.parse({**cfg["init"], "seed": 0})
        t = cfg["train"]
        TrainConfig(t["optimizer"], float(t["learning_rate"]), int(t["max_steps"]), float(t["stop_loss"]),
                    record_every=int(t["record_every"]))
        RidgeConfig(float(cfg["ridge"]["epsilon"]), cfg["ridge"]["intercept_mode"])
        float(cfg["lattice"]["L_prime"]), int(cfg["lattice"]["K"])
        if t.get("lr_policy", "fixed") not in ("fixed", "ntk"):
            raise ValueError(f"unknown lr_policy {t['lr_policy']!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid compare config: {exc}") from exc
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    if not widths or any(w < 2 or w % 2 for w in widths):
        raise ConfigError("widths must be non-empty even integers >= 2 (ASI doubles a base width)")


def network_train_config(tc: dict, net, data: Dataset) -> TrainConfig:
    """TrainConfig from a config ``train`` block.

    ``lr_policy: ntk`` starts at ``lr_fraction / lambda_max`` of the tangent kernel and, for GD,
    re-checks that cap every ``lr_recheck_every`` steps.
    """
    ntk = tc.get("lr_policy", "fixed") == "ntk"
    frac = float(tc.get("lr_fraction", 1.0))
    lr = stable_learning_rate(net, data, frac) if ntk else float(tc["learning_rate"])
    return TrainConfig(tc["optimizer"], lr, int(tc["max_steps"]), float(tc["stop_loss"]),
                       record_every=int(tc["record_every"]),
                       kernel_fraction=frac if ntk and tc["optimizer"] == "gd" else 0.0,
                       kernel_recheck_every=int(tc.get("lr_recheck_every", 1000)))


def _compare_cell(cfg: dict, data: Dataset, width: int, seed: int, keep_outputs: bool) -> dict:
    row = {"width": width, "seed": seed}
    t0 = time.perf_counter()
    try:
        spec = InitSpec.parse({**cfg["init"], "seed": seed})
        net = apply_asi(init_net(data.d, width // 2, spec, cfg["form"]))
        c = coefficients_from_init(net)
        tc = cfg["train"]
        tcfg = network_train_config(tc, net, data)
        res = train_with_backoff(net, data, tcfg, int(tc.get("lr_retries", 0)))
        lattice = build_lattice(data.d, float(cfg["lattice"]["L_prime"]), int(cfg["lattice"]["K"]))
        _, lfp = solve_lfp(data, lattice, c, RidgeConfig(float(cfg["ridge"]["epsilon"]),
                                                         cfg["ridge"]["intercept_mode"]))
        Xt = evaluation_grid(cfg["test_grid"], data.d)
        h_nn, h_lfp = res.net(Xt), predict(lfp, Xt)
        gap = np.abs(h_nn - h_lfp)
        row.update(A=c.A, B=c.B, learning_rate=tcfg.learning_rate, final_learning_rate=res.learning_rate,
                   train_loss=res.final_loss, steps=res.steps,
                   stopped_by=res.stopped_by, L1=float(np.sum(gap)), L2=float(np.sqrt(np.sum(gap ** 2))),
                   status="ok")
        if keep_outputs:
            row["_outputs"] = (Xt, h_nn, h_lfp)
    except Exception as exc:  # a failed cell is recorded, the report is still emitted
        log.error("compare cell width=%d seed=%d failed: %s", width, seed, exc)
        row.update(L1=np.nan, L2=np.nan, status=f"error: {type(exc).__name__}: {exc}".replace(",", ";"))
    row["_runtime"] = time.perf_counter() - t0
    return row


@dataclass
class ComparisonReport:
    cells: list
    widths: list
    config: dict
    data: Dataset
    runtime: dict = field(default_factory=dict)

    def aggregate(self) -> list:
        out = []
        for w in self.widths:
            ok = [r for r in self.cells if r["width"] == w and r["status"] == "ok"]
            out.append({
                "width": w,
                "n_ok": len(ok),
                "mean_L1": float(np.mean([r["L1"] for r in ok])) if ok else np.nan,
                "mean_L2": float(np.mean([r["L2"] for r in ok])) if ok else np.nan,
            })
        return out

    def l2_strictly_decreasing(self) -> bool:
        vals = [r["mean_L2"] for r in self.aggregate()]
        return bool(all(np.isfinite(vals)) and all(b < a for a, b in zip(vals, vals[1:])))

    def cells_csv(self) -> str:
        return rows_csv(self.cells, CELL_COLUMNS)

    def summary_csv(self) -> str:
        return rows_csv(self.aggregate(), SUMMARY_COLUMNS)

    def summary(self) -> dict:
        return {"widths": self.widths, "aggregate": self.aggregate(),
                "l2_strictly_decreasing": self.l2_strictly_decreasing(), "runtime_seconds": self.runtime}

    def plots(self) -> dict:
        files = {}
        agg = self.aggregate()
        files["discrepancy.svg"] = line_plot(
            [Series([a["width"] for a in agg], [a["mean_L1"] for a in agg], "mean L1"),
             Series([a["width"] for a in agg], [a["mean_L2"] for a in agg], "mean L2")],
            "NN vs LFP discrepancy", "width", "discrepancy")
        for r in self.cells:
            if "_outputs" not in r:
                continue
            Xt, h_nn, h_lfp = r["_outputs"]
            w = r["width"]
            if self.data.d == 1:
                files[f"overlay_w{w}.svg"] = line_plot(
                    [Series(Xt[:, 0], h_nn, "NN output"), Series(Xt[:, 0], h_lfp, "LFP solution", dashed=True),
                     Series(self.data.X[:, 0], self.data.y, "training points", "scatter", "black")],
                    f"width {w}, seed {r['seed']}", "x", "h(x)")
            else:
                n = int(self.config["test_grid"]["n"])
                lo, hi = self.config["test_grid"]["lo"], self.config["test_grid"]["hi"]
                ext = (lo, hi, lo, hi)
                files[f"heatmap_nn_w{w}.svg"] = heatmap(h_nn.reshape(n, n), ext, f"NN output, width {w}", self.data.X)
                files[f"heatmap_lfp_w{w}.svg"] = heatmap(h_lfp.reshape(n, n), ext, f"LFP solution, width {w}",
                                                         self.data.X)
                files[f"scatter_w{w}.svg"] = identity_scatter(h_nn, h_lfp, f"width {w}: NN vs LFP",
                                                              "NN output", "LFP solution")
        return files


def run_compare(cfg: dict) -> ComparisonReport:
    validate_compare(cfg)
    data = dataset_from_config(cfg["dataset"])
    widths = [int(w) for w in cfg["widths"]]
    seeds = [int(s) for s in cfg["seeds"]]
    jobs = [(w, s, s == seeds[0]) for w in widths for s in seeds]
    t0 = time.perf_counter()
    workers = int(cfg.get("workers", 1))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_compare_cell, cfg, data, w, s, k) for w, s, k in jobs]
            cells = [f.result() for f in futures]
    else:
        cells = [_compare_cell(cfg, data, w, s, k) for w, s, k in jobs]
    runtime = {"total": time.perf_counter() - t0,
               "per_cell_mean": float(np.mean([c["_runtime"] for c in cells])),
               "per_cell_max": float(np.max([c["_runtime"] for c in cells]))}
    return ComparisonReport(cells, widths, cfg, data, runtime)


def compare_files(report: ComparisonReport) -> dict:
    files = {"compare_cells.csv": report.cells_csv(), "compare_summary.csv": report.summary_csv(),
             "report.json": json.dumps(report.summary(), indent=2, default=float) + "\n"}
    files.update(report.plots())
    return files


# ---------------------------------------------------------------------------
# Smoothness regimes
# ---------------------------------------------------------------------------


def spectral_energy_fraction(s: SpectralSolution, cutoff: float) -> float:
    """Share of ``sum |h(xi)|^2`` (intercept excluded) carried by ``|xi| > cutoff``."""
    energy = np.abs(s.coeffs) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    high = np.linalg.norm(s.lattice.xi_pos, axis=1) > cutoff
    return float(np.sum(energy[high]) / total)


def regime_coefficients(preset: str, width: int = 1000, seed: int = 0) -> LfpCoefficients:
    cfg = PRESETS[preset]
    spec = InitSpec.parse({**cfg["init"], "seed": seed})
    return coefficients_from_init(apply_asi(init_net(1, width // 2, spec, cfg["form"])))


def smoothness_regimes(data: Dataset, cutoff: float = 5.0, width: int = 1000, seed: int = 0) -> dict:
    """High-frequency energy of the LFP solution under the smooth and rough coefficient regimes."""
    cfg = PRESETS["fig1_smooth"]
    lattice = build_lattice(1, float(cfg["lattice"]["L_prime"]), int(cfg["lattice"]["K"]))
    out = {}
    for name in ("fig1_smooth", "fig1_rough"):
        c = regime_coefficients(name, width, seed)
        _, s = solve_lfp(data, lattice, c, RidgeConfig(float(cfg["ridge"]["epsilon"])))
        out[name] = {"A": c.A, "B": c.B, "high_fraction": spectral_energy_fraction(s, cutoff)}
    return out


# ---------------------------------------------------------------------------
# Flow verification suite
# ---------------------------------------------------------------------------

FLOW_COLUMNS = ("kind", "id", "d", "M", "K", "flow_vs_ridge", "flow_vs_closed", "ridge_vs_closed",
                "lstsq_vs_closed", "max_distance", "min_norm_gain", "status")


def random_instance(seed: int, min_sep: float = 0.15):
    """Small lattice problem: alternating d, ``M <= 6``, ``K <= 16``, separated points on the unit torus."""
    rng = np.random.default_rng(seed)
    d = 1 if seed % 2 == 0 else 2
    M = int(rng.integers(2, 7))
    K = int(rng.integers(4, 17)) if d == 1 else int(rng.integers(4, 9))
    while True:
        X = rng.uniform(0.0, 1.0, (M, d))
        D = np.abs(X[:, None, :] - X[None, :, :])
        D = np.minimum(D, 1.0 - D)
        dist = np.sqrt((D ** 2).sum(-1)) + np.eye(M)
        if dist.min() > min_sep:
            break
    y = rng.normal(size=M)
    c = LfpCoefficients(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)), d)
    return Dataset(X, y, domain=([0.0] * d, [1.0] * d)), build_lattice(d, 1.0, K), c


def _lattice_row(i: int, seed: int, cfg: dict) -> dict:
    data, lattice, c = random_instance(seed)
    row = {"kind": "lattice", "id": i, "d": data.d, "M": data.M, "K": lattice.K}
    rep = equivalence_report(data, lattice, c, epsilons=(float(cfg["epsilon"]),), method=cfg["method"])
    row.update(rep.distances)
    row["max_distance"] = rep.max_distance()
    rng = np.random.default_rng(seed + 10_000)
    base = weighted_norm(rep.closed, c)
    gains = []
    for _ in range(int(cfg["perturbations"])):
        delta = null_space_perturbation(data, lattice, c, rng, scale=float(rng.uniform(1e-3, 1.0)))
        gains.append(weighted_norm(rep.closed + delta, c) - base)
    row["min_norm_gain"] = float(min(gains)) if gains else 0.0
    ok = rep.flow_converged and row["max_distance"] < float(cfg["tol"]) and \
        row["min_norm_gain"] >= -float(cfg["perturb_tol"])
    row["status"] = "pass" if ok else "fail"
    return row


def _matrix_row(i: int, seed: int, cfg: dict) -> dict:
    rng = np.random.default_rng(seed + 20_000)
    m, n = (int(v) for v in cfg["matrix_shape"])
    P = rng.standard_normal((m, n))
    if i % 2:
        P = P + 1j * rng.standard_normal((m, n))
    p = LinearFlowProblem(P, rng.standard_normal(m), rng.standard_normal(n))
    closed = min_norm_closed_form(p)
    # independent route: least-squares minimum-norm correction
    corr = np.linalg.lstsq(p.P, p.residual(p.u_ini), rcond=None)[0]
    lam = np.linalg.eigvalsh(P @ P.conj().T)
    traj = integrate_linear_flow(p, dt=1.0 / lam[-1], T=60.0 / lam[0], tol=1e-14)
    scale = np.linalg.norm(closed)
    row = {"kind": "matrix", "id": i, "d": "", "M": m, "K": n,
           "flow_vs_closed": float(np.linalg.norm(traj.u_final - closed) / scale),
           "lstsq_vs_closed": float(np.linalg.norm(p.u_ini + corr - closed) / scale)}
    row["max_distance"] = max(row["flow_vs_closed"], row["lstsq_vs_closed"])
    row["status"] = "pass" if row["max_distance"] < float(cfg["matrix_tol"]) else "fail"
    return row


@dataclass
class FlowVerifyReport:
    rows: list
    runtime: float

    @property
    def passed(self) -> bool:
        return all(r["status"] in ("pass", "trivial", "precondition") for r in self.rows)

    def to_csv(self) -> str:
        return rows_csv(self.rows, FLOW_COLUMNS)

    def summary(self) -> dict:
        return {"passed": self.passed, "rows": len(self.rows),
                "failed": [r["id"] for r in self.rows if r["status"] == "fail"],
                "runtime_seconds": self.runtime}


def run_flow_verify(cfg: dict) -> FlowVerifyReport:
    try:
        base = int(cfg["seed"])
        n_inst, n_mat = int(cfg["instances"]), int(cfg["matrix_tests"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid flow-verify config: {exc}") from exc
    t0 = time.perf_counter()
    rows = []
    for i in range(n_inst):
        try:
            rows.append(_lattice_row(i, base + i, cfg))
        except Exception as exc:
            rows.append({"kind": "lattice", "id": i, "status": f"fail: {type(exc).__name__}"})
            log.error("instance %d: %s", i, exc)
    for i in range(n_mat):
        rows.append(_matrix_row(i, base + i, cfg))
    if cfg.get("zero_data_probe", True):
        # no constraints: flow, ridge and closed form all stay at the initialization
        rows.append({"kind": "zero_data", "id": 0, "M": 0, "max_distance": 0.0, "status": "trivial"})
    if cfg.get("rank_deficient_probe", True):
        rng = np.random.default_rng(base)
        P = rng.standard_normal((3, 8))
        P[2] = P[0] + P[1]
        try:
            LinearFlowProblem(P, np.ones(3), np.zeros(8))
            status = "fail"
        except RankDeficientError as exc:
            log.info("rank-deficient probe rejected: %s", exc)
            status = "precondition"
        rows.append({"kind": "rank_deficient", "id": 0, "M": 3, "K": 8, "status": status})
    return FlowVerifyReport(rows, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# FP-norm sweep
# ---------------------------------------------------------------------------


def sweep_config(cfg: dict) -> SweepConfig:
    fields = ("n_train", "n_test", "width", "seed", "delta", "lattice_K", "learning_rate",
              "max_steps", "stop_loss", "workers", "init")
    try:
        kw = {k: cfg[k] for k in fields if k in cfg}
        out = SweepConfig(v_list=tuple(int(v) for v in cfg["v_list"]), **kw)
        InitSpec.parse({**out.init, "seed": out.seed})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep config: {exc}") from exc
    if not out.v_list:
        raise ConfigError("v_list must be non-empty")
    if out.width < 2 or out.width % 2:
        raise ConfigError("width must be an even integer >= 2")
    return out


def run_sweep(cfg: dict) -> SweepResult:
    return fpnorm_sweep(cfg=sweep_config(cfg))


def sweep_files(result: SweepResult) -> dict:
    v = [r["v"] for r in result.rows]
    summary = result.summary()
    return {
        "sweep.csv": result.to_csv(),
        "summary.json": json.dumps(summary, indent=2, default=float) + "\n",
        "sweep.svg": dual_axis(v, [r["fp_norm_normalized"] for r in result.rows],
                               [r["test_loss"] for r in result.rows], "FP-norm and test loss vs frequency",
                               "v", "normalized FP-norm", "test loss"),
    }
