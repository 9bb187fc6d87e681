"""Two-layer ReLU network trained from scratch with full-batch GD or Adam."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, _points

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TwoLayerNet:
    """``h(x) = sum_i w_i relu(r_i.x - |r_i| l_i)``, or ``sum_i w_i relu(r_i (x - l_i))`` when ``form="one_d"``."""

    w: np.ndarray
    R: np.ndarray
    l: np.ndarray
    form: str = "general_d"

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        R = np.asarray(self.R, dtype=float)
        R = R.reshape(-1, 1) if R.ndim == 1 else R
        l = np.asarray(self.l, dtype=float).reshape(-1)
        if not (w.shape[0] == R.shape[0] == l.shape[0]):
            raise ValueError("w, R and l must have the same number of neurons")
        if self.form not in ("general_d", "one_d"):
            raise ValueError(f"unknown network form {self.form!r}")
        if self.form == "one_d" and R.shape[1] != 1:
            raise ValueError("one_d form requires d = 1")
        if not all(np.all(np.isfinite(a)) for a in (w, R, l)):
            raise ValueError("non-finite network parameter")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "l", l)

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.R.shape[1]

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)

    def to_json(self) -> str:
        return json.dumps({
            "form": self.form, "N": self.N, "d": self.d,
            "w": self.w.tolist(), "R": self.R.tolist(), "l": self.l.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "TwoLayerNet":
        raw = json.loads(text)
        return cls(np.array(raw["w"]), np.array(raw["R"]).reshape(raw["N"], raw["d"]),
                   np.array(raw["l"]), raw["form"])


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dist:
    """``uniform(a, b)``, ``normal(0, var)`` or ``xavier_normal``."""

    kind: str
    a: float = 0.0
    b: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal", "xavier_normal"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if self.kind == "uniform" and self.b < self.a:
            raise ValueError("uniform(a, b) needs a <= b")
        if self.kind == "normal" and self.var < 0:
            raise ValueError("variance must be non-negative")

    def sample(self, rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size=shape)
        if self.kind == "normal":
            return rng.normal(0.0, np.sqrt(self.var), size=shape)
        return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)

    def second_moment(self) -> float:
        if self.kind == "uniform":
            return (self.a ** 2 + self.a * self.b + self.b ** 2) / 3.0
        if self.kind == "normal":
            return self.var
        raise ValueError("second moment of xavier_normal depends on the layer shape")

    @classmethod
    def parse(cls, raw) -> "Dist":
        if isinstance(raw, Dist):
            return raw
        return cls(**raw)


@dataclass(frozen=True)
class InitSpec:
    w: Dist
    r: Dist
    l: Dist
    seed: int = 0

    @classmethod
    def parse(cls, raw: dict) -> "InitSpec":
        return cls(Dist.parse(raw["w"]), Dist.parse(raw["r"]), Dist.parse(raw["l"]), int(raw.get("seed", 0)))


def init_net(d: int, N: int, spec: InitSpec, form: str = "general_d") -> TwoLayerNet:
    if N < 1:
        raise ValueError("width must be at least 1")
    rng = np.random.default_rng(spec.seed)
    w = spec.w.sample(rng, (N,), fan_in=N, fan_out=1)
    R = spec.r.sample(rng, (N, d), fan_in=d, fan_out=N)
    l = spec.l.sample(rng, (N,), fan_in=N, fan_out=1)
    return TwoLayerNet(w, R, l, form)


def apply_asi(net: TwoLayerNet) -> TwoLayerNet:
    """Antisymmetric initialisation: pair every neuron with a copy carrying ``-w``."""
    return TwoLayerNet(
        np.concatenate([net.w, -net.w]),
        np.concatenate([net.R, net.R]),
        np.concatenate([net.l, net.l]),
        net.form,
    )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _preactivation(R, l, form, X):
    if form == "one_d":
        r = R[:, 0]
        return (X[:, :1] - l) * r, r
    norm = np.sqrt(np.sum(R * R, axis=1))
    return X @ R.T - norm * l, norm


def forward(net: TwoLayerNet, x) -> np.ndarray:
    X = _points(x, net.d)
    Z, _ = _preactivation(net.R, net.l, net.form, X)
    return np.maximum(Z, 0.0) @ net.w


def _loss_grad(w, R, l, form, X, y):
    # written as matvecs against a float mask; np.where on (M, N) arrays dominated the step time
    M = X.shape[0]
    if form == "one_d":
        Z = X[:, :1] - l
        Z *= R[:, 0]
    else:
        norm = np.sqrt(np.sum(R * R, axis=1))
        Z = X @ R.T
        Z -= norm * l
    on = (Z > 0).astype(float)
    act = np.maximum(Z, 0.0)
    err = act @ w - y
    value = 0.5 * float(err @ err) / M

    e = err / M
    gw = e @ act
    s = e @ on                                  # sum_i e_i 1[z_ij > 0]
    col = w * s
    if form == "one_d":
        gR = (w * ((e * X[:, 0]) @ on - l * s))[:, None]
        gl = -R[:, 0] * col
    else:
        safe = np.where(norm > 0, norm, 1.0)
        unit = np.where(norm[:, None] > 0, R / safe[:, None], 0.0)
        gR = w[:, None] * (on.T @ (e[:, None] * X)) - (col * l)[:, None] * unit
        gl = -norm * col
    return value, {"w": gw, "R": gR, "l": gl}


def loss_and_grad(net: TwoLayerNet, data: Dataset):
    """Loss ``(1/2M) sum_i (h(x_i) - y_i)^2`` and its gradient as a dict ``{w, R, l}``.

    ReLU'(0) is taken as 0, and for ``r = 0`` (general form) the direction
    term ``r/|r|`` is taken as 0.
    """
    if data.d != net.d:
        raise ValueError(f"network expects d={net.d}, data has d={data.d}")
    return _loss_grad(net.w, net.R, net.l, net.form, data.X, data.y)


def output_jacobian(net: TwoLayerNet, x) -> np.ndarray:
    """Rows ``dh(x_i)/d(w, R, l)`` flattened in that order, shape ``(M, N (2 + d))``."""
    X = _points(x, net.d)
    Z, norm = _preactivation(net.R, net.l, net.form, X)
    act = np.maximum(Z, 0.0)
    on = (Z > 0) * net.w
    if net.form == "one_d":
        JR = on * (X[:, :1] - net.l)
        Jl = -on * net.R[:, 0]
    else:
        safe = np.where(norm > 0, norm, 1.0)
        unit = np.where(norm[:, None] > 0, net.R / safe[:, None], 0.0)
        # (M, N, d): w 1[z>0] (x - l r/|r|)
        JR = (on[:, :, None] * (X[:, None, :] - net.l[None, :, None] * unit[None])).reshape(X.shape[0], -1)
        Jl = -on * norm
    return np.hstack([act, JR, Jl])


def ntk_gram(net: TwoLayerNet, x) -> np.ndarray:
    """Empirical tangent kernel ``J J^T / M``; its spectrum is that of the Gauss-Newton loss Hessian."""
    J = output_jacobian(net, x)
    return J @ J.T / J.shape[0]


def stable_learning_rate(net: TwoLayerNet, data: Dataset, fraction: float = 1.0) -> float:
    """``fraction / lambda_max`` of the tangent kernel at ``net``; GD is locally stable below ``2 / lambda_max``."""
    lam = float(np.linalg.eigvalsh(ntk_gram(net, data.X))[-1])
    if not lam > 0:
        raise ValueError("tangent kernel vanishes; no curvature to set a step size from")
    return fraction / lam


def loss(net: TwoLayerNet, data: Dataset) -> float:
    err = forward(net, data.X) - data.y
    return 0.5 * float(err @ err) / data.M


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "gd"
    learning_rate: float = 3e-5
    max_steps: int = 100_000
    stop_loss: float = 1e-6
    loss_normalization: str = "half_mean"
    record_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kernel_fraction: float = 0.0        # GD only: cap lr at this / lambda_max(tangent kernel); 0 disables
    kernel_recheck_every: int = 1000

    def __post_init__(self):
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.loss_normalization != "half_mean":
            raise ValueError("only half_mean loss normalization is supported")
        if self.max_steps < 0 or self.record_every < 1 or self.kernel_recheck_every < 1:
            raise ValueError("invalid step counts")
        if self.kernel_fraction < 0:
            raise ValueError("kernel_fraction must be non-negative")


@dataclass
class TrainResult:
    net: TwoLayerNet
    history: list = field(default_factory=list)   # (step, loss)
    steps: int = 0
    final_loss: float = np.inf
    stopped_by: str = "max_steps"
    learning_rate: float = 0.0

    def history_csv(self) -> str:
        return "step,loss\n" + "".join(f"{s},{v!r}\n" for s, v in self.history)


def train(net: TwoLayerNet, data: Dataset, cfg: TrainConfig, frozen: tuple = ()) -> TrainResult:
    """Full-batch training; ``frozen`` names parameter groups held fixed (e.g. ``("R", "l")``)."""
    params = {"w": net.w.copy(), "R": net.R.copy(), "l": net.l.copy()}
    trainable = [k for k in ("w", "R", "l") if k not in frozen]
    m = {k: np.zeros_like(params[k]) for k in trainable}
    v = {k: np.zeros_like(params[k]) for k in trainable}
    history = []
    init_loss = None
    lr = cfg.learning_rate
    stopped = "max_steps"
    step = 0
    for step in range(cfg.max_steps + 1):
        value, grads = _loss_grad(params["w"], params["R"], params["l"], net.form, data.X, data.y)
        if init_loss is None:
            init_loss = value
        if not np.isfinite(value) or value > 1e6 * max(init_loss, 1e-300):
            raise TrainingDivergedError(f"loss {value:.3e} at step {step} (initial {init_loss:.3e})")
        if step % cfg.record_every == 0:
            history.append((step, value))
        if value < cfg.stop_loss:
            stopped = "stop_loss"
            break
        if step == cfg.max_steps:
            break
        if cfg.optimizer == "gd":
            if cfg.kernel_fraction > 0 and step > 0 and step % cfg.kernel_recheck_every == 0:
                # a narrow net's kernel grows as it moves; keep the step inside the local stability limit
                current = TwoLayerNet(params["w"], params["R"], params["l"], net.form)
                lam = float(np.linalg.eigvalsh(ntk_gram(current, data.X))[-1])
                if lam > 0:
                    lr = min(lr, cfg.kernel_fraction / lam)
            for k in trainable:
                params[k] -= lr * grads[k]
        else:
            t = step + 1
            c1 = 1.0 - cfg.beta1 ** t
            c2 = 1.0 - cfg.beta2 ** t
            for k in trainable:
                g = grads[k]
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g
                params[k] -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + cfg.adam_eps)
    if not history or history[-1][0] != step:
        history.append((step, value))
    trained = TwoLayerNet(params["w"], params["R"], params["l"], net.form)
    return TrainResult(trained, history, step, value, stopped, lr)


def train_with_backoff(net: TwoLayerNet, data: Dataset, cfg: TrainConfig, retries: int = 0,
                       frozen: tuple = ()) -> TrainResult:
    """``train``, restarting from ``net`` at half the learning rate after each divergence.

    The tangent-kernel step is only locally stable; a narrow net can leave that regime in a few steps.
    """
    for attempt in range(retries + 1):
        try:
            return train(net, data, cfg, frozen)
        except TrainingDivergedError:
            if attempt == retries:
                raise
            log.warning("diverged at learning rate %.3g; retrying at half", cfg.learning_rate)
            cfg = replace(cfg, learning_rate=0.5 * cfg.learning_rate)


def lp_discrepancy(net, lfp_solution, X_test, p: int = 2) -> float:
    """``(sum_i |h_N(x_i) - h_LFP(x_i)|^p)^(1/p)``; a plain sum, not a mean."""
    from .solver import predict

    a = net(X_test) if callable(net) else np.asarray(net, dtype=float)
    b = predict(lfp_solution, X_test) if not isinstance(lfp_solution, np.ndarray) else lfp_solution
    return float(np.sum(np.abs(a - b) ** p) ** (1.0 / p))
